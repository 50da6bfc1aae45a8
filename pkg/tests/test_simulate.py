from __future__ import annotations

import numpy as np
import pytest

from afncd.annotations import load_dataset
from afncd.dataset import extract_rr, segment_episodes
from afncd.simulate import (
    AF_RHYTHM,
    NORMAL_RHYTHM,
    EpisodeSpec,
    default_schedule,
    simulate_dataset,
    simulate_series,
)


def test_series_marks_match_the_requested_schedule():
    schedule = [
        EpisodeSpec(NORMAL_RHYTHM, 40),
        EpisodeSpec(AF_RHYTHM, 25),
        EpisodeSpec(NORMAL_RHYTHM, 10),
    ]
    series = simulate_series("t00", schedule, seed=4)
    assert len(series.beat_times) == 75 + 1
    episodes = segment_episodes(extract_rr(series), "t00")
    assert [(e.rhythm_label, len(e.intervals)) for e in episodes] == [
        (NORMAL_RHYTHM, 40),
        (AF_RHYTHM, 25),
        (NORMAL_RHYTHM, 10),
    ]
    for episode in episodes:
        assert all(50 <= rr <= 3000 for rr in episode.intervals)


def test_af_intervals_spread_wider_than_normal():
    schedule = [EpisodeSpec(NORMAL_RHYTHM, 300), EpisodeSpec(AF_RHYTHM, 300)]
    series = simulate_series("t01", schedule, seed=4)
    normal, af = segment_episodes(extract_rr(series), "t01")
    assert np.std(np.diff(af.intervals)) > 3 * np.std(np.diff(normal.intervals))


def test_simulation_is_per_record_reproducible():
    schedule = [EpisodeSpec(NORMAL_RHYTHM, 20), EpisodeSpec(AF_RHYTHM, 20)]
    a = simulate_series("rec", schedule, seed=7)
    b = simulate_series("rec", schedule, seed=7)
    assert a == b
    other = simulate_series("other", schedule, seed=7)
    assert other.beat_times != a.beat_times


def test_default_schedule_alternates_rhythms():
    rng = np.random.default_rng(0)
    schedule = default_schedule(rng, n_episodes=6)
    rhythms = [e.rhythm for e in schedule]
    assert len(schedule) == 6
    assert all(x != y for x, y in zip(rhythms, rhythms[1:]))
    assert {NORMAL_RHYTHM, AF_RHYTHM} == set(rhythms)
    assert all(150 <= e.n_intervals <= 400 for e in schedule)


def test_episode_spec_rejects_empty():
    with pytest.raises(ValueError):
        EpisodeSpec(NORMAL_RHYTHM, 0)


@pytest.mark.parametrize("file_format", ["binary", "csv"])
def test_dataset_round_trips_through_disk(tmp_path, file_format):
    direct = simulate_dataset(
        tmp_path / file_format, n_records=3, seed=11, file_format=file_format
    )
    loaded = load_dataset(tmp_path / file_format)
    assert [s.record_id for s in loaded] == [s.record_id for s in direct]
    for got, want in zip(loaded, direct):
        assert got.beat_times == want.beat_times
        assert got.rhythm_marks == want.rhythm_marks
        assert got.sampling_rate == want.sampling_rate


def test_binary_and_csv_formats_carry_identical_series(tmp_path):
    binary = simulate_dataset(tmp_path / "b", n_records=2, seed=3)
    text = simulate_dataset(tmp_path / "c", n_records=2, seed=3, file_format="csv")
    assert binary == text
    assert {p.suffix for p in (tmp_path / "b").iterdir()} == {
        ".atr",
        ".qrs",
        ".hea",
    }
    assert {p.suffix for p in (tmp_path / "c").iterdir()} == {".csv"}


def test_record_content_is_stable_as_the_dataset_grows(tmp_path):
    small = simulate_dataset(tmp_path / "s", n_records=2, seed=5)
    large = simulate_dataset(tmp_path / "l", n_records=6, seed=5)
    assert large[:2] == small
