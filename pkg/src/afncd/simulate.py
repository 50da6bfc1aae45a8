"""Synthetic Holter-like records for demos and integration tests.

Two beat-interval generators: a regular rhythm whose RR length drifts
on a slow sine with a little beat noise, and a fibrillation-like rhythm
with heavy independent jitter. After differencing, the first stays
small and smooth while the second stays wide-band, which is the
contrast the compression classifier keys on.

A record is a schedule of episodes, each tagged ``(N`` or ``(AFIB``.
``simulate_series`` builds the in-memory beat series; the writers
produce the binary (``.qrs``/``.atr``/``.hea``) and CSV on-disk
formats, so the whole ingestion path can be exercised without any real
recording.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import (
    Annotation,
    BeatSeries,
    DEFAULT_SAMPLING_RATE,
    encode_annotation_stream,
    write_csv_record,
)

NORMAL_RHYTHM = "(N"
AF_RHYTHM = "(AFIB"

BEAT_CODE = 1  # normal beat
RHYTHM_CODE = 28  # rhythm change annotation carrying the aux text


@dataclass(frozen=True)
class EpisodeSpec:
    """One stretch of a single rhythm, measured in RR intervals."""

    rhythm: str
    n_intervals: int

    def __post_init__(self):
        if self.n_intervals < 1:
            raise ValueError("episode must contain at least one interval")


def _normal_rr(rng: np.random.Generator, n: int) -> np.ndarray:
    # slow sway around 210 samples with tiny beat-to-beat noise
    phase = rng.uniform(0, 2 * np.pi)
    t = np.arange(n)
    rr = 210 + 18 * np.sin(2 * np.pi * t / 23 + phase)
    return (rr + rng.integers(-2, 3, size=n)).astype(np.int64)


def _af_rr(rng: np.random.Generator, n: int) -> np.ndarray:
    return 210 + rng.integers(-80, 81, size=n).astype(np.int64)


def default_schedule(
    rng: np.random.Generator,
    n_episodes: int = 8,
    min_intervals: int = 150,
    max_intervals: int = 400,
) -> list[EpisodeSpec]:
    """Alternating (N/(AFIB episodes with randomized lengths."""
    first_af = bool(rng.integers(0, 2))
    out = []
    for i in range(n_episodes):
        rhythm = AF_RHYTHM if (i % 2 == 0) == first_af else NORMAL_RHYTHM
        out.append(
            EpisodeSpec(rhythm, int(rng.integers(min_intervals, max_intervals + 1)))
        )
    return out


def _record_rng(seed: int, record_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(record_id.encode())])


def simulate_series(
    record_id: str,
    episodes: list[EpisodeSpec],
    seed: int = 0,
    sampling_rate: int = DEFAULT_SAMPLING_RATE,
    start_sample: int = 1000,
) -> BeatSeries:
    """Generate one record following an episode schedule.

    Every episode's rhythm mark sits exactly on its first beat, so each
    of its intervals is labeled by the mark at the interval's left
    endpoint.
    """
    if not episodes:
        raise ValueError("schedule is empty")
    rng = _record_rng(seed, record_id)
    beat_times = [start_sample]
    marks: list[tuple[int, str]] = []
    for ep in episodes:
        marks.append((beat_times[-1], ep.rhythm))
        if ep.rhythm == AF_RHYTHM:
            rr = _af_rr(rng, ep.n_intervals)
        else:
            rr = _normal_rr(rng, ep.n_intervals)
        t = beat_times[-1] + np.cumsum(rr)
        beat_times.extend(int(v) for v in t)
    return BeatSeries(
        record_id=record_id,
        sampling_rate=sampling_rate,
        beat_times=tuple(beat_times),
        rhythm_marks=tuple(marks),
    )


def write_binary_record(series: BeatSeries, dataset_dir: str | Path) -> None:
    """Write one record as ``.qrs``, ``.atr`` and ``.hea`` files."""
    dataset_dir = Path(dataset_dir)
    dataset_dir.mkdir(parents=True, exist_ok=True)
    qrs = [Annotation(t, BEAT_CODE) for t in series.beat_times]
    atr = [
        Annotation(t, RHYTHM_CODE, aux=text) for t, text in series.rhythm_marks
    ]
    (dataset_dir / f"{series.record_id}.qrs").write_bytes(
        encode_annotation_stream(qrs)
    )
    (dataset_dir / f"{series.record_id}.atr").write_bytes(
        encode_annotation_stream(atr)
    )
    (dataset_dir / f"{series.record_id}.hea").write_text(
        f"{series.record_id} 2 {series.sampling_rate} 0\n", encoding="utf-8"
    )


def write_csv_record_file(series: BeatSeries, dataset_dir: str | Path) -> None:
    """Write one record in the CSV fallback format."""
    dataset_dir = Path(dataset_dir)
    dataset_dir.mkdir(parents=True, exist_ok=True)
    path = dataset_dir / f"{series.record_id}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_csv_record(series, fh)


def simulate_dataset(
    dataset_dir: str | Path,
    n_records: int = 10,
    seed: int = 0,
    file_format: str = "binary",
    n_episodes: int = 8,
    min_intervals: int = 150,
    max_intervals: int = 400,
) -> list[BeatSeries]:
    """Write a directory of synthetic records and return the series.

    Record ids are ``s00``, ``s01``, ...; each gets its own RNG stream
    derived from ``seed`` and its id, so single records are reproducible
    independent of how many are generated.
    """
    if file_format not in ("binary", "csv"):
        raise ValueError(f"unknown file format {file_format!r}")
    out = []
    for i in range(n_records):
        record_id = f"s{i:02d}"
        schedule = default_schedule(
            _record_rng(seed + 1, record_id),
            n_episodes=n_episodes,
            min_intervals=min_intervals,
            max_intervals=max_intervals,
        )
        series = simulate_series(record_id, schedule, seed=seed)
        if file_format == "binary":
            write_binary_record(series, dataset_dir)
        else:
            write_csv_record_file(series, dataset_dir)
        out.append(series)
    return out
