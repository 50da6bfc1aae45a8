"""Turn beat series into labeled fixed-length interval windows.

The pipeline is: beat times -> RR intervals labeled with the rhythm
active at their left endpoint -> maximal single-rhythm episodes ->
non-overlapping windows of ``m_seq`` RR or first-differenced (dRR)
values. Windows never span a rhythm transition and each window carries
a binary AF / non-AF label derived from its episode's rhythm text.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np

from .annotations import BeatSeries

MEASURES = ("rr", "drr")
M_SEQ_STANDARD = (32, 64, 128)

# default physiological gate on RR, in samples: 0.2 s to 12 s at 250 Hz
DEFAULT_RR_GATE = (50, 3000)

# rhythm texts mapped to the AF class; everything else is non-AF
DEFAULT_AF_LABELS = frozenset({"(AFIB"})

LABEL_AF = "AF"
LABEL_NON_AF = "non-AF"


class DatasetError(ValueError):
    """Beat series cannot be turned into labeled windows."""


@dataclass(frozen=True)
class LabeledInterval:
    """One RR interval with the rhythm at its left endpoint.

    ``valid`` is False when the interval fell outside the physiological
    gate; invalid intervals never enter an episode and break runs.
    """

    rr: int
    rhythm: str
    valid: bool = True


@dataclass(frozen=True)
class RhythmEpisode:
    """Maximal run of consecutive valid intervals under one rhythm."""

    record_id: str
    rhythm_label: str
    intervals: tuple[int, ...]


@dataclass(frozen=True)
class IntervalWindow:
    """One classification sample: ``m_seq`` RR or dRR values."""

    record_id: str
    class_label: str  # LABEL_AF or LABEL_NON_AF
    measure: str  # "rr" or "drr"
    m_seq: int
    values: tuple[int, ...]
    window_index: int

    @property
    def is_af(self) -> bool:
        return self.class_label == LABEL_AF


def extract_rr(
    series: BeatSeries,
    gate: tuple[int, int] = DEFAULT_RR_GATE,
) -> list[LabeledInterval]:
    """Compute labeled RR intervals from a beat series.

    ``rr[i] = beat_times[i+1] - beat_times[i]``, labeled with the rhythm
    mark in effect at ``beat_times[i]``. Intervals outside ``gate``
    (inclusive bounds, in samples) are flagged invalid. A rhythm mark
    must cover the first interval or :class:`DatasetError` is raised.
    """
    beats = series.beat_times
    if len(beats) < 2:
        raise DatasetError(
            f"record {series.record_id!r}: need at least 2 beats for an "
            f"interval, got {len(beats)}"
        )
    marks = series.rhythm_marks
    if not marks or marks[0][0] > beats[0]:
        raise DatasetError(
            f"record {series.record_id!r}: no rhythm mark at or before the "
            f"first interval"
        )
    lo, hi = gate
    out: list[LabeledInterval] = []
    mark_pos = 0
    rhythm = marks[0][1]
    for i in range(len(beats) - 1):
        left = beats[i]
        while mark_pos + 1 < len(marks) and marks[mark_pos + 1][0] <= left:
            mark_pos += 1
            rhythm = marks[mark_pos][1]
        rr = beats[i + 1] - left
        out.append(LabeledInterval(rr, rhythm, valid=lo <= rr <= hi))
    return out


def segment_episodes(
    intervals: list[LabeledInterval], record_id: str
) -> list[RhythmEpisode]:
    """Split labeled intervals into maximal single-rhythm episodes.

    A run ends at a rhythm change or at an invalid interval; invalid
    intervals belong to no episode.
    """
    episodes: list[RhythmEpisode] = []
    run: list[int] = []
    run_rhythm = None
    for iv in intervals:
        if not iv.valid or iv.rhythm != run_rhythm:
            if run:
                episodes.append(RhythmEpisode(record_id, run_rhythm, tuple(run)))
                run = []
            run_rhythm = iv.rhythm if iv.valid else None
        if iv.valid:
            run.append(iv.rr)
    if run:
        episodes.append(RhythmEpisode(record_id, run_rhythm, tuple(run)))
    return episodes


def window_episodes(
    episodes: list[RhythmEpisode],
    m_seq: int,
    measure: str,
    af_labels: frozenset[str] = DEFAULT_AF_LABELS,
) -> list[IntervalWindow]:
    """Chunk episodes into non-overlapping windows of ``m_seq`` values.

    For measure ``"drr"`` each episode's RR run is first differenced
    (``drr[i] = rr[i+1] - rr[i]``) before chunking, so no difference is
    ever taken across an episode boundary. Remainders shorter than
    ``m_seq`` are discarded. Window indices count emitted windows per
    record in episode order.
    """
    if measure not in MEASURES:
        raise DatasetError(f"unknown measure {measure!r}, expected {MEASURES}")
    if m_seq < 1:
        raise DatasetError(f"m_seq must be positive, got {m_seq}")
    if m_seq not in M_SEQ_STANDARD:
        warnings.warn(
            f"non-standard window length m_seq={m_seq}", stacklevel=2
        )
    windows: list[IntervalWindow] = []
    counters: dict[str, int] = {}
    for ep in episodes:
        vals = ep.intervals
        if measure == "drr":
            vals = tuple(vals[i + 1] - vals[i] for i in range(len(vals) - 1))
        label = LABEL_AF if ep.rhythm_label in af_labels else LABEL_NON_AF
        for start in range(0, len(vals) - m_seq + 1, m_seq):
            idx = counters.get(ep.record_id, 0)
            counters[ep.record_id] = idx + 1
            windows.append(
                IntervalWindow(
                    record_id=ep.record_id,
                    class_label=label,
                    measure=measure,
                    m_seq=m_seq,
                    values=vals[start : start + m_seq],
                    window_index=idx,
                )
            )
    return windows


def windows_from_series(
    series: BeatSeries,
    m_seq: int,
    measure: str,
    gate: tuple[int, int] = DEFAULT_RR_GATE,
    af_labels: frozenset[str] = DEFAULT_AF_LABELS,
) -> list[IntervalWindow]:
    """Full extraction chain for one record."""
    intervals = extract_rr(series, gate=gate)
    episodes = segment_episodes(intervals, series.record_id)
    return window_episodes(episodes, m_seq, measure, af_labels=af_labels)


def check_delta_bound(
    windows: list[IntervalWindow], sampling_rate: int
) -> list[IntervalWindow]:
    """Return the dRR windows whose values leave the +-3*fs sanity band.

    On plausible Holter data this list is empty; a non-empty result
    usually means differencing crossed an episode boundary upstream.
    """
    bound = 3 * sampling_rate
    return [
        w
        for w in windows
        if w.measure == "drr" and any(abs(v) > bound for v in w.values)
    ]


def window_values_matrix(windows: list[IntervalWindow]) -> np.ndarray:
    """Stack window values into an ``(n_windows, m_seq)`` int64 array."""
    if not windows:
        return np.empty((0, 0), dtype=np.int64)
    return np.asarray([w.values for w in windows], dtype=np.int64)


def window_id(window: IntervalWindow) -> str:
    """Stable identity used in matrices, manifests and predictions."""
    return (
        f"{window.record_id}:{window.measure}:{window.m_seq}"
        f":{window.window_index:06d}"
    )


MANIFEST_HEADER = (
    "record_id",
    "window_index",
    "measure",
    "m_seq",
    "class_label",
    "values",
)


def write_windows_manifest(
    windows: list[IntervalWindow], stream: io.TextIOBase
) -> None:
    """Write the windows manifest CSV (values joined by ``';'``)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for w in windows:
        writer.writerow(
            (
                w.record_id,
                w.window_index,
                w.measure,
                w.m_seq,
                w.class_label,
                ";".join(str(v) for v in w.values),
            )
        )


def read_windows_manifest(stream: io.TextIOBase) -> list[IntervalWindow]:
    """Inverse of :func:`write_windows_manifest`."""
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(header) != MANIFEST_HEADER:
        raise DatasetError(f"bad windows manifest header: {header!r}")
    out = []
    for row in reader:
        if not row:
            continue
        record_id, window_index, measure, m_seq, class_label, values = row
        out.append(
            IntervalWindow(
                record_id=record_id,
                class_label=class_label,
                measure=measure,
                m_seq=int(m_seq),
                values=tuple(int(v) for v in values.split(";")),
                window_index=int(window_index),
            )
        )
    return out
