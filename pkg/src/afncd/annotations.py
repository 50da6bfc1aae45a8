"""Readers for PhysioNet-style beat and rhythm annotation files.

Binary format
-------------
An annotation file is a stream of 16-bit words, least significant byte
first. The top 6 bits of a word are the annotation type code, the low
10 bits are the time of the annotation in sample intervals counted from
the previous annotation (from the start of the record for the first
one). A word of zeros terminates the stream.

Type codes 59-63 are pseudo-annotations that never stand for an event
of their own:

====  =====  ========================================================
code  name   meaning
====  =====  ========================================================
59    SKIP   interval field is 0; the next four bytes hold a long
             interval as two 16-bit words, high word first, each word
             little-endian; added to the running sample time
60    NUM    sets the ``num`` field of the preceding annotation and of
             all following ones (sticky)
61    SUB    sets the ``subtype`` field of the preceding annotation
             only
62    CHN    sets the ``channel`` field of the preceding annotation
             and of all following ones (sticky)
63    AUX    interval field gives the byte count of an auxiliary text
             string that follows, null-padded to an even length;
             attached to the preceding annotation
====  =====  ========================================================

All other codes (1-49 beat and event codes, 50-58 reserved) advance the
running sample time by their interval field and emit one annotation.

A CSV fallback format carrying the same information is also supported,
see :func:`load_csv_record`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

SKIP = 59
NUM = 60
SUB = 61
CHN = 62
AUX = 63

# codes that count as beats when reading a beat (qrs) stream
BEAT_CODE_LO = 1
BEAT_CODE_HI = 49

DEFAULT_SAMPLING_RATE = 250

CSV_HEADER = ("sample", "kind", "label")


class AnnotationError(ValueError):
    """Malformed annotation data (binary or CSV)."""


class AnnotationParseError(AnnotationError):
    """Binary stream cannot be decoded; carries the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Annotation:
    """One decoded annotation: an event at an absolute sample index."""

    sample_time: int
    type_code: int
    subtype: int = 0
    channel: int = 0
    num: int = 0
    aux: str | None = None

    def is_beat(self) -> bool:
        return BEAT_CODE_LO <= self.type_code <= BEAT_CODE_HI


@dataclass(frozen=True)
class BeatSeries:
    """Beat positions and rhythm change markers of one record.

    ``beat_times`` are strictly increasing sample indices;
    ``rhythm_marks`` are ``(sample_time, rhythm_text)`` pairs in
    non-decreasing time order, every ``rhythm_text`` starting with
    ``'('`` (e.g. ``"(AFIB"``, ``"(N"``).
    """

    record_id: str
    sampling_rate: int
    beat_times: tuple[int, ...]
    rhythm_marks: tuple[tuple[int, str], ...]

    def __post_init__(self):
        if self.sampling_rate <= 0:
            raise AnnotationError(
                f"record {self.record_id!r}: sampling rate must be positive, "
                f"got {self.sampling_rate}"
            )
        if not self.beat_times:
            raise AnnotationError(f"record {self.record_id!r}: no beats")
        for i in range(1, len(self.beat_times)):
            if self.beat_times[i] <= self.beat_times[i - 1]:
                raise AnnotationError(
                    f"record {self.record_id!r}: beat times not strictly "
                    f"increasing at position {i}"
                )
        last = None
        for t, text in self.rhythm_marks:
            if last is not None and t < last:
                raise AnnotationError(
                    f"record {self.record_id!r}: rhythm marks out of order"
                )
            last = t
            if not text.startswith("("):
                raise AnnotationError(
                    f"record {self.record_id!r}: rhythm text {text!r} does "
                    f"not start with '('"
                )


def parse_annotation_stream(raw: bytes) -> list[Annotation]:
    """Decode a complete binary annotation stream.

    Returns the physical annotations in file order with absolute sample
    times. Raises :class:`AnnotationParseError` with the offending byte
    offset when the stream is truncated, lacks its zero-word terminator,
    carries data past the terminator, or an aux string overruns the
    remaining bytes.
    """
    n = len(raw)
    pos = 0
    time = 0
    sticky_num = 0
    sticky_chn = 0
    out: list[Annotation] = []
    while True:
        if pos + 2 > n:
            if pos < n:
                raise AnnotationParseError("stream ends mid-word", pos)
            raise AnnotationParseError("stream ends without terminator", pos)
        word = raw[pos] | (raw[pos + 1] << 8)
        pos += 2
        if word == 0:
            break
        code = word >> 10
        interval = word & 0x3FF
        if code == SKIP:
            if pos + 4 > n:
                raise AnnotationParseError("stream ends mid-skip", pos)
            high = raw[pos] | (raw[pos + 1] << 8)
            low = raw[pos + 2] | (raw[pos + 3] << 8)
            pos += 4
            delta = (high << 16) | low
            if delta >= 1 << 31:  # long interval is a signed 32-bit value
                delta -= 1 << 32
            time += delta
        elif code == NUM:
            sticky_num = interval
            if out:
                out[-1] = replace(out[-1], num=interval)
        elif code == SUB:
            if out:
                out[-1] = replace(out[-1], subtype=interval)
        elif code == CHN:
            sticky_chn = interval
            if out:
                out[-1] = replace(out[-1], channel=interval)
        elif code == AUX:
            if not out:
                raise AnnotationParseError(
                    "aux string with no preceding annotation", pos - 2
                )
            end = pos + interval
            if end > n:
                raise AnnotationParseError(
                    "aux length exceeds remaining bytes", pos - 2
                )
            text = raw[pos:end].rstrip(b"\x00").decode("latin-1")
            pos = end + (interval & 1)  # skip the pad byte of odd-length aux
            if pos > n:
                raise AnnotationParseError("aux pad byte missing", end)
            if text:
                out[-1] = replace(out[-1], aux=text)
        else:
            time += interval
            out.append(
                Annotation(
                    sample_time=time,
                    type_code=code,
                    channel=sticky_chn,
                    num=sticky_num,
                )
            )
    if pos != n:
        raise AnnotationParseError("data after stream terminator", pos)
    return out


def encode_annotation_stream(annotations: list[Annotation]) -> bytes:
    """Encode annotations back to the binary format.

    Pseudo-annotations are placed canonically: a SKIP word before any
    annotation whose interval exceeds 1023 samples (the annotation word
    then carries interval 0), SUB/CHN/NUM/AUX words directly after the
    annotation they modify, CHN and NUM only on change of the sticky
    value. ``parse_annotation_stream`` inverts this exactly.
    """

    def word(value: int) -> bytes:
        return bytes((value & 0xFF, (value >> 8) & 0xFF))

    out = bytearray()
    time = 0
    sticky_num = 0
    sticky_chn = 0
    for a in annotations:
        delta = a.sample_time - time
        if delta < 0:
            raise AnnotationError(
                f"sample times not non-decreasing at t={a.sample_time}"
            )
        if not 0 < a.type_code < SKIP:  # physical, non-null codes only
            raise AnnotationError(f"cannot encode type code {a.type_code}")
        if delta > 0x3FF:
            out += word(SKIP << 10)
            out += word((delta >> 16) & 0xFFFF)
            out += word(delta & 0xFFFF)
            delta = 0
        out += word((a.type_code << 10) | delta)
        time = a.sample_time
        if a.subtype:
            out += word((SUB << 10) | (a.subtype & 0x3FF))
        if a.channel != sticky_chn:
            out += word((CHN << 10) | (a.channel & 0x3FF))
            sticky_chn = a.channel
        if a.num != sticky_num:
            out += word((NUM << 10) | (a.num & 0x3FF))
            sticky_num = a.num
        if a.aux:
            data = a.aux.encode("latin-1")
            if len(data) > 0x3FF:
                raise AnnotationError("aux string too long to encode")
            out += word((AUX << 10) | len(data))
            out += data
            if len(data) & 1:
                out += b"\x00"
    out += b"\x00\x00"
    return bytes(out)


def load_record(
    qrs_annotations: list[Annotation],
    atr_annotations: list[Annotation],
    sampling_rate: int = DEFAULT_SAMPLING_RATE,
    record_id: str = "",
) -> BeatSeries:
    """Assemble a BeatSeries from decoded beat and rhythm streams.

    Beats are the annotations with type codes 1-49 in the qrs stream
    (that stream holds only beat detections). Rhythm marks are the atr
    annotations whose aux text starts with ``'('``; a mark placed before
    the first beat applies from that beat onward.
    """
    beats = tuple(a.sample_time for a in qrs_annotations if a.is_beat())
    marks = tuple(
        (a.sample_time, a.aux)
        for a in atr_annotations
        if a.aux is not None and a.aux.startswith("(")
    )
    return BeatSeries(
        record_id=record_id,
        sampling_rate=sampling_rate,
        beat_times=beats,
        rhythm_marks=marks,
    )


def load_csv_record(
    text: str | io.TextIOBase,
    record_id: str = "",
    sampling_rate: int = DEFAULT_SAMPLING_RATE,
) -> BeatSeries:
    """Parse the CSV record format (header ``sample,kind,label``).

    ``kind`` is ``beat`` or ``rhythm``; rhythm rows carry the rhythm
    text in ``label``. Samples must be non-decreasing down the file.
    Malformed rows raise :class:`AnnotationError` with the line number.
    """
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise AnnotationError(
            f"record {record_id!r}: expected CSV header "
            f"{','.join(CSV_HEADER)!r}, got {header!r}"
        )
    beats: list[int] = []
    marks: list[tuple[int, str]] = []
    last_sample = None
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise AnnotationError(
                f"record {record_id!r} line {lineno}: expected 3 fields, "
                f"got {len(row)}"
            )
        sample_text, kind, label = row
        try:
            sample = int(sample_text)
        except ValueError:
            raise AnnotationError(
                f"record {record_id!r} line {lineno}: bad sample "
                f"{sample_text!r}"
            ) from None
        if last_sample is not None and sample < last_sample:
            raise AnnotationError(
                f"record {record_id!r} line {lineno}: samples not "
                f"non-decreasing"
            )
        last_sample = sample
        kind = kind.strip()
        if kind == "beat":
            beats.append(sample)
        elif kind == "rhythm":
            if not label:
                raise AnnotationError(
                    f"record {record_id!r} line {lineno}: rhythm row "
                    f"without label"
                )
            marks.append((sample, label))
        else:
            raise AnnotationError(
                f"record {record_id!r} line {lineno}: unknown kind {kind!r}"
            )
    return BeatSeries(
        record_id=record_id,
        sampling_rate=sampling_rate,
        beat_times=tuple(beats),
        rhythm_marks=tuple(marks),
    )


def write_csv_record(series: BeatSeries, stream: io.TextIOBase) -> None:
    """Export a BeatSeries in the CSV record format (inverse of
    :func:`load_csv_record`). Beats and rhythm marks are merged in time
    order; a rhythm mark at the same sample as a beat is written after
    the beat row, matching the parse order."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    rows = [(t, 0, "beat", "") for t in series.beat_times]
    rows += [(t, 1, "rhythm", text) for t, text in series.rhythm_marks]
    rows.sort(key=lambda r: (r[0], r[1]))
    for t, _, kind, label in rows:
        writer.writerow((t, kind, label))


def read_header_sampling_rate(text: str) -> int:
    """Pull the sampling frequency from the first line of a header file.

    Header lines look like ``record n_signals fs [...]``; the frequency
    token may carry a ``/counter`` suffix, which is ignored.
    """
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            parts = line.split()
            if len(parts) < 3:
                break
            token = parts[2].split("/")[0]
            try:
                return int(float(token))
            except ValueError:
                break
    raise AnnotationError("header has no readable sampling frequency")


@dataclass
class RecordSource:
    """Where one record's annotation data lives on disk."""

    record_id: str
    kind: str  # "binary" or "csv"
    paths: dict[str, Path] = field(default_factory=dict)


def discover_records(dataset_dir: str | Path) -> list[RecordSource]:
    """Find loadable records in a directory.

    Binary records are stems with both an ``.atr`` (rhythm) and a
    ``.qrs`` (beat) file; a ``.hea`` header is optional and only read
    for the sampling rate. CSV records are ``.csv`` files in the
    fallback format. Results are sorted by record id.
    """
    dataset_dir = Path(dataset_dir)
    sources: list[RecordSource] = []
    atr = {p.stem: p for p in dataset_dir.glob("*.atr")}
    qrs = {p.stem: p for p in dataset_dir.glob("*.qrs")}
    for stem in sorted(set(atr) & set(qrs)):
        paths = {"atr": atr[stem], "qrs": qrs[stem]}
        hea = dataset_dir / f"{stem}.hea"
        if hea.exists():
            paths["hea"] = hea
        sources.append(RecordSource(stem, "binary", paths))
    binary_ids = {s.record_id for s in sources}
    for p in sorted(dataset_dir.glob("*.csv")):
        if p.stem not in binary_ids:
            sources.append(RecordSource(p.stem, "csv", {"csv": p}))
    sources.sort(key=lambda s: s.record_id)
    return sources


def load_source(source: RecordSource) -> BeatSeries:
    """Load one discovered record from disk."""
    if source.kind == "csv":
        with open(source.paths["csv"], "r", encoding="utf-8", newline="") as f:
            return load_csv_record(f, record_id=source.record_id)
    rate = DEFAULT_SAMPLING_RATE
    if "hea" in source.paths:
        rate = read_header_sampling_rate(
            source.paths["hea"].read_text(encoding="utf-8", errors="replace")
        )
    qrs = parse_annotation_stream(source.paths["qrs"].read_bytes())
    atr = parse_annotation_stream(source.paths["atr"].read_bytes())
    return load_record(qrs, atr, sampling_rate=rate, record_id=source.record_id)


def load_dataset(
    dataset_dir: str | Path, records: list[str] | None = None
) -> list[BeatSeries]:
    """Load all (or the named) records of a dataset directory."""
    sources = discover_records(dataset_dir)
    if records is not None:
        wanted = set(records)
        found = {s.record_id for s in sources}
        missing = wanted - found
        if missing:
            raise AnnotationError(
                f"records not found in dataset: {sorted(missing)}"
            )
        sources = [s for s in sources if s.record_id in wanted]
    return [load_source(s) for s in sources]
