from __future__ import annotations

import io
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from afncd.annotations import (
    Annotation,
    AnnotationError,
    AnnotationParseError,
    BeatSeries,
    discover_records,
    encode_annotation_stream,
    load_csv_record,
    load_dataset,
    load_record,
    load_source,
    parse_annotation_stream,
    read_header_sampling_rate,
    write_csv_record,
)

DATA = Path(__file__).parent / "data"

# hand-assembled word by word; see the module docstring for the layout
GOLDEN_BEATS = [
    Annotation(250, 1),
    Annotation(460, 1),
    Annotation(700, 5),
    Annotation(72000, 1),  # reached through a SKIP long interval
]
GOLDEN_RHYTHM = [
    Annotation(100, 28, aux="(N"),
    Annotation(300, 1, subtype=3, channel=1, num=2),
    Annotation(500, 28, channel=1, num=2, aux="(AFIB"),
    Annotation(800, 1, channel=1, num=2),  # sticky channel and num
]


def test_golden_beats_file():
    assert parse_annotation_stream((DATA / "beats.qrs").read_bytes()) == GOLDEN_BEATS


def test_golden_rhythm_file():
    raw = (DATA / "rhythm.atr").read_bytes()
    assert parse_annotation_stream(raw) == GOLDEN_RHYTHM


def test_golden_files_reencode_byte_identical():
    for name, annotations in (
        ("beats.qrs", GOLDEN_BEATS),
        ("rhythm.atr", GOLDEN_RHYTHM),
    ):
        assert encode_annotation_stream(annotations) == (DATA / name).read_bytes()


def _scan_time_fields(raw: bytes) -> int:
    """Independent tally of every interval field in a stream.

    Walks words without building annotations: interval bits of physical
    words plus SKIP payloads must add up to the last sample time.
    """
    total = 0
    pos = 0
    while True:
        word = raw[pos] | (raw[pos + 1] << 8)
        pos += 2
        if word == 0:
            return total
        code, interval = word >> 10, word & 0x3FF
        if code == 59:
            high = raw[pos] | (raw[pos + 1] << 8)
            low = raw[pos + 2] | (raw[pos + 3] << 8)
            pos += 4
            delta = (high << 16) | low
            total += delta - (1 << 32) if delta >= 1 << 31 else delta
        elif code == 63:
            pos += interval + (interval & 1)
        elif code in (60, 61, 62):
            pass
        else:
            total += interval


def test_interval_fields_sum_to_last_time():
    for name, annotations in (
        ("beats.qrs", GOLDEN_BEATS),
        ("rhythm.atr", GOLDEN_RHYTHM),
    ):
        raw = (DATA / name).read_bytes()
        assert _scan_time_fields(raw) == annotations[-1].sample_time


def test_terminator_required():
    raw = (DATA / "beats.qrs").read_bytes()
    with pytest.raises(AnnotationParseError, match="terminator"):
        parse_annotation_stream(raw[:-2])


def test_data_after_terminator_rejected():
    raw = (DATA / "beats.qrs").read_bytes()
    with pytest.raises(AnnotationParseError, match="after"):
        parse_annotation_stream(raw + b"\x64\x04")


def test_truncation_errors_carry_offsets():
    raw = (DATA / "beats.qrs").read_bytes()
    with pytest.raises(AnnotationParseError) as err:
        parse_annotation_stream(raw[:3])  # mid-word
    assert err.value.offset == 2
    with pytest.raises(AnnotationParseError, match="mid-skip"):
        parse_annotation_stream(raw[:10])


def test_aux_overrun_rejected():
    # AUX claims 8 bytes, only the terminator follows
    raw = bytes.fromhex("6470" "08fc" "0000")
    with pytest.raises(AnnotationParseError, match="aux length"):
        parse_annotation_stream(raw)


def test_aux_without_annotation_rejected():
    raw = bytes.fromhex("02fc" "284e" "0000")
    with pytest.raises(AnnotationParseError, match="no preceding"):
        parse_annotation_stream(raw)


def test_all_nul_aux_becomes_none():
    raw = bytes.fromhex("6470" "02fc" "0000" "0000")
    (only,) = parse_annotation_stream(raw)
    assert only.aux is None


def test_encode_rejects_non_physical_codes():
    for code in (0, 59, 63, 200):
        with pytest.raises(AnnotationError):
            encode_annotation_stream([Annotation(10, code)])


def test_encode_rejects_decreasing_times():
    anns = [Annotation(100, 1), Annotation(50, 1)]
    with pytest.raises(AnnotationError, match="non-decreasing"):
        encode_annotation_stream(anns)


_aux_text = st.text(
    alphabet=st.characters(
        codec="latin-1", exclude_characters="\x00"
    ),
    min_size=1,
    max_size=40,
)


@st.composite
def annotation_lists(draw):
    n = draw(st.integers(min_value=1, max_value=30))
    deltas = draw(
        st.lists(
            st.integers(min_value=0, max_value=200_000), min_size=n, max_size=n
        )
    )
    times = []
    t = 0
    for d in deltas:
        t += d
        times.append(t)
    out = []
    for time in times:
        out.append(
            Annotation(
                sample_time=time,
                type_code=draw(st.integers(min_value=1, max_value=58)),
                subtype=draw(st.integers(min_value=0, max_value=1023)),
                channel=draw(st.integers(min_value=0, max_value=1023)),
                num=draw(st.integers(min_value=0, max_value=1023)),
                aux=draw(st.none() | _aux_text),
            )
        )
    return out


@given(annotation_lists())
def test_encode_parse_round_trip(annotations):
    assert parse_annotation_stream(encode_annotation_stream(annotations)) == annotations


@given(annotation_lists())
def test_interval_sum_matches_on_generated_streams(annotations):
    raw = encode_annotation_stream(annotations)
    assert _scan_time_fields(raw) == annotations[-1].sample_time


def test_load_record_combines_streams():
    series = load_record(
        GOLDEN_BEATS, GOLDEN_RHYTHM, sampling_rate=250, record_id="g"
    )
    assert series.beat_times == (250, 460, 700, 72000)
    assert series.rhythm_marks == ((100, "(N"), (500, "(AFIB"))
    assert series.sampling_rate == 250


def test_beat_series_validation():
    with pytest.raises(AnnotationError, match="strictly"):
        BeatSeries("x", 250, (10, 10), ())
    with pytest.raises(AnnotationError, match="no beats"):
        BeatSeries("x", 250, (), ())
    with pytest.raises(AnnotationError, match="'\\('"):
        BeatSeries("x", 250, (1, 2), ((1, "N"),))
    with pytest.raises(AnnotationError, match="rate"):
        BeatSeries("x", 0, (1,), ())


def test_csv_round_trip():
    series = BeatSeries(
        "c1", 128, (100, 300, 550), ((100, "(N"), (300, "(AFIB"))
    )
    buf = io.StringIO()
    write_csv_record(series, buf)
    back = load_csv_record(buf.getvalue(), record_id="c1", sampling_rate=128)
    assert back == series


def test_csv_rejects_bad_rows():
    head = "sample,kind,label\n"
    with pytest.raises(AnnotationError, match="header"):
        load_csv_record("a,b\n1,beat,\n")
    with pytest.raises(AnnotationError, match="line 2"):
        load_csv_record(head + "x,beat,\n")
    with pytest.raises(AnnotationError, match="unknown kind"):
        load_csv_record(head + "5,beep,\n")
    with pytest.raises(AnnotationError, match="non-decreasing"):
        load_csv_record(head + "5,beat,\n3,beat,\n")
    with pytest.raises(AnnotationError, match="without label"):
        load_csv_record(head + "5,rhythm,\n")


def test_header_sampling_rate():
    assert read_header_sampling_rate("04015 2 250 9205760\n") == 250
    assert read_header_sampling_rate("# comment\nrec 2 128/360 x\n") == 128
    with pytest.raises(AnnotationError):
        read_header_sampling_rate("just one line")


def test_discovery_and_loading(tmp_path):
    (tmp_path / "a.qrs").write_bytes((DATA / "beats.qrs").read_bytes())
    (tmp_path / "a.atr").write_bytes((DATA / "rhythm.atr").read_bytes())
    (tmp_path / "a.hea").write_text("a 2 128 0\n")
    (tmp_path / "b.csv").write_text(
        "sample,kind,label\n10,rhythm,(N\n10,beat,\n20,beat,\n"
    )
    (tmp_path / "orphan.qrs").write_bytes(b"\x00\x00")  # no .atr pair
    sources = discover_records(tmp_path)
    assert [(s.record_id, s.kind) for s in sources] == [("a", "binary"), ("b", "csv")]
    a = load_source(sources[0])
    assert a.sampling_rate == 128  # from the header file
    assert a.beat_times == (250, 460, 700, 72000)
    b = load_source(sources[1])
    assert b.beat_times == (10, 20)

    both = load_dataset(tmp_path)
    assert [s.record_id for s in both] == ["a", "b"]
    only_b = load_dataset(tmp_path, records=["b"])
    assert [s.record_id for s in only_b] == ["b"]
    with pytest.raises(AnnotationError, match="not found"):
        load_dataset(tmp_path, records=["zz"])
