from __future__ import annotations

import gzip
import zlib

import numpy as np
import pytest
from hypothesis import given, strategies as st

from afncd.ncd import (
    DistanceMatrix,
    GZIP_HEADER,
    LengthCache,
    NCDError,
    compressed_length,
    compressor_fingerprint,
    distance_matrix,
    gzip_bytes,
    load_matrix,
    matrix_to_csv,
    ncd,
    save_matrix,
)

_blobs = st.binary(min_size=1, max_size=512)


def test_container_header_is_pinned():
    assert GZIP_HEADER == bytes.fromhex("1f8b08000000000002ff")
    assert gzip_bytes(b"abc")[:10] == GZIP_HEADER


@given(_blobs)
def test_container_is_valid_gzip(data):
    assert gzip.decompress(gzip_bytes(data)) == data


@given(_blobs)
def test_fast_length_equals_container_length(data):
    assert compressed_length(data) == len(gzip_bytes(data))


@given(_blobs)
def test_container_matches_stdlib_with_zeroed_mtime(data):
    # byte-for-byte on this interpreter; the OS byte is ours by policy
    ours = gzip_bytes(data)
    theirs = gzip.compress(data, 9, mtime=0)
    assert len(ours) == len(theirs)
    assert ours[10:] == theirs[10:]  # identical DEFLATE body and trailer


def test_single_symbol_run_compresses_small():
    assert compressed_length(bytes(1000)) < 50


@given(_blobs)
def test_length_is_deterministic(data):
    assert compressed_length(data) == compressed_length(data)


@given(_blobs, _blobs)
def test_ncd_formula(x, y):
    cx, cy, cxy = (
        compressed_length(x),
        compressed_length(y),
        compressed_length(x + y),
    )
    assert ncd(x, y) == (cxy - min(cx, cy)) / max(cx, cy)
    assert min(cx, cy) == min(cy, cx)  # symmetric terms


def test_self_distance_stays_small():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(200):
        x = rng.integers(0, 256, size=128, dtype=np.uint8).tobytes()
        worst = max(worst, ncd(x, x))
    assert worst <= 0.15


def test_empty_inputs_rejected():
    with pytest.raises(NCDError, match="non-empty"):
        ncd(b"", b"x")
    with pytest.raises(NCDError, match="non-empty"):
        ncd(b"x", b"")
    with pytest.raises(NCDError):
        distance_matrix([b""], [b"x"])
    with pytest.raises(NCDError):
        distance_matrix([], [b"x"])


def test_cache_transparency_and_stats():
    rng = np.random.default_rng(6)
    x = rng.integers(0, 256, size=64, dtype=np.uint8).tobytes()
    y = rng.integers(0, 256, size=64, dtype=np.uint8).tobytes()
    cache = LengthCache()
    assert ncd(x, y, cache=cache) == ncd(x, y)
    assert (cache.hits, cache.misses) == (0, 2)
    ncd(x, y, cache=cache)
    assert (cache.hits, cache.misses) == (2, 2)
    assert len(cache) == 2
    assert cache.length(x) == compressed_length(x)


def _random_blobs(rng, count, size):
    return [
        rng.integers(0, 256, size=size, dtype=np.uint8).tobytes()
        for _ in range(count)
    ]


def test_parallel_equals_serial_on_50x50():
    rng = np.random.default_rng(7)
    rows = _random_blobs(rng, 50, 96)
    cols = _random_blobs(rng, 50, 96)
    serial = distance_matrix(rows, cols, workers=1)
    parallel = distance_matrix(rows, cols, workers=3, chunk_rows=7)
    assert serial.dtype == np.float32 and serial.shape == (50, 50)
    assert np.array_equal(serial, parallel)
    # spot-check against the scalar path
    assert serial[11, 29] == np.float32(ncd(rows[11], cols[29]))


def test_degenerate_one_by_one_matrix():
    x, y = b"hello world", b"hello there"
    m = distance_matrix([x], [y])
    assert m.shape == (1, 1) and m[0, 0] == np.float32(ncd(x, y))


def test_matrix_values_reused_from_cache_are_identical():
    rng = np.random.default_rng(8)
    rows = _random_blobs(rng, 5, 64)
    cols = _random_blobs(rng, 5, 64)
    cache = LengthCache()
    with_cache = distance_matrix(rows, cols, cache=cache)
    without = distance_matrix(rows, cols)
    assert np.array_equal(with_cache, without)
    assert cache.hits == 0 and cache.misses == 10
    again = distance_matrix(rows, cols, cache=cache)
    assert np.array_equal(again, without)
    assert cache.hits == 10  # every single-blob length served from memory


def test_distance_matrix_dataclass_validation():
    good = np.zeros((2, 2), dtype=np.float32)
    DistanceMatrix(good, ("a", "b"), ("c", "d"), "i16_raw")
    with pytest.raises(NCDError, match="shape"):
        DistanceMatrix(good, ("a",), ("c", "d"), "i16_raw")
    nan = good.copy()
    nan[0, 0] = np.nan
    with pytest.raises(NCDError, match="NaN"):
        DistanceMatrix(nan, ("a", "b"), ("c", "d"), "i16_raw")
    out = good.copy()
    out[1, 1] = 2.0
    with pytest.raises(NCDError, match="sanity band"):
        DistanceMatrix(out, ("a", "b"), ("c", "d"), "i16_raw")


def test_matrix_file_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    values = rng.random((4, 3), dtype=np.float32)
    m = DistanceMatrix(values, ("r0", "r1", "r2", "r3"), ("c0", "c1", "c2"), "f32_sec")
    path = tmp_path / "m.ncdm"
    save_matrix(path, m)
    back = load_matrix(path)
    assert np.array_equal(back.values, m.values)
    assert back.row_ids == m.row_ids
    assert back.col_ids == m.col_ids
    assert back.scheme_name == "f32_sec"
    assert back.fingerprint == m.fingerprint


def test_matrix_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ncdm"
    path.write_bytes(b"not a matrix")
    with pytest.raises(NCDError, match="not a distance matrix"):
        load_matrix(path)
    # valid magic, truncated body
    m = DistanceMatrix(
        np.zeros((2, 2), dtype=np.float32), ("a", "b"), ("c", "d"), "i16_raw"
    )
    save_matrix(path, m)
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(NCDError, match="body bytes"):
        load_matrix(path)


def test_csv_export(tmp_path):
    m = DistanceMatrix(
        np.array([[0.25, 0.5]], dtype=np.float32), ("row",), ("a", "b"), "i16_raw"
    )
    path = tmp_path / "m.csv"
    matrix_to_csv(path, m)
    lines = path.read_text().splitlines()
    assert lines[0] == ",a,b"
    assert lines[1] == "row,0.250000,0.500000"


def test_fingerprint_is_stable_and_versioned():
    fp = compressor_fingerprint()
    assert fp == compressor_fingerprint()
    assert len(fp) == 16
    # the fingerprint must change if the zlib runtime ever does
    assert zlib.ZLIB_RUNTIME_VERSION  # present on every CPython we support
