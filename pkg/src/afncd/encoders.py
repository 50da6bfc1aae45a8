"""Byte encodings of interval windows for compression.

Compressed lengths are sensitive to the exact bytes, so every scheme
pins its layout: little-endian throughout, half-up rounding for integer
quantization, round-to-nearest-even for float conversion.

=========  =====  ======================================================
scheme     bytes  mapping from an interval value v
=========  =====  ======================================================
i16_raw    2      two's-complement v
i32_raw    4      two's-complement v
u16_raw    2      v + shift, shift = max(0, -min(training values))
u32_raw    4      v + shift, as above
i16_norm   2      affine [norm_lo, norm_hi] -> [-32768, 32767]
u16_norm   2      affine [norm_lo, norm_hi] -> [0, 65535]
i32_norm   4      affine [norm_lo, norm_hi] -> full int32 range
u32_norm   4      affine [norm_lo, norm_hi] -> full uint32 range
i8_norm    1      clip to [-750, 750], affine -> [-128, 127]
u8_norm    1      clip to [-750, 750], affine -> [0, 255]
f16_sec    2      IEEE-754 binary16 of v / sampling_rate
f32_sec    4      IEEE-754 binary32 of v / sampling_rate
=========  =====  ======================================================

The raw integer schemes are lossless and can be decoded; the normalized
and float schemes quantize. ``norm_lo``/``norm_hi`` and ``shift`` are
fitted on training data only (see :func:`fit_scheme_params`); values a
fitted normalized scheme meets outside ``[norm_lo, norm_hi]`` saturate
at the type bounds, while raw schemes treat overflow as an error.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

SCHEME_NAMES = (
    "i8_norm",
    "u8_norm",
    "i16_raw",
    "u16_raw",
    "i16_norm",
    "u16_norm",
    "i32_raw",
    "u32_raw",
    "i32_norm",
    "u32_norm",
    "f16_sec",
    "f32_sec",
)

LOSSLESS_SCHEMES = ("i16_raw", "u16_raw", "i32_raw", "u32_raw")

DEFAULT_CLIP = (-750, 750)

_WIDTH = {"8": 1, "16": 2, "32": 4}

_RAW_BOUNDS = {
    "i16_raw": (-(1 << 15), (1 << 15) - 1),
    "i32_raw": (-(1 << 31), (1 << 31) - 1),
    "u16_raw": (0, (1 << 16) - 1),
    "u32_raw": (0, (1 << 32) - 1),
}

_NORM_TARGET = {
    "i8_norm": (-(1 << 7), (1 << 7) - 1),
    "u8_norm": (0, (1 << 8) - 1),
    "i16_norm": (-(1 << 15), (1 << 15) - 1),
    "u16_norm": (0, (1 << 16) - 1),
    "i32_norm": (-(1 << 31), (1 << 31) - 1),
    "u32_norm": (0, (1 << 32) - 1),
}

_DTYPES = {
    "i8_norm": "<i1",
    "u8_norm": "<u1",
    "i16_raw": "<i2",
    "u16_raw": "<u2",
    "i16_norm": "<i2",
    "u16_norm": "<u2",
    "i32_raw": "<i4",
    "u32_raw": "<u4",
    "i32_norm": "<i4",
    "u32_norm": "<u4",
    "f16_sec": "<f2",
    "f32_sec": "<f4",
}


class EncodingError(ValueError):
    """Values cannot be encoded under the given scheme."""


class OverflowEncodingError(EncodingError):
    """A raw-scheme value does not fit the target integer width."""


class DegenerateRangeError(EncodingError):
    """Normalization range collapsed (min == max in the training data)."""


@dataclass(frozen=True)
class EncodingScheme:
    """A named, fully parameterized value-to-bytes rule."""

    name: str
    clip_lo: int = DEFAULT_CLIP[0]
    clip_hi: int = DEFAULT_CLIP[1]
    shift: int = 0
    norm_lo: int | None = None
    norm_hi: int | None = None
    sampling_rate: int = 250

    def __post_init__(self):
        if self.name not in SCHEME_NAMES:
            raise EncodingError(f"unknown scheme {self.name!r}")
        if self.clip_lo >= self.clip_hi:
            raise EncodingError("clip_lo must be below clip_hi")
        if self.sampling_rate <= 0:
            raise EncodingError("sampling_rate must be positive")
        if (
            self.norm_lo is not None
            and self.norm_hi is not None
            and self.norm_lo >= self.norm_hi
        ):
            raise DegenerateRangeError("norm_lo must be below norm_hi")

    @property
    def element_width(self) -> int:
        for bits, width in _WIDTH.items():
            if bits in self.name:
                return width
        raise AssertionError(self.name)

    @property
    def is_lossless(self) -> bool:
        return self.name in LOSSLESS_SCHEMES

    def params(self) -> dict:
        """Serializable parameter dict for run manifests."""
        return asdict(self)


def fit_scheme_params(
    training_values, name: str, sampling_rate: int = 250
) -> EncodingScheme:
    """Build a ready-to-use scheme from training-split values.

    Normalized 16/32-bit schemes take ``norm_lo``/``norm_hi`` from the
    data extremes; unsigned raw schemes take the forward shift that
    makes the minimum non-negative; 8-bit schemes keep their fixed
    +-750 clip regardless of the data. Constant input is rejected for
    every ``*_norm`` scheme.
    """
    values = np.asarray(training_values, dtype=np.int64)
    if values.size == 0:
        raise EncodingError("cannot fit a scheme on empty training values")
    vmin = int(values.min())
    vmax = int(values.max())
    if name.endswith("_norm") and vmin == vmax:
        raise DegenerateRangeError(
            f"{name}: training values are constant ({vmin})"
        )
    kwargs: dict = {"name": name, "sampling_rate": sampling_rate}
    if name in ("u16_raw", "u32_raw"):
        kwargs["shift"] = max(0, -vmin)
    elif name.endswith("_norm") and "8" not in name:
        kwargs["norm_lo"] = vmin
        kwargs["norm_hi"] = vmax
    return EncodingScheme(**kwargs)


def _quantize_half_up(
    values: np.ndarray, lo: int, hi: int, tmin: int, tmax: int
) -> np.ndarray:
    # exact rational half-up: floor(((v-lo)*M)/span + 1/2) without floats;
    # int64 is wide enough for every scheme (|2*span*M| < 2**63)
    span = np.int64(hi - lo)
    m = np.int64(tmax - tmin)
    q = (2 * (values - lo) * m + span) // (2 * span) + np.int64(tmin)
    return np.clip(q, tmin, tmax)


def encode(values, scheme: EncodingScheme) -> bytes:
    """Serialize a window of interval values under ``scheme``.

    The returned byte string has length ``element_width * len(values)``.
    """
    arr = np.asarray(values, dtype=np.int64)
    name = scheme.name
    if name in _RAW_BOUNDS:
        lo, hi = _RAW_BOUNDS[name]
        shifted = arr + np.int64(scheme.shift) if scheme.shift else arr
        if shifted.size and (shifted.min() < lo or shifted.max() > hi):
            bad = shifted[(shifted < lo) | (shifted > hi)][0]
            raise OverflowEncodingError(
                f"{name}: value {int(bad)} outside [{lo}, {hi}]"
            )
        return shifted.astype(_DTYPES[name]).tobytes()
    if name in ("i8_norm", "u8_norm"):
        tmin, tmax = _NORM_TARGET[name]
        clipped = np.clip(arr, scheme.clip_lo, scheme.clip_hi)
        q = _quantize_half_up(
            clipped, scheme.clip_lo, scheme.clip_hi, tmin, tmax
        )
        return q.astype(_DTYPES[name]).tobytes()
    if name.endswith("_norm"):
        if scheme.norm_lo is None or scheme.norm_hi is None:
            raise EncodingError(f"{name}: scheme not fitted (norm range unset)")
        tmin, tmax = _NORM_TARGET[name]
        q = _quantize_half_up(arr, scheme.norm_lo, scheme.norm_hi, tmin, tmax)
        return q.astype(_DTYPES[name]).tobytes()
    # f16_sec / f32_sec: counts to seconds, IEEE round-to-nearest-even
    seconds = arr.astype(np.float64) / scheme.sampling_rate
    return seconds.astype(_DTYPES[name]).tobytes()


def decode(data: bytes, scheme: EncodingScheme) -> np.ndarray:
    """Invert :func:`encode` for the lossless raw integer schemes."""
    if not scheme.is_lossless:
        raise EncodingError(f"{scheme.name} is not losslessly decodable")
    width = scheme.element_width
    if len(data) % width:
        raise EncodingError(
            f"byte length {len(data)} not a multiple of element width {width}"
        )
    arr = np.frombuffer(data, dtype=_DTYPES[scheme.name]).astype(np.int64)
    if scheme.shift:
        arr = arr - np.int64(scheme.shift)
    return arr
