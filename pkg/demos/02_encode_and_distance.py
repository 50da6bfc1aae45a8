"""Turn interval windows into bytes and compare them by compression.

Shows the byte encodings of one window under several schemes, the
pinned gzip container those bytes are measured with, and the resulting
normalized compression distance between a regular and an irregular
window.
"""

from __future__ import annotations

import numpy as np

from afncd.encoders import EncodingScheme, encode, fit_scheme_params
from afncd.ncd import compressed_length, gzip_bytes, ncd

rng = np.random.default_rng(0)

# A steady rhythm drifts slowly; an irregular one jumps around. These
# are dRR values (differences of successive beat intervals) in monitor
# counts at 250 Hz.
steady = np.round(4 * np.sin(np.arange(32) / 3)).astype(int)
irregular = rng.integers(-80, 81, size=32)

print("steady   :", steady[:12], "...")
print("irregular:", irregular[:12], "...")

# The baseline scheme stores each value as a little-endian int16.
i16 = EncodingScheme("i16_raw")
blob = encode(steady, i16)
print(f"\ni16_raw bytes ({len(blob)}): {blob[:16].hex()} ...")

# Fitted schemes derive their parameters from training values first.
u8 = fit_scheme_params(np.concatenate([steady, irregular]), "u8_norm")
print(f"u8_norm fitted to [{u8.norm_lo}, {u8.norm_hi}]")
print(f"u8_norm bytes ({len(encode(steady, u8))}): {encode(steady, u8).hex()}")

f32 = EncodingScheme("f32_sec")
print(f"f32_sec bytes: {len(encode(steady, f32))} (values stored as seconds)")

# Every compressed length is measured inside the same fixed gzip
# container, so the distances are reproducible across machines.
container = gzip_bytes(blob)
print(f"\ngzip container: {container[:10].hex()} ... ({len(container)} bytes)")
print(f"compressed lengths: steady={compressed_length(encode(steady, i16))}, "
      f"irregular={compressed_length(encode(irregular, i16))}")

# NCD(x, y) = (C(xy) - min(C(x), C(y))) / max(C(x), C(y))
pairs = [
    ("steady vs steady+noise", steady, steady + rng.integers(-2, 3, 32)),
    ("irregular vs irregular", irregular, rng.integers(-80, 81, 32)),
    ("steady vs irregular", steady, irregular),
]
print()
for name, a, b in pairs:
    d = ncd(encode(a, i16), encode(b, i16))
    print(f"NCD {name}: {d:.3f}")
