"""Parse a beat annotation record from its binary files.

Writes one synthetic record to a temporary directory in the same
two-file layout real records use (.qrs beat times, .atr rhythm marks),
then parses it back and prints what the reader recovered. Point
AFNCD_DATASET_DIR at a real record directory to inspect that instead.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

from afncd.annotations import discover_records, load_source
from afncd.simulate import simulate_dataset

dataset_dir = os.environ.get("AFNCD_DATASET_DIR")
if dataset_dir:
    dataset_dir = Path(dataset_dir)
else:
    dataset_dir = Path(tempfile.mkdtemp(prefix="afncd-demo-")) / "records"
    simulate_dataset(dataset_dir, n_records=2, seed=0)
    print(f"no AFNCD_DATASET_DIR set, simulated 2 records in {dataset_dir}")

sources = discover_records(dataset_dir)
print(f"found {len(sources)} records: {[s.record_id for s in sources]}")

series = load_source(sources[0])
print(f"\nrecord {series.record_id} at {series.sampling_rate} Hz")
print(f"beats: {len(series.beat_times)}")
print(f"first beat samples: {series.beat_times[:8]}")

# Rhythm marks carry the aux text of the annotation ("(N", "(AFIB", ...);
# each one holds from its sample time until the next mark.
print(f"\nrhythm marks: {len(series.rhythm_marks)}")
for sample, label in series.rhythm_marks[:6]:
    print(f"  sample {sample:>9d}  {label}")

# The first words of the .qrs file, decoded by hand: the top 6 bits of
# each 16-bit word are the annotation type, the low 10 bits the sample
# increment since the previous annotation.
raw = (dataset_dir / f"{series.record_id}.qrs").read_bytes()
print(f"\nfirst 8 words of {series.record_id}.qrs:")
for i in range(0, 16, 2):
    word = int.from_bytes(raw[i : i + 2], "little")
    print(f"  {raw[i:i + 2].hex()}  type={word >> 10:>2d}  interval={word & 0x3FF}")
