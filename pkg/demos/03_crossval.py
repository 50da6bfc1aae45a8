"""Fivefold per-record cross-validation with a dense k scan.

Runs the whole pipeline on a synthetic dataset: parse records, cut
dRR windows, build compression distance matrices fold by fold, and
score a k-nearest-neighbor vote for every odd k. With a real dataset
in AFNCD_DATASET_DIR this is the library equivalent of:

    afncd crossval --mseq 32 --k scan
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

from afncd.annotations import load_dataset
from afncd.dataset import windows_from_series
from afncd.evaluate import run_crossval
from afncd.simulate import simulate_dataset

dataset_dir = os.environ.get("AFNCD_DATASET_DIR")
if not dataset_dir:
    dataset_dir = Path(tempfile.mkdtemp(prefix="afncd-demo-")) / "records"
    simulate_dataset(dataset_dir, n_records=8, seed=7)
    print(f"no AFNCD_DATASET_DIR set, simulated 8 records in {dataset_dir}\n")

series = load_dataset(dataset_dir)
windows = [w for s in series for w in windows_from_series(s, 32, "drr")]
af = sum(1 for w in windows if w.is_af)
print(f"{len(series)} records, {len(windows)} windows ({af} AF)")

report = run_crossval(windows, "i16_raw", scan=True, seed=0)

print(f"\nfold sizes: {[(o.n_train, o.n_test) for o in report.folds]}")
print("\n   k    accuracy  macro-F1  sensitivity  specificity")
shown = [k for k in report.ks if k in (1, 3, 5, 11, 21, report.best_k)]
for k in sorted(set(shown)):
    a = report.avg_by_k[k]
    marker = "  <- best" if k == report.best_k else ""
    print(f"{k:>4d}    {a.accuracy:.3f}     {a.macro_f1:.3f}     "
          f"{a.sensitivity:.3f}        {a.specificity:.3f}{marker}")

print(f"\nbest k = {report.best_k}, avg macro-F1 = {report.best_avg_macro_f1:.3f}")
