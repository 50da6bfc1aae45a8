"""How little training data does the classifier need?

Splits one fold's training side into disjoint subfolds of n windows
per class, classifies the whole test side with each subfold, and
prints the score distribution per n. Tiny subfolds sometimes collapse
to a single predicted class; those are flagged faulty.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

from afncd.annotations import load_dataset
from afncd.dataset import windows_from_series
from afncd.evaluate import fewshot_k, run_fewshot
from afncd.simulate import simulate_dataset

dataset_dir = os.environ.get("AFNCD_DATASET_DIR")
shots = (2, 5, 10, 20)
if not dataset_dir:
    dataset_dir = Path(tempfile.mkdtemp(prefix="afncd-demo-")) / "records"
    simulate_dataset(dataset_dir, n_records=8, seed=7)
    print(f"no AFNCD_DATASET_DIR set, simulated 8 records in {dataset_dir}")
    print(f"shot ladder scaled down to {shots} to fit the small dataset\n")

series = load_dataset(dataset_dir)
windows = [w for s in series for w in windows_from_series(s, 32, "drr")]

report = run_fewshot(windows, "i16_raw", shots=shots, seed=0, fold_index=0)

print(f"test side: {report.n_test} windows from {report.fold.test_records}")
print("\n   n    k  subfolds  avg macro-F1  share >= 0.85  faulty")
for n in report.shots:
    group = [r for r in report.rows if r.n == n]
    good = sum(1 for r in group if r.macro_f1 >= 0.85) / len(group)
    print(f"{n:>4d}  {fewshot_k(n):>3d}  {len(group):>8d}  "
          f"{report.avg_macro_f1[n]:>12.3f}  {good:>13.0%}  "
          f"{report.faulty_counts[n]:>6d}")

# The per-subfold scores are what the distribution plots are made of.
worst = min(report.rows, key=lambda r: r.macro_f1)
best = max(report.rows, key=lambda r: r.macro_f1)
print(f"\nworst subfold: n={worst.n} #{worst.subfold_index} "
      f"macro-F1={worst.macro_f1:.3f} faulty={worst.faulty}")
print(f"best subfold:  n={best.n} #{best.subfold_index} "
      f"macro-F1={best.macro_f1:.3f}")
