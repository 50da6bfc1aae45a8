"""Per-patient cross-validation, few-shot subfolds and metrics.

Folds split on record ids, never on windows, so no patient contributes
to both sides of a split. Per fold the pipeline is: fit the encoding on
training values, encode both sides, build the test-by-train NCD matrix,
sweep the requested neighbour counts and score predictions.

Scores are accuracy, per-class F1 with a zero guard for empty
denominators, their macro average, sensitivity (recall of the AF class)
and specificity (recall of everything else). Aggregates are plain
arithmetic means over folds.

The few-shot experiment reuses one full-fold matrix: training items are
shuffled per class and cut into disjoint subfolds of exactly n per
class, and each subfold classifies the whole test side through a column
subset of that matrix with k tied to n (see :func:`fewshot_k`).
"""

from __future__ import annotations

import hashlib
import json
import warnings
from collections import Counter
from dataclasses import dataclass
from math import isqrt
from pathlib import Path

import numpy as np

from .dataset import LABEL_AF, window_id
from .encoders import EncodingScheme, encode, fit_scheme_params
from .knn import sweep_k
from .ncd import (
    DistanceMatrix,
    compressor_fingerprint,
    distance_matrix,
    load_matrix,
    save_matrix,
)

DEFAULT_SHOTS = (5, 10, 50, 100, 500, 1000, 2000)

CROSSVAL_HEADER = (
    "fold",
    "k",
    "n_train",
    "n_test",
    "accuracy",
    "macro_f1",
    "sensitivity",
    "specificity",
)

PREDICTIONS_HEADER = ("test_id", "true_label", "predicted_label", "k")

FEWSHOT_HEADER = ("subfold_id", "n", "k", "accuracy", "macro_f1", "faulty_flag")


class EvalError(ValueError):
    """Configuration or data that cannot produce a valid evaluation."""


@dataclass(frozen=True)
class FoldSpec:
    """One train/test split of the record set."""

    fold_index: int
    train_records: tuple[str, ...]
    test_records: tuple[str, ...]
    seed: int

    def __post_init__(self):
        overlap = set(self.train_records) & set(self.test_records)
        if overlap:
            raise EvalError(f"records on both fold sides: {sorted(overlap)}")
        if not self.train_records or not self.test_records:
            raise EvalError("both fold sides must be non-empty")


def make_fivefold(record_ids, seed: int, n_folds: int = 5) -> list[FoldSpec]:
    """Shuffle records with a seeded RNG into near-equal test groups.

    Every record lands in exactly one test set; the remaining records
    form that fold's training side.
    """
    records = sorted(set(str(r) for r in record_ids))
    if len(records) < n_folds:
        raise EvalError(
            f"need at least {n_folds} records for {n_folds} folds, "
            f"got {len(records)}"
        )
    rng = np.random.default_rng(seed)
    shuffled = [records[i] for i in rng.permutation(len(records))]
    base, extra = divmod(len(shuffled), n_folds)
    folds = []
    start = 0
    for i in range(n_folds):
        size = base + (1 if i < extra else 0)
        test = shuffled[start : start + size]
        start += size
        train = [r for r in shuffled if r not in set(test)]
        folds.append(
            FoldSpec(i, tuple(sorted(train)), tuple(sorted(test)), seed)
        )
    return folds


@dataclass(frozen=True)
class Metrics:
    """Scores of one prediction set against its true labels."""

    accuracy: float
    macro_f1: float
    sensitivity: float
    specificity: float
    f1_per_class: dict
    confusion: dict  # (true_label, predicted_label) -> count


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_metrics(true_labels, predicted_labels, af_label: str = LABEL_AF) -> Metrics:
    """Score predictions; empty-denominator F1 terms count as zero."""
    true = [str(t) for t in true_labels]
    pred = [str(p) for p in predicted_labels]
    if not true:
        raise EvalError("cannot score an empty label list")
    if len(true) != len(pred):
        raise EvalError(
            f"{len(true)} true labels vs {len(pred)} predictions"
        )
    confusion = Counter(zip(true, pred))
    classes = sorted(set(true) | set(pred))
    f1_per_class = {}
    for c in classes:
        tp = confusion.get((c, c), 0)
        fp = sum(v for (t, p), v in confusion.items() if p == c) - tp
        fn = sum(v for (t, p), v in confusion.items() if t == c) - tp
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        f1_per_class[c] = _ratio(2 * precision * recall, precision + recall)
    correct = sum(confusion.get((c, c), 0) for c in classes)
    af_hits = sum(1 for t, p in zip(true, pred) if t == af_label and p == af_label)
    af_total = sum(1 for t in true if t == af_label)
    rest_hits = sum(
        1 for t, p in zip(true, pred) if t != af_label and p != af_label
    )
    rest_total = len(true) - af_total
    return Metrics(
        accuracy=correct / len(true),
        macro_f1=sum(f1_per_class.values()) / len(f1_per_class),
        sensitivity=_ratio(af_hits, af_total),
        specificity=_ratio(rest_hits, rest_total),
        f1_per_class=f1_per_class,
        confusion=dict(confusion),
    )


@dataclass(frozen=True)
class MetricAverages:
    """Arithmetic means of the headline scores across folds."""

    accuracy: float
    macro_f1: float
    sensitivity: float
    specificity: float


def average_metrics(per_fold) -> MetricAverages:
    per_fold = list(per_fold)
    if not per_fold:
        raise EvalError("nothing to average")
    n = len(per_fold)
    return MetricAverages(
        accuracy=sum(m.accuracy for m in per_fold) / n,
        macro_f1=sum(m.macro_f1 for m in per_fold) / n,
        sensitivity=sum(m.sensitivity for m in per_fold) / n,
        specificity=sum(m.specificity for m in per_fold) / n,
    )


def split_fold_windows(windows, fold: FoldSpec):
    """Partition windows into (train, test) by their record id."""
    train_set = set(fold.train_records)
    test_set = set(fold.test_records)
    stray = {w.record_id for w in windows} - train_set - test_set
    if stray:
        raise EvalError(
            f"windows from records outside the fold: {sorted(stray)}"
        )
    train = [w for w in windows if w.record_id in train_set]
    test = [w for w in windows if w.record_id in test_set]
    return train, test


def _matrix_cache_path(
    cache_dir, scheme: EncodingScheme, row_ids, col_ids
) -> Path:
    key = json.dumps(
        {
            "fingerprint": compressor_fingerprint(),
            "scheme": scheme.params(),
            "rows": list(row_ids),
            "cols": list(col_ids),
        },
        sort_keys=True,
    )
    digest = hashlib.sha256(key.encode()).hexdigest()[:24]
    return Path(cache_dir) / f"ncd-{digest}.ncdm"


def cross_matrix(
    test_windows,
    train_windows,
    scheme: EncodingScheme,
    workers: int = 1,
    cache_dir=None,
) -> DistanceMatrix:
    """Test-by-train NCD matrix, reloaded from ``cache_dir`` when present.

    A cached file is trusted only if its ids, scheme and compressor
    fingerprint all match; anything else is recomputed and overwritten.
    """
    row_ids = tuple(window_id(w) for w in test_windows)
    col_ids = tuple(window_id(w) for w in train_windows)
    path = None
    if cache_dir is not None:
        path = _matrix_cache_path(cache_dir, scheme, row_ids, col_ids)
        if path.exists():
            stored = load_matrix(path)
            if (
                stored.row_ids == row_ids
                and stored.col_ids == col_ids
                and stored.scheme_name == scheme.name
                and stored.fingerprint == compressor_fingerprint()
            ):
                return stored
    test_blobs = [encode(w.values, scheme) for w in test_windows]
    train_blobs = [encode(w.values, scheme) for w in train_windows]
    values = distance_matrix(test_blobs, train_blobs, workers=workers)
    matrix = DistanceMatrix(values, row_ids, col_ids, scheme.name)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_matrix(path, matrix)
    return matrix


@dataclass
class FoldOutcome:
    """Everything produced by one fold of the cross-validation."""

    fold: FoldSpec
    scheme: EncodingScheme
    n_train: int
    n_test: int
    test_ids: tuple[str, ...]
    true_labels: tuple[str, ...]
    metrics_by_k: dict
    predictions_by_k: dict | None
    notes: tuple[str, ...]


@dataclass
class CrossvalReport:
    """Fold outcomes plus per-k averages for one configuration."""

    measure: str
    m_seq: int
    scheme_name: str
    seed: int
    fingerprint: str
    ks: tuple[int, ...]
    folds: list
    failures: list  # (fold_index, message) for folds that aborted
    avg_by_k: dict
    best_k: int
    best_avg_macro_f1: float

    @property
    def complete(self) -> bool:
        return not self.failures


def _single_measure(windows):
    measures = {w.measure for w in windows}
    m_seqs = {w.m_seq for w in windows}
    if len(measures) != 1 or len(m_seqs) != 1:
        raise EvalError(
            f"windows mix measures {sorted(measures)} or lengths {sorted(m_seqs)}"
        )
    return measures.pop(), m_seqs.pop()


def _fit_fold_scheme(
    train_windows, scheme_name, sampling_rate, fit_globally, all_windows
):
    source = all_windows if fit_globally else train_windows
    values = np.concatenate([np.asarray(w.values) for w in source])
    return fit_scheme_params(values, scheme_name, sampling_rate)


def _run_fold(
    fold,
    train_w,
    test_w,
    scheme_name,
    ks,
    *,
    sampling_rate,
    fit_globally,
    all_windows,
    workers,
    cache_dir,
    keep_predictions,
) -> FoldOutcome:
    if not train_w or not test_w:
        raise EvalError(f"fold {fold.fold_index}: a side has no windows")
    scheme = _fit_fold_scheme(
        train_w, scheme_name, sampling_rate, fit_globally, all_windows
    )
    matrix = cross_matrix(test_w, train_w, scheme, workers, cache_dir)
    train_labels = [w.class_label for w in train_w]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sweep = sweep_k(matrix.values, train_labels, ks)
    true = tuple(w.class_label for w in test_w)
    metrics_by_k = {}
    predictions_by_k = {} if keep_predictions else None
    for k in ks:
        pred = sweep.predictions(k)
        metrics_by_k[k] = compute_metrics(true, pred)
        if keep_predictions:
            predictions_by_k[k] = tuple(pred)
    return FoldOutcome(
        fold=fold,
        scheme=scheme,
        n_train=len(train_w),
        n_test=len(test_w),
        test_ids=tuple(window_id(w) for w in test_w),
        true_labels=true,
        metrics_by_k=metrics_by_k,
        predictions_by_k=predictions_by_k,
        notes=tuple(str(w.message) for w in caught),
    )


def run_crossval(
    windows,
    scheme_name: str,
    ks=(1,),
    *,
    seed: int = 0,
    n_folds: int = 5,
    scan: bool = False,
    fit_globally: bool = False,
    workers: int = 1,
    cache_dir=None,
    sampling_rate: int = 250,
    keep_predictions: bool = False,
) -> CrossvalReport:
    """Per-patient cross-validation of one windowing/encoding config.

    ``scan=True`` extends ``ks`` with every odd k up to the smallest
    training side, which is what a dense best-k search needs; the
    distance matrices are built once per fold either way. A fold that
    raises is recorded in ``failures`` and the report is marked
    incomplete rather than discarded.
    """
    windows = list(windows)
    if not windows:
        raise EvalError("no windows to evaluate")
    measure, m_seq = _single_measure(windows)
    ks = sorted({int(k) for k in ks})
    if not ks or ks[0] < 1:
        raise EvalError("k values must be positive integers")
    folds = make_fivefold({w.record_id for w in windows}, seed, n_folds)
    splits = [split_fold_windows(windows, f) for f in folds]
    if scan:
        smallest_train = min(len(tr) for tr, _ in splits)
        ks = sorted(set(ks) | set(range(1, smallest_train + 1, 2)))
    outcomes: list[FoldOutcome] = []
    failures: list[tuple[int, str]] = []
    for fold, (train_w, test_w) in zip(folds, splits):
        try:
            outcomes.append(
                _run_fold(
                    fold,
                    train_w,
                    test_w,
                    scheme_name,
                    ks,
                    sampling_rate=sampling_rate,
                    fit_globally=fit_globally,
                    all_windows=windows,
                    workers=workers,
                    cache_dir=cache_dir,
                    keep_predictions=keep_predictions,
                )
            )
        except Exception as exc:  # noqa: BLE001 - fold context preserved
            failures.append(
                (fold.fold_index, f"{type(exc).__name__}: {exc}")
            )
    if not outcomes:
        raise EvalError(f"every fold failed: {failures}")
    avg_by_k = {
        k: average_metrics([o.metrics_by_k[k] for o in outcomes]) for k in ks
    }
    best_k = max(ks, key=lambda k: (avg_by_k[k].macro_f1, -k))
    return CrossvalReport(
        measure=measure,
        m_seq=m_seq,
        scheme_name=scheme_name,
        seed=seed,
        fingerprint=compressor_fingerprint(),
        ks=tuple(ks),
        folds=outcomes,
        failures=failures,
        avg_by_k=avg_by_k,
        best_k=best_k,
        best_avg_macro_f1=avg_by_k[best_k].macro_f1,
    )


def fewshot_k(n: int) -> int:
    """Neighbour count for n-shot subfolds: odd nearest 2*sqrt(n).

    Equidistant cases round upward, so the result is the unique odd
    integer in (2*sqrt(n) - 1, 2*sqrt(n) + 1].
    """
    if n < 1:
        raise EvalError(f"shot count must be positive, got {n}")
    return 2 * isqrt(n) + 1


@dataclass(frozen=True)
class FewshotRow:
    """Score of one n-per-class subfold over the whole test side."""

    n: int
    subfold_index: int
    k: int
    accuracy: float
    macro_f1: float
    faulty: bool  # predicted a single class for every test window


@dataclass
class FewshotReport:
    """All subfold scores for one fold and shot ladder."""

    fold: FoldSpec
    measure: str
    m_seq: int
    scheme_name: str
    seed: int
    fingerprint: str
    shots: tuple[int, ...]
    n_test: int
    rows: list
    subfold_counts: dict
    avg_accuracy: dict
    avg_macro_f1: dict
    faulty_counts: dict


def run_fewshot(
    windows,
    scheme_name: str,
    shots=DEFAULT_SHOTS,
    *,
    seed: int = 0,
    fold_index: int = 0,
    n_folds: int = 5,
    fit_globally: bool = False,
    workers: int = 1,
    cache_dir=None,
    sampling_rate: int = 250,
) -> FewshotReport:
    """Score disjoint n-per-class training subfolds on one fold.

    The full fold matrix is computed (or loaded) once; every subfold is
    a column subset of it. Subfold count per n is the minority-class
    training count floor-divided by n; the leftover is discarded.
    """
    windows = list(windows)
    if not windows:
        raise EvalError("no windows to evaluate")
    measure, m_seq = _single_measure(windows)
    shots = tuple(int(n) for n in shots)
    if not shots:
        raise EvalError("empty shot ladder")
    folds = make_fivefold({w.record_id for w in windows}, seed, n_folds)
    if not 0 <= fold_index < len(folds):
        raise EvalError(f"fold_index {fold_index} outside 0..{len(folds) - 1}")
    fold = folds[fold_index]
    train_w, test_w = split_fold_windows(windows, fold)
    if not train_w or not test_w:
        raise EvalError(f"fold {fold.fold_index}: a side has no windows")
    scheme = _fit_fold_scheme(
        train_w, scheme_name, sampling_rate, fit_globally, windows
    )
    matrix = cross_matrix(test_w, train_w, scheme, workers, cache_dir)
    train_labels = np.asarray([w.class_label for w in train_w])
    af_idx = np.flatnonzero(train_labels == LABEL_AF)
    rest_idx = np.flatnonzero(train_labels != LABEL_AF)
    minority = min(af_idx.size, rest_idx.size)
    bad = [n for n in shots if n > minority]
    if bad:
        raise EvalError(
            f"shot counts {bad} exceed the minority-class training count; "
            f"feasible n <= {minority}"
        )
    true = tuple(w.class_label for w in test_w)
    rng = np.random.default_rng(seed)
    rows: list[FewshotRow] = []
    for n in shots:
        k = fewshot_k(n)
        n_sub = minority // n
        af_order = rng.permutation(af_idx)
        rest_order = rng.permutation(rest_idx)
        for s in range(n_sub):
            cols = np.concatenate(
                [af_order[s * n : (s + 1) * n], rest_order[s * n : (s + 1) * n]]
            )
            sub_labels = train_labels[cols]
            pred = sweep_k(matrix.values[:, cols], sub_labels, [k]).predictions(k)
            scored = compute_metrics(true, pred)
            rows.append(
                FewshotRow(
                    n=n,
                    subfold_index=s,
                    k=k,
                    accuracy=scored.accuracy,
                    macro_f1=scored.macro_f1,
                    faulty=bool(np.unique(pred).size == 1),
                )
            )
    subfold_counts = {n: sum(1 for r in rows if r.n == n) for n in shots}
    avg_accuracy = {}
    avg_macro_f1 = {}
    faulty_counts = {}
    for n in shots:
        group = [r for r in rows if r.n == n]
        avg_accuracy[n] = sum(r.accuracy for r in group) / len(group)
        avg_macro_f1[n] = sum(r.macro_f1 for r in group) / len(group)
        faulty_counts[n] = sum(1 for r in group if r.faulty)
    return FewshotReport(
        fold=fold,
        measure=measure,
        m_seq=m_seq,
        scheme_name=scheme_name,
        seed=seed,
        fingerprint=compressor_fingerprint(),
        shots=shots,
        n_test=len(test_w),
        rows=rows,
        subfold_counts=subfold_counts,
        avg_accuracy=avg_accuracy,
        avg_macro_f1=avg_macro_f1,
        faulty_counts=faulty_counts,
    )


def class_block_means(values, row_labels, col_labels) -> dict:
    """Mean distance of every (row class, column class) block.

    On a per-class subset matrix the within-class block means sitting
    below the cross-class ones is the signature of a usable distance.
    """
    values = np.asarray(values)
    rows = np.asarray([str(r) for r in row_labels])
    cols = np.asarray([str(c) for c in col_labels])
    if values.shape != (rows.size, cols.size):
        raise EvalError(
            f"matrix shape {values.shape} does not match "
            f"{rows.size} row labels x {cols.size} column labels"
        )
    out = {}
    for r in sorted(set(rows)):
        for c in sorted(set(cols)):
            block = values[np.ix_(rows == r, cols == c)]
            out[(r, c)] = float(block.mean())
    return out


def write_crossval_csv(path, report: CrossvalReport) -> None:
    """Per-fold rows for every k, then per-k average rows (fold=avg)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(CROSSVAL_HEADER) + "\n")
        for outcome in report.folds:
            for k in report.ks:
                m = outcome.metrics_by_k[k]
                fh.write(
                    f"{outcome.fold.fold_index},{k},{outcome.n_train},"
                    f"{outcome.n_test},{m.accuracy:.6f},{m.macro_f1:.6f},"
                    f"{m.sensitivity:.6f},{m.specificity:.6f}\n"
                )
        for k in report.ks:
            a = report.avg_by_k[k]
            fh.write(
                f"avg,{k},,,{a.accuracy:.6f},{a.macro_f1:.6f},"
                f"{a.sensitivity:.6f},{a.specificity:.6f}\n"
            )


def write_predictions_csv(path, report: CrossvalReport) -> None:
    """Row per test window per k: test_id, true, predicted, k."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(PREDICTIONS_HEADER) + "\n")
        for outcome in report.folds:
            if outcome.predictions_by_k is None:
                raise EvalError(
                    "predictions were not kept; rerun with keep_predictions"
                )
            for k in report.ks:
                preds = outcome.predictions_by_k[k]
                for tid, t, p in zip(outcome.test_ids, outcome.true_labels, preds):
                    fh.write(f"{tid},{t},{p},{k}\n")


def write_fewshot_csv(path, report: FewshotReport) -> None:
    """One row per subfold for score-distribution plots."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(FEWSHOT_HEADER) + "\n")
        for r in report.rows:
            fh.write(
                f"n{r.n}-s{r.subfold_index:05d},{r.n},{r.k},"
                f"{r.accuracy:.6f},{r.macro_f1:.6f},{int(r.faulty)}\n"
            )
