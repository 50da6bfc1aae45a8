"""k-nearest-neighbour voting over a precomputed distance matrix.

Rows of the matrix are query items, columns are reference (training)
items. Neighbour order is decided by distance with ties going to the
lower column index (stable sort), votes are a plain majority, and a
tied vote takes the label of the single nearest neighbour. ``k`` larger
than the training side is clamped to it with a warning.

:func:`classify_row` is the readable single-query reference; the
chunked :func:`sweep_k` answers many ``k`` at once by sorting each row
once and reading vote counts off cumulative sums, which is what makes
dense best-``k`` scans affordable.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np


def classify_row(distances, labels, k: int):
    """Predict one query's label from its distances to training items."""
    dist = np.asarray(distances)
    labels = list(labels)
    if dist.ndim != 1 or len(labels) != dist.shape[0]:
        raise ValueError("distances and labels must be equal-length 1-D")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if k > len(labels):
        warnings.warn(
            f"k={k} exceeds training size {len(labels)}; clamped",
            stacklevel=2,
        )
        k = len(labels)
    order = np.argsort(dist, kind="stable")
    votes = Counter(labels[i] for i in order[:k])
    top = votes.most_common()
    if len(top) > 1 and top[0][1] == top[1][1]:
        return labels[order[0]]
    return top[0][0]


@dataclass(frozen=True)
class SweepResult:
    """Predictions for every requested ``k`` over one distance matrix."""

    requested_ks: tuple[int, ...]
    ks: tuple[int, ...]  # after clamping to the training size
    classes: tuple[str, ...]
    codes: np.ndarray  # (len(ks), n_rows) uint8 indices into classes

    @property
    def clamped(self) -> bool:
        return self.ks != self.requested_ks

    def predictions(self, k: int) -> np.ndarray:
        """Predicted labels for one requested ``k``."""
        idx = self.requested_ks.index(k)
        return np.asarray(self.classes)[self.codes[idx]]


def sweep_k(
    matrix, train_labels, ks, chunk_rows: int = 256
) -> SweepResult:
    """Classify every matrix row at every ``k`` in one pass per row.

    Each row chunk is argsorted once; per-class cumulative counts along
    the neighbour axis then give the vote tally for any ``k`` by pure
    indexing. Semantics match :func:`classify_row` exactly, including
    stable tie order and nearest-neighbour vote tie-breaks.
    """
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError("matrix must be 2-D (rows x training items)")
    n_rows, n_train = matrix.shape
    labels = np.asarray(list(train_labels))
    if labels.shape[0] != n_train:
        raise ValueError(
            f"{labels.shape[0]} labels for {n_train} matrix columns"
        )
    requested = tuple(int(k) for k in ks)
    if not requested:
        raise ValueError("ks must be non-empty")
    if min(requested) < 1:
        raise ValueError(f"k must be positive, got {min(requested)}")
    clamped = tuple(min(k, n_train) for k in requested)
    if clamped != requested:
        over = sorted({k for k in requested if k > n_train})
        warnings.warn(
            f"k={over} exceeds training size {n_train}; clamped",
            stacklevel=2,
        )

    classes, codes = np.unique(labels, return_inverse=True)
    if classes.shape[0] > 255:
        raise ValueError("more than 255 distinct labels")
    codes = codes.astype(np.uint8)
    n_classes = classes.shape[0]
    k_index = np.asarray(clamped, dtype=np.int64) - 1

    out = np.empty((len(clamped), n_rows), dtype=np.uint8)
    for start in range(0, n_rows, chunk_rows):
        stop = min(start + chunk_rows, n_rows)
        order = np.argsort(matrix[start:stop], axis=1, kind="stable")
        sorted_codes = codes[order]
        # counts[r, j, c] = votes for class c among the j+1 nearest
        one_hot = sorted_codes[:, :, None] == np.arange(n_classes, dtype=np.uint8)
        counts = np.cumsum(one_hot, axis=1, dtype=np.int32)
        at_k = counts[:, k_index, :]  # (chunk, n_k, n_classes)
        best = at_k.argmax(axis=2).astype(np.uint8)
        top = np.take_along_axis(at_k, best[:, :, None].astype(np.int64), 2)
        tied = (at_k == top).sum(axis=2) > 1
        nearest = sorted_codes[:, 0]
        best[tied] = np.broadcast_to(nearest[:, None], best.shape)[tied]
        out[:, start:stop] = best.T
    return SweepResult(
        requested_ks=requested,
        ks=clamped,
        classes=tuple(str(c) for c in classes),
        codes=out,
    )


def classify(matrix, train_labels, k: int) -> np.ndarray:
    """Predicted label per matrix row at a single ``k``."""
    return sweep_k(matrix, train_labels, [k]).predictions(k)
