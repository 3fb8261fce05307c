"""Greedy sequential forward feature selection scored by stratified k-fold CV."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import InvalidParameterError
from .smo import labels_to_signs, train_svm


@dataclass(frozen=True)
class SelectionStep:
    feature: int
    cv_error: float


@dataclass
class SelectionResult:
    """Accepted features in selection order and the CV error after each step."""

    selected: Tuple[int, ...]
    trace: List[SelectionStep]
    baseline_error: float
    rejected: Optional[SelectionStep] = None  # best candidate of the final, non-improving step
    seed: int = 0
    k_folds: int = 5
    kernel: str = "rbf"
    c: float = 1.0
    gamma: Optional[float] = None
    n_features: int = 0
    fits: int = field(default=0, compare=False)

    @property
    def cv_error(self) -> float:
        return self.trace[-1].cv_error if self.trace else self.baseline_error


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold index per sample; each class is shuffled and dealt round-robin."""
    rng = np.random.Generator(np.random.PCG64(seed))
    folds = np.empty(y.size, dtype=np.int64)
    for cls in (1.0, -1.0):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = np.arange(idx.size) % k
    return folds


def _majority_error(y: np.ndarray, folds: np.ndarray, k: int) -> float:
    """CV error of the feature-less model: predict the training fold's majority (tie -> -1)."""
    wrong = 0
    for f in range(k):
        train = folds != f
        guess = 1.0 if (y[train] > 0).sum() > (y[train] < 0).sum() else -1.0
        wrong += int(np.count_nonzero(y[~train] != guess))
    return wrong / y.size


def cv_error(x: np.ndarray, y: np.ndarray, columns: Sequence[int], folds: np.ndarray, k: int,
             kernel: str = "rbf", c: float = 1.0, gamma: Optional[float] = None) -> float:
    """Fraction of samples misclassified when each fold is predicted by an
    SVM trained (and standardized) on the remaining folds."""
    wrong = 0
    for f in range(k):
        test = folds == f
        model = train_svm(x[~test], y[~test], kernel=kernel, c=c, gamma=gamma,
                          feature_mask=columns)
        d = model.decision_function(x[test])
        pred = np.where(d > 0, 1.0, -1.0)
        wrong += int(np.count_nonzero(pred != y[test]))
    return wrong / y.size


def sequential_forward_selection(features: np.ndarray, labels, k_folds: int = 5,
                                 max_features: Optional[int] = None, seed: int = 0,
                                 kernel: str = "rbf", c: float = 1.0,
                                 gamma: Optional[float] = None) -> SelectionResult:
    """Add, one at a time, the feature whose inclusion gives the lowest CV
    error; stop at the first step that does not strictly improve on the
    current error, or at ``max_features``.

    Candidates with equal CV error are broken by the lower column index.
    The starting error is that of a feature-less majority-class predictor.
    Fold assignment depends only on ``seed`` and the labels.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = labels_to_signs(labels)
    n, d = x.shape
    if y.size != n:
        raise InvalidParameterError(f"{n} feature rows but {y.size} labels")
    if max_features is None:
        max_features = d
    if max_features < 1:
        raise InvalidParameterError("max_features must be at least 1")
    if k_folds < 2:
        raise InvalidParameterError("k_folds must be at least 2")
    smallest = min(int((y > 0).sum()), int((y < 0).sum()))
    if smallest < k_folds:
        raise InvalidParameterError(
            f"each class needs at least k_folds={k_folds} samples for stratified folds "
            f"(smallest class has {smallest})")
    folds = stratified_folds(y, k_folds, seed)
    baseline = _majority_error(y, folds, k_folds)
    selected: List[int] = []
    trace: List[SelectionStep] = []
    current = baseline
    rejected = None
    fits = 0
    while len(selected) < min(max_features, d):
        best = None
        for j in range(d):
            if j in selected:
                continue
            err = cv_error(x, y, selected + [j], folds, k_folds, kernel, c, gamma)
            fits += k_folds
            if best is None or err < best.cv_error:
                best = SelectionStep(j, err)
        if best.cv_error < current:
            selected.append(best.feature)
            trace.append(best)
            current = best.cv_error
            if current == 0.0:
                break
        else:
            rejected = best
            break
    return SelectionResult(tuple(selected), trace, baseline, rejected, seed, k_folds, kernel,
                           float(c), gamma, d, fits)
