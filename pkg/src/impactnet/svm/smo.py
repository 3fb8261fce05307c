"""C-SVC trained by sequential minimal optimization.

Dual problem, with Q_ij = y_i y_j K(x_i, x_j)::

    minimize    1/2 a^T Q a - sum(a)
    subject to  0 <= a_i <= C,  sum(y_i a_i) = 0

Working pairs are chosen by maximal violation for ``i`` and the
second-order gain for ``j``; iteration stops once the maximal KKT
violation ``m(a) - M(a)`` drops below ``tol``.  The decision function is
``f(x) = sum_i a_i y_i K(x_i, x) + b``; ``f > 0`` means TrueImpact, and
``f == 0`` falls to NonContact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import InvalidParameterError, SolverError
from ..kinematics import LabelValue
from .features import Standardizer

KERNELS = ("linear", "rbf")
TAU = 1e-12


def kernel_matrix(a: np.ndarray, b: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if kernel == "linear":
        return a @ b.T
    if kernel == "rbf":
        sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise InvalidParameterError(f"kernel must be one of {KERNELS}")


def dual_objective(alpha: np.ndarray, y: np.ndarray, k: np.ndarray) -> float:
    ay = alpha * y
    return float(0.5 * ay @ k @ ay - alpha.sum())


@dataclass
class DualSolution:
    alpha: np.ndarray
    bias: float
    iterations: int
    gap: float
    objective: float


def solve_dual(k: np.ndarray, y: np.ndarray, c: float, tol: float = 1e-3,
               max_iter: Optional[int] = None, polish: bool = True) -> DualSolution:
    """Solve the C-SVC dual for a precomputed kernel matrix and labels in {-1, +1}.

    With ``polish`` the SMO result is refined by solving the equality
    constrained problem on its free set exactly; the refinement is kept
    only if it stays inside the box and does not raise the objective.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if k.shape != (n, n):
        raise InvalidParameterError("kernel matrix does not match label count")
    if not c > 0:
        raise InvalidParameterError("C must be positive")
    if max_iter is None:
        max_iter = max(100_000, 100 * n)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # Q a - e
    diag = np.diag(k).copy()
    pos = y > 0
    # at a = 0: I_up holds the positives, I_low the negatives
    up = pos.copy()
    low = ~pos
    gap = np.inf
    it = 0
    while True:
        if not up.any() or not low.any():
            gap = 0.0
            break
        score = -y * grad
        up_scores = np.where(up, score, -np.inf)
        i = int(np.argmax(up_scores))
        m = up_scores[i]
        b_t = m - score
        gap = float(np.max(np.where(low, b_t, -np.inf)))
        if gap < tol:
            break
        if it >= max_iter:
            raise SolverError(
                f"SMO did not converge in {max_iter} iterations (KKT gap {gap:.3g})",
                {"iterations": it, "gap": gap, "tol": tol, "n": n, "C": c},
            )
        a_t = diag[i] + diag - 2.0 * k[i]
        a_t[a_t <= 0] = TAU
        gain = (b_t * b_t) / a_t
        gain[~low | (b_t <= 0)] = -np.inf
        j = int(np.argmax(gain))
        # move a_i by y_i * lam and a_j by -y_j * lam, which keeps y^T a fixed
        lam = b_t[j] / a_t[j]
        hi_i = c - alpha[i] if y[i] > 0 else alpha[i]
        hi_j = alpha[j] if y[j] > 0 else c - alpha[j]
        lam = min(lam, hi_i, hi_j)
        new_i = alpha[i] + y[i] * lam
        new_j = alpha[j] - y[j] * lam
        if lam == hi_i:
            new_i = c if y[i] > 0 else 0.0
        if lam == hi_j:
            new_j = 0.0 if y[j] > 0 else c
        lam_i = (new_i - alpha[i]) * y[i]
        lam_j = (alpha[j] - new_j) * y[j]
        alpha[i], alpha[j] = new_i, new_j
        grad += y * (lam_i * k[:, i] - lam_j * k[:, j])
        for t in (i, j):
            below, above = alpha[t] < c, alpha[t] > 0
            up[t] = (below and pos[t]) or (above and not pos[t])
            low[t] = (below and not pos[t]) or (above and pos[t])
        it += 1
    objective = dual_objective(alpha, y, k)
    if polish:
        refined = _polish(alpha, y, k, c)
        if refined is not None:
            obj2 = dual_objective(refined, y, k)
            if obj2 <= objective:
                alpha, objective = refined, obj2
                grad = y * (k @ (alpha * y)) - 1.0
    return DualSolution(alpha, -_rho(alpha, y, grad, c), it, gap, objective)


def _polish(alpha, y, k, c) -> Optional[np.ndarray]:
    """Stationary point of the dual on the face fixed by alpha's bounded entries."""
    free = np.flatnonzero((alpha > 0) & (alpha < c))
    if free.size == 0:
        return None
    fixed = np.flatnonzero((alpha <= 0) | (alpha >= c))
    yf = y[free]
    m = free.size
    lhs = np.zeros((m + 1, m + 1))
    lhs[:m, :m] = yf[:, None] * k[np.ix_(free, free)] * yf[None, :]
    lhs[:m, m] = y[free]
    lhs[m, :m] = y[free]
    rhs = np.empty(m + 1)
    rhs[:m] = 1.0 - yf * (k[np.ix_(free, fixed)] @ (y[fixed] * alpha[fixed]))
    rhs[m] = -(y[fixed] @ alpha[fixed])
    sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    if not np.allclose(lhs @ sol, rhs, rtol=0, atol=1e-9 * max(1.0, np.abs(rhs).max())):
        return None
    out = alpha.copy()
    out[free] = sol[:m]
    if np.any(out < 0) or np.any(out > c):
        return None
    return out


def _rho(alpha, y, grad, c) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        return float(yg[free].mean())
    at_upper = alpha >= c
    pos = y > 0
    ub_mask = (at_upper & ~pos) | (~at_upper & pos)
    lb_mask = (at_upper & pos) | (~at_upper & ~pos)
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if not np.isfinite(ub):
        return float(lb)
    if not np.isfinite(lb):
        return float(ub)
    return float((ub + lb) / 2.0)


def labels_to_signs(labels) -> np.ndarray:
    """TrueImpact -> +1, NonContact -> -1; numeric labels are passed through by sign."""
    out = []
    for v in labels:
        if isinstance(v, (LabelValue, str)):
            out.append(1.0 if LabelValue(v) is LabelValue.TRUE_IMPACT else -1.0)
        else:
            if v not in (1, -1):
                raise InvalidParameterError("numeric labels must be +1 or -1")
            out.append(float(v))
    return np.array(out)


@dataclass(eq=False)
class SvmModel:
    kernel: str
    c: float
    gamma: float
    feature_mask: Tuple[int, ...]
    standardizer: Standardizer
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    degenerate: bool = False
    iterations: int = 0
    objective: float = 0.0
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    train_ids: frozenset = frozenset()

    def prepare(self, features: np.ndarray) -> np.ndarray:
        """Select the masked columns of raw features and standardize them."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return self.standardizer.transform(x[:, list(self.feature_mask)])

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        z = self.prepare(features)
        if self.support_vectors.shape[0] == 0:
            return np.full(z.shape[0], self.bias)
        return kernel_matrix(z, self.support_vectors, self.kernel, self.gamma) @ self.dual_coef + self.bias


def train_svm(features: np.ndarray, labels: Sequence, kernel: str = "rbf", c: float = 1.0,
              gamma: Optional[float] = None, feature_mask: Optional[Sequence[int]] = None,
              tol: float = 1e-3, max_iter: Optional[int] = None,
              train_ids: Sequence[str] = ()) -> SvmModel:
    """Fit a C-SVC on raw features.

    The selected columns are z-scored with statistics from ``features``
    itself before any kernel evaluation.  ``gamma`` defaults to
    1 / number of selected features.  If every training point gets the
    same decision value the model is flagged ``degenerate``.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = labels_to_signs(labels)
    if x.shape[0] != y.size:
        raise InvalidParameterError(f"{x.shape[0]} feature rows but {y.size} labels")
    if not (y > 0).any() or not (y < 0).any():
        raise InvalidParameterError("training needs at least one event of each class")
    if kernel not in KERNELS:
        raise InvalidParameterError(f"kernel must be one of {KERNELS}")
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("features contain non-finite values")
    mask = tuple(range(x.shape[1])) if feature_mask is None else tuple(int(i) for i in feature_mask)
    if not mask or min(mask) < 0 or max(mask) >= x.shape[1]:
        raise InvalidParameterError("feature mask is empty or out of range")
    if gamma is None:
        gamma = 1.0 / len(mask)
    if not gamma > 0:
        raise InvalidParameterError("gamma must be positive")
    std = Standardizer.fit(x[:, list(mask)])
    z = std.transform(x[:, list(mask)])
    k = kernel_matrix(z, z, kernel, gamma)
    sol = solve_dual(k, y, c, tol, max_iter)
    sv = sol.alpha > 0
    decision = k[:, sv] @ (sol.alpha[sv] * y[sv]) + sol.bias
    degenerate = bool(np.ptp(decision) <= 1e-12 * max(1.0, np.abs(decision).max()))
    return SvmModel(kernel, float(c), float(gamma), mask, std, z[sv], sol.alpha[sv] * y[sv],
                    sol.bias, degenerate, sol.iterations, sol.objective, sol.alpha,
                    frozenset(train_ids))


def predict_svm(model: SvmModel, features: np.ndarray) -> Tuple[LabelValue, float]:
    """(label, decision value) for one raw feature vector; zero goes to NonContact."""
    d = float(model.decision_function(features)[0])
    return (LabelValue.TRUE_IMPACT if d > 0 else LabelValue.NON_CONTACT), d


def predict_svm_many(model: SvmModel, features: np.ndarray):
    d = model.decision_function(features)
    return [(LabelValue.TRUE_IMPACT if v > 0 else LabelValue.NON_CONTACT, float(v)) for v in d]
