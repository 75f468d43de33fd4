"""L2-regularized hinge-loss linear SVM and Platt score calibration.

The solver is dual coordinate descent (the standard solver for this problem),
run sequentially for determinism and stopped on the primal-dual gap. Warm
starts pass the previous dual variables for samples that are retained; the
weight vector is rebuilt from them so the primal/dual pair stays consistent.
The reported iterate sequence is the best-so-far primal objective, which is
non-increasing by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SvmSolution:
    weights: np.ndarray
    alpha: np.ndarray
    objective: float
    objective_trace: list[float] = field(default_factory=list)
    epochs: int = 0


def primal_objective(w: np.ndarray, X: np.ndarray, y: np.ndarray, c: float) -> float:
    """0.5 * ||w||^2 + C * sum(max(0, 1 - y * (X w)))."""
    margins = 1.0 - y * (X @ w)
    return 0.5 * float(w @ w) + c * float(np.sum(np.maximum(margins, 0.0)))


def solve_linear_svm(
    X: np.ndarray,
    y: np.ndarray,
    c: float,
    alpha0: np.ndarray | None = None,
    tol: float = 1e-6,
    max_epochs: int = 2000,
) -> SvmSolution:
    """Minimize the hinge-loss SVM objective; alpha0 warm-starts the dual."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("labels must be -1 or +1")
    alpha = np.zeros(n) if alpha0 is None else np.clip(np.asarray(alpha0, float), 0.0, c)
    if alpha.shape != (n,):
        raise ValueError("alpha0 length must match the sample count")
    w = X.T @ (alpha * y)
    qii = np.einsum("ij,ij->i", X, X)
    best_w = w.copy()
    best_obj = primal_objective(w, X, y, c)
    trace = [best_obj]
    epochs = 0
    for epoch in range(max_epochs):
        epochs = epoch + 1
        for i in range(n):
            if qii[i] <= 0.0:
                continue
            xi = X[i]
            g = y[i] * float(w @ xi) - 1.0
            a_old = alpha[i]
            a_new = min(max(a_old - g / qii[i], 0.0), c)
            if a_new != a_old:
                w += (a_new - a_old) * y[i] * xi
                alpha[i] = a_new
        primal = primal_objective(w, X, y, c)
        if primal < best_obj:
            best_obj = primal
            best_w = w.copy()
        trace.append(best_obj)
        dual = float(np.sum(alpha)) - 0.5 * float(w @ w)
        if primal - dual <= tol * max(1.0, abs(primal)):
            break
    return SvmSolution(
        weights=best_w, alpha=alpha, objective=best_obj, objective_trace=trace, epochs=epochs
    )


def platt_probability(margin, a: float, b: float):
    """Sigmoid p = 1 / (1 + exp(a * margin + b)), numerically stable."""
    z = a * np.asarray(margin, dtype=np.float64) + b
    out = np.where(z >= 0.0, np.exp(-np.clip(z, 0.0, None)) / (1.0 + np.exp(-np.clip(z, 0.0, None))), 1.0 / (1.0 + np.exp(np.clip(z, None, 0.0))))
    return float(out) if np.isscalar(margin) else out


def fit_platt(margins: np.ndarray, labels: np.ndarray, max_iter: int = 200) -> tuple[float, float]:
    """Fit (a, b) of the calibration sigmoid by Newton iterations.

    Targets use Platt's prior smoothing. Returns a < 0 so that larger margins
    map to larger probabilities; degenerate calibration sets (no margin
    spread) fall back to a unit-slope sigmoid centered on the mean margin.
    """
    m = np.asarray(margins, dtype=np.float64)
    yl = np.asarray(labels)
    pos = yl > 0
    n_pos = int(np.sum(pos))
    n_neg = int(len(yl) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("calibration needs both positive and negative samples")
    t = np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    a = 0.0
    b = math.log((n_neg + 1.0) / (n_pos + 1.0))

    def negloglik(av: float, bv: float) -> float:
        z = av * m + bv
        # log(1 + exp(z)) and z + log(1 + exp(-z)) stitched for stability
        soft = np.where(z >= 0, z + np.log1p(np.exp(-z)), np.log1p(np.exp(z)))
        return float(np.sum(t * soft + (1.0 - t) * (soft - z)))

    fval = negloglik(a, b)
    for _ in range(max_iter):
        z = a * m + b
        p = 1.0 / (1.0 + np.exp(np.clip(z, -500, 500)))
        # Gradient and Hessian of the negative log-likelihood in (a, b)
        d1 = t - p
        g_a = float(np.sum(d1 * m))
        g_b = float(np.sum(d1))
        if max(abs(g_a), abs(g_b)) < 1e-10:
            break
        d2 = p * (1.0 - p)
        h_aa = float(np.sum(d2 * m * m)) + 1e-12
        h_ab = float(np.sum(d2 * m))
        h_bb = float(np.sum(d2)) + 1e-12
        det = h_aa * h_bb - h_ab * h_ab
        if abs(det) < 1e-18:
            break
        da = -(h_bb * g_a - h_ab * g_b) / det
        db = -(-h_ab * g_a + h_aa * g_b) / det
        step = 1.0
        improved = False
        while step >= 1e-10:
            f_new = negloglik(a + step * da, b + step * db)
            if f_new < fval + 1e-12:
                a += step * da
                b += step * db
                fval = f_new
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    if a >= 0.0:
        center = float(np.mean(m))
        return -1.0, center
    return float(a), float(b)
