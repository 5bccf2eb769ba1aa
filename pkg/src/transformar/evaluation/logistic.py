"""Five-parameter logistic mapping fitted by Levenberg-Marquardt."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateInputError, NumericError


def logistic5(q, beta) -> np.ndarray:
    """b1 * (1/2 - 1 / (1 + exp(b2 (q - b3)))) + b4 q + b5."""
    b1, b2, b3, b4, b5 = beta
    q = np.asarray(q, dtype=np.float64)
    u = b2 * (q - b3)
    # 1 / (1 + e^u) without overflow
    s = 0.5 * (1.0 - np.tanh(0.5 * u))
    return b1 * (0.5 - s) + b4 * q + b5


def _jacobian(q, beta) -> np.ndarray:
    b1, b2, b3, _, _ = beta
    s = 0.5 * (1.0 - np.tanh(0.5 * b2 * (q - b3)))
    ds = s * (1.0 - s)
    return np.column_stack([0.5 - s, b1 * ds * (q - b3), -b1 * ds * b2, q, np.ones_like(q)])


def levenberg_marquardt(q, m, beta0, max_iter: int = 200, rtol: float = 1e-10):
    """Damped Gauss-Newton with Marquardt diagonal scaling; returns (beta, sse)."""
    beta = np.array(beta0, dtype=np.float64)
    r = logistic5(q, beta) - m
    cost = float(r @ r)
    lam = 1e-3
    for _ in range(max_iter):
        jac = _jacobian(q, beta)
        a = jac.T @ jac
        g = jac.T @ r
        diag = np.maximum(np.diag(a), 1e-12)
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(a + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = beta + step
            r_new = logistic5(q, trial) - m
            new_cost = float(r_new @ r_new)
            if np.isfinite(new_cost) and new_cost < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        improvement = (cost - new_cost) / max(cost, 1e-300)
        beta, r, cost = trial, r_new, new_cost
        lam = max(lam / 10.0, 1e-15)
        if improvement < rtol or cost == 0.0:
            break
    return beta, cost


def _affine_polish(q, m, beta):
    """Refit the best affine map of the current curve; never increases the SSE."""
    f = logistic5(q, beta)
    design = np.column_stack([f, np.ones_like(f)])
    (a, b), *_ = np.linalg.lstsq(design, m, rcond=None)
    b1, b2, b3, b4, b5 = beta
    return np.array([a * b1, b2, b3, a * b4, a * b5 + b])


def _sse(q, m, beta) -> float:
    r = logistic5(q, beta) - m
    return float(r @ r)


def fit_logistic(q, m, max_iter: int = 200, restarts: int = 5, seed: int = 0) -> np.ndarray:
    """Least-squares fit of the five-parameter logistic from scores ``q`` to MOS ``m``.

    The linear submodel (b1 = 0) is always a candidate, so the fit is never
    worse than an affine map. If the primary run fails (non-finite or worse
    than linear) up to ``restarts`` perturbed starts are tried.
    """
    q = np.asarray(q, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if q.shape != m.shape or q.ndim != 1:
        raise DegenerateInputError(f"fit_logistic: need equal-length 1-D inputs, got {q.shape} and {m.shape}")
    if q.size < 5:
        raise DegenerateInputError(f"fit_logistic: need at least 5 points, got {q.size}")
    if not np.all(np.isfinite(q)) or not np.all(np.isfinite(m)):
        raise NumericError("fit_logistic: non-finite input")
    std = q.std()
    if std == 0.0:
        raise DegenerateInputError("fit_logistic: objective scores are constant")

    slope, intercept = np.polyfit(q, m, 1)
    linear = np.array([0.0, 1.0 / std, q.mean(), slope, intercept])
    candidates = [(linear, _sse(q, m, linear))]

    init = np.array([m.max() - m.min(), 1.0 / std, q.mean(), 0.01, m.mean()])
    beta, cost = levenberg_marquardt(q, m, init, max_iter)
    ok = np.all(np.isfinite(beta)) and cost <= candidates[0][1]
    if np.all(np.isfinite(beta)):
        candidates.append((beta, cost))
    if not ok:
        rng = np.random.default_rng(seed)
        for _ in range(restarts):
            start = init * rng.uniform(0.5, 1.5, size=5) + rng.normal(0, 0.1, size=5) * np.array([1, 1 / std, std, 0.1, 1])
            b, c = levenberg_marquardt(q, m, start, max_iter)
            if np.all(np.isfinite(b)):
                candidates.append((b, c))
    best = min(candidates, key=lambda bc: bc[1])[0]
    polished = _affine_polish(q, m, best)
    if np.all(np.isfinite(polished)) and _sse(q, m, polished) <= _sse(q, m, best):
        best = polished
    if not np.all(np.isfinite(best)):
        raise NumericError("fit_logistic: no finite solution found")
    return best
