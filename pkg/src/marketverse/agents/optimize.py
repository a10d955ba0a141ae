"""Long-only portfolio solvers on the probability simplex."""

from __future__ import annotations

import numpy as np

DEFAULT_ITERATIONS = 500


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, n + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    # absorb rounding so the budget constraint holds to machine precision
    s = w.sum()
    if s != 1.0:
        w = w / s
    return w


def ridge(cov: np.ndarray, epsilon: float | None = None) -> np.ndarray:
    """``cov + eps*I`` with the default eps = 1e-8 * trace / N."""
    n = cov.shape[0]
    if epsilon is None:
        tr = float(np.trace(cov))
        epsilon = 1e-8 * tr / n if tr > 0 else 1e-12
    return cov + epsilon * np.eye(n)


def gershgorin_bound(m: np.ndarray) -> float:
    """Largest absolute row sum; bounds the spectral radius of ``m``."""
    return float(np.max(np.abs(m).sum(axis=1)))


def _projected_gradient(quad: np.ndarray, lin: np.ndarray, iterations: int, trace: list | None):
    """Minimise ``w'Qw - lin'w`` over the simplex with step ``1/L``, ``L = 2*gershgorin(Q)``.

    A step that fails to lower the objective ends the run, so the
    recorded objective sequence is non-increasing.
    """
    n = quad.shape[0]
    w = np.full(n, 1.0 / n)
    if n == 1:
        w = np.ones(1)
    objective = lambda x: float(x @ quad @ x - lin @ x)
    L = 2.0 * gershgorin_bound(quad)
    f = objective(w)
    if trace is not None:
        trace.append(f)
    if L == 0.0 or n == 1:
        return w
    step = 1.0 / L
    for _ in range(iterations):
        grad = 2.0 * quad @ w - lin
        w_new = project_simplex(w - step * grad)
        f_new = objective(w_new)
        if f_new > f:
            break
        w, f = w_new, f_new
        if trace is not None:
            trace.append(f)
    return w


def min_variance_weights(cov: np.ndarray, iterations: int = DEFAULT_ITERATIONS, trace: list | None = None) -> np.ndarray:
    """argmin ``w'Σw`` over long-only fully-invested weights.

    ``cov`` is used as given; regularise it with :func:`ridge` first if it
    may be singular.
    """
    cov = np.asarray(cov, dtype=np.float64)
    return _projected_gradient(cov, np.zeros(cov.shape[0]), iterations, trace)


def mean_variance_weights(
    mu: np.ndarray,
    cov: np.ndarray,
    risk_aversion: float,
    iterations: int = DEFAULT_ITERATIONS,
    trace: list | None = None,
) -> np.ndarray:
    """argmax ``mu'w - λ w'Σw`` over the simplex."""
    if not risk_aversion > 0:
        raise ValueError("risk_aversion must be > 0")
    cov = np.asarray(cov, dtype=np.float64)
    return _projected_gradient(risk_aversion * cov, np.asarray(mu, dtype=np.float64), iterations, trace)
