"""Analytic ambient gradients of the Gaussian-kernel objectives.

Every gradient here is a weighted sum of distance gradients
``grad d_j = -2 (X_j - s0)(X_j - s0)^T V``. For the objectives over all
shifts the pairwise sum collapses to a graph-Laplacian product
``-2 X^T (diag(S 1) - S) X V`` with ``S = C + C^T``, which costs
``O(n^2 + n p^2)`` once the slice cache exists.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, UnsupportedKernelError
from .objective import SliceCache, _center, _frame, distances, kernel_weights, local_stats


@dataclass
class GradientResult:
    G: np.ndarray
    value: float


def _require_gaussian(kernel):
    if kernel.kind != "gaussian":
        raise UnsupportedKernelError(
            f"analytic gradients exist only for the gaussian kernel, not {kernel.kind!r}")


def grad_distance(x, V, s0):
    """Gradient of ``||x - s0||^2 - ||V^T (x - s0)||^2`` with respect to ``V``."""
    x = np.asarray(x, dtype=float).ravel()
    s0 = np.asarray(s0, dtype=float).ravel()
    V = _frame(V, x.shape[0])
    if s0.shape != x.shape:
        raise InvalidArgumentError(f"x {x.shape} and s0 {s0.shape} differ")
    delta = x - s0
    return -2.0 * np.outer(delta, delta @ V)


def _laplacian_sum(X, C, V):
    # sum_ij C_ij grad d(X_j - X_i) = -2 X^T (diag(S 1) - S) X V
    S = C + C.T
    Xc = X - X.mean(axis=0)
    XV = Xc @ V
    return -2.0 * (Xc.T @ (S.sum(axis=1)[:, None] * XV - S @ XV))


def grad_Ltilde(data, V, s0, kernel):
    """Gradient of the slice variance at one shift ``s0``.

    ``(1/h^2) sum_j (Ltilde - (Y_j - ybar1)^2) w_j d_j grad d_j``.
    """
    _require_gaussian(kernel)
    V = _frame(V, data.p)
    d = distances(data, V, s0)
    w = kernel_weights(d, kernel)
    st = local_stats(data.y, w)
    yc, _ = _center(data.y)
    c = (st.Ltilde - (yc - w @ yc) ** 2) * w * d / kernel.h ** 2
    delta = data.X - np.asarray(s0, dtype=float).ravel()
    G = -2.0 * (delta.T @ (c[:, None] * (delta @ V)))
    return GradientResult(G, st.Ltilde)


def _ln_coefficients(cache):
    h2 = cache.kernel.h ** 2
    return (cache.Ltilde[:, None] - cache.resid2) * cache.W * cache.D / h2


def grad_from_cache(cache, weighted=False, mode="full"):
    """Value and gradient sharing the kernel pass stored in ``cache``."""
    _require_gaussian(cache.kernel)
    n = cache.data.n
    C = _ln_coefficients(cache)
    if not weighted:
        return GradientResult(_laplacian_sum(cache.data.X, C / n, cache.V), cache.value)
    if mode not in ("full", "partial"):
        raise InvalidArgumentError(f"mode must be 'full' or 'partial', got {mode!r}")
    wt, total = cache.slice_weights()
    value = float(wt @ cache.Ltilde)
    C = wt[:, None] * C
    if mode == "full":
        K = cache.K.copy()
        np.fill_diagonal(K, 0.0)
        C -= (cache.Ltilde - value)[:, None] * K * cache.D / (cache.kernel.h ** 2 * total)
    return GradientResult(_laplacian_sum(cache.data.X, C, cache.V), value)


def grad_Ln(data, V, kernel):
    """Gradient of ``L_n``: mean of the per-shift slice-variance gradients."""
    _require_gaussian(kernel)
    return grad_from_cache(SliceCache(data, V, kernel))


def grad_Ln_weighted(data, V, kernel, mode="full"):
    """Gradient of the occupancy-weighted objective.

    ``mode="full"`` differentiates the slice weights too; ``"partial"`` keeps
    only ``sum_i wtilde_i grad Ltilde_n(V, X_i)``.
    """
    _require_gaussian(kernel)
    if data.n < 2:
        raise InvalidArgumentError("weighted objective needs n >= 2")
    return grad_from_cache(SliceCache(data, V, kernel), weighted=True, mode=mode)


def finite_diff_check(objective, gradient, V, step=1e-6):
    """Largest discrepancy between ``gradient`` and central differences.

    Differences are taken entrywise in the ambient ``p x q`` space. The
    result is ``max |fd - G| / (1 + max(|f(V)|, max |G|))``.
    """
    if not 1e-8 <= step <= 1e-3:
        raise InvalidArgumentError(f"step must lie in [1e-8, 1e-3], got {step}")
    V = np.asarray(V, dtype=float)
    G = gradient.G if isinstance(gradient, GradientResult) else np.asarray(gradient, dtype=float)
    fd = np.empty_like(V)
    for idx in np.ndindex(*V.shape):
        E = np.zeros_like(V)
        E[idx] = step
        fd[idx] = (objective(V + E) - objective(V - E)) / (2.0 * step)
    scale = 1.0 + max(abs(float(objective(V))), float(np.max(np.abs(G))))
    return float(np.max(np.abs(fd - G)) / scale)
