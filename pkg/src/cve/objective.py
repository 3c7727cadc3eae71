"""Sample conditional-variance objectives.

For a frame ``V`` and shift ``s0`` the squared distance of ``X_j`` to the
affine plane ``s0 + span{V}`` is ``||X_j - s0||^2 - ||V^T (X_j - s0)||^2``.
Kernel weights within the slice are ``K(d_j / h)`` normalized to one, and the
slice variance of ``Y`` under those weights is averaged over all shifts
``s0 = X_i`` (``L_n``), or averaged with weights proportional to slice
occupancy (the weighted objective).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSliceError,
    InvalidArgumentError,
    InvalidDimensionError,
)

UNDERFLOW = 1e-300

KERNELS = ("gaussian", "epanechnikov-squared", "exponential")


@dataclass(frozen=True)
class DataSet:
    """Response ``y`` (n,) and predictors ``X`` (n, p), rows are observations."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise InvalidArgumentError(
                f"y has {y.shape[0]} entries but X has shape {X.shape}")
        if y.shape[0] < 2:
            raise InvalidArgumentError("need at least two observations")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise InvalidArgumentError("data contain non-finite entries")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, bandwidth ``h`` (squared-distance units) and constant."""

    kind: str = "gaussian"
    h: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise InvalidArgumentError(f"unknown kernel {self.kind!r}; choose from {KERNELS}")
        if not (np.isfinite(self.h) and self.h > 0):
            raise InvalidArgumentError(f"bandwidth must be positive, got {self.h}")
        if not self.scale > 0:
            raise InvalidArgumentError(f"kernel constant must be positive, got {self.scale}")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "gaussian":
            k = np.exp(-0.5 * z * z)
        elif self.kind == "exponential":
            k = np.exp(-z)
        else:
            k = np.maximum(1.0 - z * z, 0.0) ** 2
        return self.scale * k

    def with_bandwidth(self, h):
        return KernelSpec(self.kind, float(h), self.scale)


@dataclass
class LocalStats:
    ybar1: float
    ybar2: float
    Ltilde: float
    weights: np.ndarray = field(repr=False)


def _frame(V, p):
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.ndim != 2 or V.shape[0] != p:
        raise InvalidDimensionError(f"frame shape {V.shape} does not match p={p}")
    return V


def distances(data, V, s0):
    """Squared distances of every ``X_j`` to the plane ``s0 + span{V}``."""
    X = data.X
    V = _frame(V, X.shape[1])
    s0 = np.asarray(s0, dtype=float).ravel()
    if s0.shape[0] != X.shape[1]:
        raise InvalidDimensionError(f"shift has length {s0.shape[0]}, expected {X.shape[1]}")
    D = X - s0
    d = np.einsum("ij,ij->i", D, D) - np.einsum("ij,ij->i", D @ V, D @ V)
    return np.maximum(d, 0.0)


def kernel_weights(d, kernel, index=None):
    """Normalized slice weights ``K(d_j/h) / sum_l K(d_l/h)``."""
    k = kernel(np.asarray(d, dtype=float) / kernel.h)
    total = k.sum()
    if not total > UNDERFLOW:
        raise DegenerateSliceError(
            "all kernel values underflow; increase the bandwidth", index=index)
    return k / total


def local_stats(y, w):
    """Weighted first/second moments of ``y`` and the slice variance."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.shape != w.shape:
        raise InvalidDimensionError(f"y {y.shape} and weights {w.shape} differ")
    yc, offset = _center(y)
    m = float(w @ yc)
    # two-pass form; equals ybar2 - ybar1**2 up to round-off but never cancels
    Ltilde = float(w @ (yc - m) ** 2)
    return LocalStats(offset + m, float(w @ (y * y)), Ltilde, w)


def _center(y):
    """``(y - offset, offset)`` with the offset near the mean of ``y``.

    Shifting by ``y[0]`` first gives exact zeros for a constant response, so
    every slice variance and gradient coefficient vanishes identically.
    """
    yc = y - y[0]
    shift = yc.mean()
    return yc - shift, float(y[0] + shift)


def Ltilde_n(data, V, s0, kernel):
    """Slice variance estimate at a single shift ``s0``."""
    w = kernel_weights(distances(data, V, s0), kernel)
    return local_stats(data.y, w).Ltilde


def _pairwise_sq(A):
    A = A - A.mean(axis=0)
    sq = np.einsum("ij,ij->i", A, A)
    G = sq[:, None] + sq[None, :] - 2.0 * (A @ A.T)
    np.fill_diagonal(G, 0.0)
    return G


class SliceCache:
    """Everything one evaluation at ``V`` needs, shared by value and gradient.

    ``D[i, j]`` is the distance of ``X_j`` to the slice through shift ``X_i``;
    ``K`` the kernel values, ``W`` the row-normalized weights, ``ybar1`` and
    ``Ltilde`` the per-shift slice mean and variance.
    """

    def __init__(self, data, V, kernel, base_sq=None):
        X = data.X
        V = _frame(V, X.shape[1])
        if base_sq is None:
            base_sq = _pairwise_sq(X)
        self.data = data
        self.V = V
        self.kernel = kernel
        D = base_sq - _pairwise_sq(X @ V)
        np.maximum(D, 0.0, out=D)
        self.D = D
        K = kernel(D / kernel.h)
        rows = K.sum(axis=1)
        bad = np.flatnonzero(~(rows > UNDERFLOW))
        if bad.size:
            raise DegenerateSliceError(
                f"slice at shift index {bad[0]} is empty; increase the bandwidth",
                index=int(bad[0]))
        self.K = K
        self.rowsum = rows
        self.W = K / rows[:, None]
        yc, offset = _center(data.y)
        m = self.W @ yc
        self.ybar1 = m + offset
        self.resid2 = (yc[None, :] - m[:, None]) ** 2
        self.Ltilde = np.einsum("ij,ij->i", self.W, self.resid2)

    @property
    def value(self):
        return float(np.mean(self.Ltilde))

    def slice_weights(self):
        """Occupancy weights excluding the self-term ``K(d_ii / h) = K(0)``."""
        off = self.rowsum - np.diag(self.K)
        total = off.sum()
        if not total > UNDERFLOW:
            raise DegenerateSliceError("no slice contains a second observation")
        return off / total, total

    @property
    def weighted_value(self):
        wt, _ = self.slice_weights()
        return float(wt @ self.Ltilde)


class Objective:
    """Evaluator bound to one data set; caches the ``V``-free distance part."""

    def __init__(self, data, kernel, weighted=False):
        self.data = data
        self.kernel = kernel
        self.weighted = weighted
        self._base_sq = _pairwise_sq(data.X)

    def cache(self, V):
        return SliceCache(self.data, V, self.kernel, base_sq=self._base_sq)

    def __call__(self, V):
        c = self.cache(V)
        return c.weighted_value if self.weighted else c.value


def objective_Ln(data, V, kernel):
    """``L_n(V)``: mean over shifts ``X_i`` of the slice variance."""
    return SliceCache(data, V, kernel).value


def objective_Ln_weighted(data, V, kernel):
    """Occupancy-weighted objective ``sum_i wtilde_i Ltilde_n(V, X_i)``."""
    if data.n < 2:
        raise InvalidArgumentError("weighted objective needs n >= 2")
    return SliceCache(data, V, kernel).weighted_value


def oracle_L_toy(V, Sigma, B, eta2):
    """Population objective of the bivariate linear toy model.

    ``L(V) = (B^T V)^2 / (V^T Sigma^{-1} V) + eta^2`` for ``Y = B^T X + eps``
    with ``X ~ N(0, Sigma)``, ``p = 2`` and ``q = 1``.
    """
    V = np.asarray(V, dtype=float).ravel()
    B = np.asarray(B, dtype=float).ravel()
    Sigma = np.asarray(Sigma, dtype=float)
    if V.shape != (2,) or B.shape != (2,) or Sigma.shape != (2, 2):
        raise InvalidDimensionError("toy oracle is defined for p = 2, q = 1")
    try:
        c = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise InvalidArgumentError("Sigma must be positive definite") from None
    z = np.linalg.solve(c, V)
    return float((B @ V) ** 2 / (z @ z) + eta2)
