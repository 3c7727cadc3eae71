"""Cross-validated choice of the reduction dimension.

For each candidate ``l`` a CVE fit ``Bhat_l`` is computed once on the full
data; ``Y`` is then predicted at every ``X_i`` by a leave-one-out
Nadaraya-Watson average over the reduced predictors ``Bhat_l^T X_j``,
``j != i``. The dimension with the smallest mean squared LOO residual wins.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .bandwidth import isotropic_variance, rot_from_variance
from .errors import CVEError, InvalidArgumentError, InvalidDimensionError
from .objective import UNDERFLOW, KernelSpec, _pairwise_sq
from .optimizer import OptimConfig, fit_cve

log = logging.getLogger(__name__)


@dataclass
class CvCurve:
    values: list
    khat: int
    fallbacks: int = 0

    @property
    def cv(self):
        return np.array([v for _, v in self.values])


def smoother_bandwidth(Z):
    """Rule-of-thumb bandwidth for an ``l``-dimensional reduced predictor."""
    n, l = Z.shape
    return rot_from_variance(isotropic_variance(Z), n, l)


def loo_smooth(Z, y, bandwidth, kernel="gaussian"):
    """Leave-one-out kernel-average predictions.

    Returns
    -------
    pred : ndarray (n,)
        ``pred[i]`` uses only observations ``j != i``.
    fallbacks : int
        Points whose leave-one-out weights all underflowed; they are
        predicted by the mean of the other responses.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 3 or Z.shape[0] != n:
        raise InvalidArgumentError(f"need n >= 3 matching rows, got Z {Z.shape}, y {y.shape}")
    if not bandwidth > 0:
        raise InvalidArgumentError(f"bandwidth must be positive, got {bandwidth}")
    K = KernelSpec(kernel, bandwidth)(_pairwise_sq(Z) / bandwidth)
    np.fill_diagonal(K, 0.0)
    s = K.sum(axis=1)
    iso = ~(s > UNDERFLOW)
    pred = np.empty(n)
    ok = ~iso
    pred[ok] = (K[ok] @ y) / s[ok]
    pred[iso] = (y.sum() - y[iso]) / (n - 1)
    return pred, int(iso.sum())


def cv_score(Z, y, bandwidth=None):
    """Mean squared leave-one-out residual in the reduced space ``Z``."""
    if bandwidth is None:
        bandwidth = smoother_bandwidth(np.atleast_2d(np.asarray(Z, dtype=float).T).T)
    pred, fallbacks = loo_smooth(Z, y, bandwidth)
    return float(np.mean((y - pred) ** 2)), fallbacks


def cv_curve(data, lmax, variant="cve", kernel=None, config=OptimConfig()):
    """CV(l) for ``l = 1..lmax``; ``l = p`` uses the identity reduction.

    ``kernel`` is passed to :func:`fit_cve` (a bandwidth rule is re-resolved
    for every ``l``). Each ``l`` fits with its own seed derived from
    ``config.seed`` so the candidates are independent of evaluation order.
    """
    p = data.p
    if not 1 <= lmax <= p:
        raise InvalidDimensionError(f"need 1 <= lmax <= p = {p}, got {lmax}")

    def one(l):
        if l == p:
            Z = data.X
        else:
            seed = int(np.random.SeedSequence(config.seed, spawn_key=(l,)).generate_state(1)[0])
            try:
                fit = fit_cve(data, l, variant, kernel, replace(config, seed=seed, threads=1))
            except CVEError as exc:
                raise type(exc)(f"fit for l={l} failed: {exc}") from exc
            Z = data.X @ fit.Bhat
        return cv_score(Z, data.y)

    ls = list(range(1, lmax + 1))
    if config.threads > 1 and len(ls) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            scores = list(pool.map(one, ls))
    else:
        scores = [one(l) for l in ls]
    values = [(l, s) for l, (s, _) in zip(ls, scores)]
    fallbacks = sum(f for _, f in scores)
    if fallbacks:
        log.info("%d isolated points fell back to the leave-one-out mean", fallbacks)
    # first minimum: ties go to the smaller dimension
    khat = ls[int(np.argmin([s for _, s in values]))]
    return CvCurve(values, khat, fallbacks)
