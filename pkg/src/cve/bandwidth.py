"""Bandwidth rules for the slice kernel.

Bandwidths are squared slice half-widths. Both data-driven rules replace the
predictor covariance by the closest isotropic matrix ``sigma^2 I`` with
``sigma^2 = tr(Sigma_hat) / p`` and treat ``X_i - X_j`` as ``N(0, 2 sigma^2 I)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InvalidArgumentError, InvalidDimensionError

ROT_CONSTANT = 1.2

_EPS = 1e-16
_TINY = 1e-300


def _gamma_series(a, x):
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a, x):
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    f = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        f *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * f


def regularized_gamma_p(a, x):
    """Regularized lower incomplete gamma ``P(a, x)``."""
    if a <= 0:
        raise InvalidArgumentError(f"shape must be positive, got {a}")
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(_gamma_series(a, x), 1.0)
    return max(1.0 - _gamma_cont_frac(a, x), 0.0)


def chi2_cdf(x, df):
    return regularized_gamma_p(0.5 * df, 0.5 * x)


def chi2_quantile(df, prob):
    """Inverse chi-square distribution function.

    Bisection on the regularized incomplete gamma, run until the bracket
    stops shrinking in floating point.
    """
    if df <= 0:
        raise InvalidArgumentError(f"degrees of freedom must be positive, got {df}")
    if not 0.0 < prob < 1.0:
        raise InvalidArgumentError(f"probability must lie in (0, 1), got {prob}")
    lo, hi = 0.0, float(max(df, 1))
    while chi2_cdf(hi, df) < prob:
        lo, hi = hi, 2.0 * hi
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if chi2_cdf(mid, df) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def isotropic_variance(X):
    """``tr(Sigma_hat) / p`` with the ``1/n`` covariance normalization.

    This is the scale ``s`` of the isotropic matrix ``s I`` nearest to
    ``Sigma_hat`` in Frobenius norm.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise DegenerateDataError("need at least two observations")
    Xc = X - X.mean(axis=0)
    s = float(np.einsum("ij,ij->", Xc, Xc) / (X.shape[0] * X.shape[1]))
    if not s > 0:
        raise DegenerateDataError("predictors have zero total variance")
    return s


def _check_dims(n, p, q):
    if not (1 <= q < p):
        raise InvalidDimensionError(f"need 1 <= q < p, got p={p}, q={q}")
    if n < 2:
        raise InvalidArgumentError(f"need n >= 2, got {n}")


def bandwidth_nobs(n, p, q, X, nobs):
    """Bandwidth giving ``nobs`` expected points per slice."""
    _check_dims(n, p, q)
    if not 1.0 < nobs < n:
        raise InvalidArgumentError(f"nObs must satisfy 1 < nObs < n={n}, got {nobs}")
    sigma2 = isotropic_variance(X)
    return chi2_quantile(p - q, (nobs - 1.0) / (n - 1.0)) * 2.0 * sigma2


def rot_from_variance(sigma2, n, k):
    """Rule of thumb ``1.2^2 * 2 sigma^2 * n^(-2/(4+k))``."""
    return ROT_CONSTANT ** 2 * 2.0 * sigma2 * n ** (-2.0 / (4.0 + k))


def bandwidth_rot(n, p, q, X):
    _check_dims(n, p, q)
    return rot_from_variance(isotropic_variance(X), n, p - q)


@dataclass(frozen=True)
class BandwidthRule:
    """``kind`` is ``"rot"``, ``"nobs"`` (value = target nObs) or ``"fixed"`` (value = h)."""

    kind: str = "rot"
    value: float = None

    def __post_init__(self):
        if self.kind not in ("rot", "nobs", "fixed"):
            raise InvalidArgumentError(f"unknown bandwidth rule {self.kind!r}")
        if self.kind != "rot" and not (self.value is not None and self.value > 0):
            raise InvalidArgumentError(f"rule {self.kind!r} needs a positive value")

    @classmethod
    def parse(cls, text):
        """Parse ``rot``, ``nobs=<x>`` or ``fixed=<h>``."""
        text = text.strip()
        if text == "rot":
            return cls("rot")
        kind, sep, val = text.partition("=")
        if not sep or kind not in ("nobs", "fixed"):
            raise InvalidArgumentError(f"cannot parse bandwidth {text!r}")
        try:
            return cls(kind, float(val))
        except ValueError:
            raise InvalidArgumentError(f"cannot parse bandwidth {text!r}") from None

    def resolve(self, X, q):
        X = np.asarray(X, dtype=float)
        n, p = X.shape
        if self.kind == "fixed":
            return float(self.value)
        if self.kind == "nobs":
            return bandwidth_nobs(n, p, q, X, self.value)
        return bandwidth_rot(n, p, q, X)

    def __str__(self):
        return "rot" if self.kind == "rot" else f"{self.kind}={self.value!r}"
