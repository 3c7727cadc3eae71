"""Curvilinear search on the Stiefel manifold and the multistart estimators.

``cve`` minimizes ``L_n`` with its exact gradient. ``wcve`` minimizes the
occupancy-weighted objective but steps along the partially weighted gradient
(slice weights held fixed). ``rcve`` runs ``cve`` and then refines the winner
with one ``wcve`` search.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bandwidth import BandwidthRule
from .errors import InvalidArgumentError, InvalidDimensionError
from .gradients import grad_from_cache
from .manifold import (
    cayley_step,
    orth_complement,
    orthonormality_error,
    random_stiefel,
    subspace_distance,
)
from .objective import KernelSpec, Objective

log = logging.getLogger(__name__)

VARIANTS = ("cve", "wcve", "rcve")
STALL_TAU = 1e-12


@dataclass(frozen=True)
class OptimConfig:
    tau0: float = 1.0
    gamma: float = 0.5
    tol: float = 1e-3
    maxit: int = 50
    m: int = 10
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not self.tau0 > 0:
            raise InvalidArgumentError("tau0 must be positive")
        if not 0 < self.gamma < 1:
            raise InvalidArgumentError("gamma must lie in (0, 1)")
        if not self.tol > 0:
            raise InvalidArgumentError("tol must be positive")
        if self.maxit < 1 or self.m < 1 or self.threads < 1:
            raise InvalidArgumentError("maxit, m and threads must be >= 1")


@dataclass
class SearchTrace:
    """One row per iterate; row 0 is the starting frame."""

    objective: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    ortho_error: list = field(default_factory=list)
    stalled: bool = False

    def record(self, value, tau, accepted, V):
        self.objective.append(float(value))
        self.tau.append(float(tau))
        self.accepted.append(bool(accepted))
        self.ortho_error.append(orthonormality_error(V))

    @property
    def n_accepted(self):
        return sum(self.accepted[1:])

    @property
    def n_rejected(self):
        return len(self.accepted) - 1 - self.n_accepted

    def accepted_values(self):
        return [v for v, a in zip(self.objective, self.accepted) if a]

    def as_dict(self):
        return {
            "objective": self.objective,
            "tau": self.tau,
            "accepted": self.accepted,
            "ortho_error": self.ortho_error,
            "stalled": self.stalled,
        }


@dataclass
class StartRecord:
    index: int
    kind: str
    value: float
    iterations: int
    accepted: int
    rejected: int
    stalled: bool
    trace: SearchTrace = field(repr=False)

    def as_dict(self):
        return {
            "index": self.index,
            "kind": self.kind,
            "value": self.value,
            "iterations": self.iterations,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "stalled": self.stalled,
            "trace": self.trace.as_dict(),
        }


@dataclass
class FitResult:
    Vq: np.ndarray
    Bhat: np.ndarray
    objective: float
    starts: list
    variant: str
    h: float
    all_stalled: bool = False

    @property
    def k(self):
        return self.Bhat.shape[1]


def curvilinear_search(data, V0, kernel, variant="cve", config=OptimConfig(), objective=None):
    """Descend from ``V0`` with Cayley steps and the simple decrease rule.

    A step is accepted when the objective does not increase; the step size
    then grows by ``1/gamma``, otherwise it shrinks by ``gamma``. The search
    stops once successive projections differ by at most ``tol`` (scaled by
    ``sqrt(2q)``), after more than ``maxit`` accepted steps, or when the step
    size falls below ``1e-12``.

    Returns
    -------
    V : ndarray (p, q)
    value : float
    trace : SearchTrace
    """
    if variant not in ("cve", "wcve"):
        raise InvalidArgumentError(f"search variant must be 'cve' or 'wcve', got {variant!r}")
    weighted = variant == "wcve"
    if objective is None:
        objective = Objective(data, kernel, weighted=weighted)
    V = np.array(V0, dtype=float)
    q = V.shape[1]
    norm = math.sqrt(2 * q)

    cache = objective.cache(V)
    g = grad_from_cache(cache, weighted=weighted, mode="partial")
    value, G = g.value, g.G
    tau = config.tau0
    error = config.tol + 1.0
    count = 0
    trace = SearchTrace()
    trace.record(value, tau, True, V)

    while error > config.tol and count <= config.maxit:
        Vn = cayley_step(V, G, tau)
        cn = objective.cache(Vn)
        vn = cn.weighted_value if weighted else cn.value
        error = subspace_distance(V, Vn) / norm
        if vn > value:
            tau *= config.gamma
            error = config.tol + 1.0
            trace.record(vn, tau, False, Vn)
            if tau < STALL_TAU:
                trace.stalled = trace.n_accepted == 0
                break
        else:
            g = grad_from_cache(cn, weighted=weighted, mode="partial")
            V, value, G = Vn, g.value, g.G
            count += 1
            tau /= config.gamma
            trace.record(value, tau, True, V)
    return V, value, trace


def start_rng(seed, index):
    """Independent generator for start ``index``, stable under parallelism."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def resolve_kernel(kernel, X, q):
    if isinstance(kernel, KernelSpec):
        return kernel
    if kernel is None:
        kernel = BandwidthRule()
    if isinstance(kernel, str):
        kernel = BandwidthRule.parse(kernel)
    if isinstance(kernel, BandwidthRule):
        return KernelSpec("gaussian", kernel.resolve(X, q))
    raise InvalidArgumentError(f"cannot build a kernel from {kernel!r}")


def ordered_map(fn, items, threads):
    """``[fn(x) for x in items]``, optionally on a thread pool; order is kept."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def fit_cve(data, k, variant="cve", kernel=None, config=OptimConfig()):
    """Estimate a ``k``-dimensional reduction ``Bhat`` by multistart search.

    Parameters
    ----------
    data : DataSet
    k : int
        Reduction dimension; the search runs over S(p, p - k).
    variant : {"cve", "wcve", "rcve"}
    kernel : KernelSpec, BandwidthRule, str or None
        A rule (default: rule of thumb) is resolved on ``data.X`` with ``q = p - k``.
    config : OptimConfig
    """
    if variant not in VARIANTS:
        raise InvalidArgumentError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    p = data.p
    if not 1 <= k < p:
        raise InvalidDimensionError(f"need 1 <= k < p = {p}, got k = {k}")
    q = p - k
    kernel = resolve_kernel(kernel, data.X, q)
    search_variant = "wcve" if variant == "wcve" else "cve"
    objective = Objective(data, kernel, weighted=search_variant == "wcve")

    def run(i):
        V0 = random_stiefel(p, q, start_rng(config.seed, i))
        return curvilinear_search(data, V0, kernel, search_variant, config, objective)

    results = ordered_map(run, list(range(config.m)), config.threads)
    starts = [
        StartRecord(i, search_variant, val, len(tr.objective) - 1, tr.n_accepted,
                    tr.n_rejected, tr.stalled, tr)
        for i, (_, val, tr) in enumerate(results)
    ]
    # lowest index wins ties, so serial and threaded runs agree
    best = min(range(config.m), key=lambda i: (results[i][1], i))
    Vq, value = results[best][0], results[best][1]
    all_stalled = all(s.stalled for s in starts)

    if variant == "rcve":
        Vq, value, tr = curvilinear_search(data, Vq, kernel, "wcve", config)
        starts.append(StartRecord(config.m, "refine", value, len(tr.objective) - 1,
                                  tr.n_accepted, tr.n_rejected, tr.stalled, tr))
    if all_stalled:
        log.warning("all %d starts stalled without an accepted step", config.m)
    return FitResult(Vq, orth_complement(Vq), float(value), starts, variant,
                     kernel.h, all_stalled)
