"""Simulation models M1-M7, the replication runner and error summaries."""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dimension import cv_curve
from .errors import CVEError, InvalidArgumentError
from .manifold import orth_complement, random_stiefel, subspace_error
from .objective import DataSet
from .optimizer import OptimConfig, fit_cve

MODELS = ("M1", "M2", "M3", "M4", "M5", "M6", "M7")
BASELINE = "random"

# (k, n) per model
_DEFAULTS = {
    "M1": (1, 100), "M2": (1, 100), "M3": (1, 100), "M4": (2, 200),
    "M5": (2, 200), "M6": (3, 200), "M7": (4, 400),
}


@dataclass(frozen=True)
class PredictorLaw:
    kind: str = "gaussian"
    rho: float = 0.5
    pmix: float = 0.3
    lam: float = 1.0
    df: float = 3.0


@dataclass(frozen=True)
class ErrorLaw:
    """``normal`` with standard deviation ``sd``, or generalized normal ``GN(a, b, c)``."""

    kind: str = "normal"
    sd: float = 1.0
    a: float = 0.0
    b: float = 1.0
    c: float = 2.0

    @property
    def variance(self):
        if self.kind == "normal":
            return self.sd ** 2
        return self.b ** 2 * math.gamma(3.0 / self.c) / math.gamma(1.0 / self.c)


@dataclass(frozen=True)
class ModelSpec:
    id: str
    n: int
    p: int
    k: int
    B: np.ndarray = field(repr=False)
    predictor: PredictorLaw
    error: ErrorLaw


def gnorm_scale_for_variance(var, c):
    """Scale ``b`` giving a generalized normal with shape ``c`` the variance ``var``."""
    return math.sqrt(var * math.gamma(1.0 / c) / math.gamma(3.0 / c))


def sample_gnorm(a, b, c, rng, size=None):
    """Draw from ``GN(a, b, c)``, density proportional to ``exp(-(|z - a| / b)^c)``."""
    if not (b > 0 and c > 0):
        raise InvalidArgumentError(f"GN needs b, c > 0, got b={b}, c={c}")
    e = rng.gamma(1.0 / c, 1.0, size=size)
    sign = np.where(rng.random(size=size) < 0.5, -1.0, 1.0)
    return a + sign * b * e ** (1.0 / c)


def true_directions(model, p=20):
    """Orthonormal ``B`` of the given model."""
    if model not in MODELS:
        raise InvalidArgumentError(f"unknown model {model!r}; choose from {MODELS}")
    k = _DEFAULTS[model][0]
    B = np.zeros((p, k))
    if model in ("M6", "M7"):
        if p < 4:
            raise InvalidArgumentError(f"{model} needs p >= 4")
        for col, row in enumerate((0, 1, p - 1, 2)[:k]):
            B[row, col] = 1.0
        return B
    if p < 6:
        raise InvalidArgumentError(f"{model} needs p >= 6")
    B[:6, 0] = 1.0 / math.sqrt(6.0)
    if k == 2:
        B[:6, 1] = np.array([1, -1, 1, -1, 1, -1]) / math.sqrt(6.0)
    return B


def make_model(model, n=None, p=20, pmix=0.3, lam=1.0, error_params="text", noise=True):
    """Build the ModelSpec of ``model``.

    ``error_params="text"`` scales the generalized-normal errors of M1 and M7
    to variance 0.25; ``"table"`` uses ``GN(0, sqrt(1/2), 0.5)`` and
    ``GN(0, sqrt(1/Gamma(6)), 1)`` literally. ``noise=False`` zeroes the error.
    """
    if model not in MODELS:
        raise InvalidArgumentError(f"unknown model {model!r}; choose from {MODELS}")
    if error_params not in ("text", "table"):
        raise InvalidArgumentError(f"error_params must be 'text' or 'table', got {error_params!r}")
    k, n_default = _DEFAULTS[model]
    n = n_default if n is None else int(n)
    predictor = {
        "M1": PredictorLaw("ar-gaussian"),
        "M2": PredictorLaw("mixture", pmix=pmix, lam=lam),
        "M3": PredictorLaw("gaussian"),
        "M4": PredictorLaw("ar-gaussian"),
        "M5": PredictorLaw("uniform-cube"),
        "M6": PredictorLaw("gaussian"),
        "M7": PredictorLaw("student-t"),
    }[model]
    if model == "M1":
        b = math.sqrt(0.5) if error_params == "table" else gnorm_scale_for_variance(0.25, 0.5)
        error = ErrorLaw("gnorm", b=b, c=0.5)
    elif model == "M7":
        b = math.sqrt(1.0 / math.gamma(6)) if error_params == "table" else gnorm_scale_for_variance(0.25, 1.0)
        error = ErrorLaw("gnorm", b=b, c=1.0)
    else:
        error = ErrorLaw("normal", sd=0.5)
    if not noise:
        error = ErrorLaw("normal", sd=0.0)
    return ModelSpec(model, n, p, k, true_directions(model, p), predictor, error)


def ar_covariance(p, rho=0.5):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def sample_predictors(spec, rng):
    n, p, law = spec.n, spec.p, spec.predictor
    if law.kind == "gaussian":
        return rng.standard_normal((n, p))
    if law.kind == "ar-gaussian":
        L = np.linalg.cholesky(ar_covariance(p, law.rho))
        return rng.standard_normal((n, p)) @ L.T
    if law.kind == "mixture":
        Z = 2.0 * (rng.random(n) < law.pmix) - 1.0
        return law.lam * Z[:, None] + rng.standard_normal((n, p))
    if law.kind == "uniform-cube":
        return rng.random((n, p))
    if law.kind == "student-t":
        Z = rng.standard_normal((n, p))
        W = rng.chisquare(law.df, size=n)
        return Z / np.sqrt(W / law.df)[:, None]
    raise InvalidArgumentError(f"unknown predictor law {law.kind!r}")


def sample_errors(spec, rng):
    e = spec.error
    if e.kind == "normal":
        return e.sd * rng.standard_normal(spec.n)
    return sample_gnorm(e.a, e.b, e.c, rng, size=spec.n)


def link(model, Z):
    """Regression function of ``model`` evaluated at reduced predictors ``Z = X B``."""
    if model in ("M1", "M2"):
        return np.cos(Z[:, 0])
    if model == "M3":
        return 2.0 * np.log(np.abs(Z[:, 0]) + 2.0)
    if model == "M4":
        return Z[:, 0] / (0.5 + (1.5 + Z[:, 1]) ** 2)
    if model == "M5":
        return np.cos(np.pi * Z[:, 0]) * (Z[:, 1] + 1.0) ** 2
    if model == "M6":
        return np.sum(Z ** 2, axis=1)
    if model == "M7":
        return Z[:, 0] * Z[:, 1] ** 2 + Z[:, 2] * Z[:, 3]
    raise InvalidArgumentError(f"unknown model {model!r}")


def generate(spec, rng):
    """Draw ``(DataSet, B)`` with ``y = g(X B) + eps``."""
    X = sample_predictors(spec, rng)
    eps = sample_errors(spec, rng)
    y = link(spec.id, X @ spec.B) + eps
    return DataSet(y, X), spec.B


def substream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def derived_seed(seed, *key):
    return int(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)).generate_state(1)[0])


@dataclass
class StudySummary:
    """Aggregated errors (``rows``) and per-replication records (``records``)."""

    rows: list
    records: list
    seed: int

    def row(self, model, variant):
        for r in self.rows:
            if r["model"] == model and r["variant"] == variant:
                return r
        raise KeyError((model, variant))

    def write_csv(self, summary_path, errors_path):
        cols = ["model", "variant", "mean_err", "sd_err", "reps", "failures", "dim_correct"]
        _write_rows(summary_path, cols, self.rows)
        _write_rows(errors_path, ["model", "variant", "rep", "err", "khat", "failed"], self.records)


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return "" if v is None else str(v)


def _write_rows(path, cols, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])


def _one_replication(spec, variants, rep, seed, config, dimension, lmax, bandwidth):
    model_no = MODELS.index(spec.id) + 1 if spec.id in MODELS else 0
    data, B = generate(spec, substream(seed, model_no, rep, 0))
    fit_config = replace(config, seed=derived_seed(seed, model_no, rep, 1), threads=1)
    out = []
    for variant in variants:
        rec = {"model": spec.id, "variant": variant, "rep": rep, "err": None,
               "khat": None, "failed": 0}
        try:
            if variant == BASELINE:
                Bhat = random_stiefel(spec.p, spec.k, substream(seed, model_no, rep, 2))
            else:
                Bhat = fit_cve(data, spec.k, variant, bandwidth, fit_config).Bhat
                if dimension:
                    curve = cv_curve(data, lmax or spec.p, variant, bandwidth, fit_config)
                    rec["khat"] = curve.khat
            rec["err"] = subspace_error(B, Bhat)
        except (CVEError, np.linalg.LinAlgError, FloatingPointError):
            rec["failed"] = 1
        out.append(rec)
    return out


def run_study(specs, variants=("cve",), reps=20, seed=0, config=OptimConfig(m=5),
              dimension=False, lmax=None, bandwidth=None, threads=1):
    """Replicate each model ``reps`` times and fit every variant.

    Each replication draws its data from the substream ``(seed, model, rep)``;
    ``"random"`` in ``variants`` scores a frame drawn uniformly at random as a
    sanity baseline. With ``dimension=True`` the cross-validated dimension is
    also estimated (up to ``lmax``) and correct recoveries are counted.
    """
    if reps < 1:
        raise InvalidArgumentError("reps must be >= 1")
    jobs = [(spec, r) for spec in specs for r in range(reps)]

    def work(job):
        spec, r = job
        return _one_replication(spec, variants, r, seed, config, dimension, lmax, bandwidth)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, jobs))
    else:
        chunks = [work(j) for j in jobs]
    records = [rec for chunk in chunks for rec in chunk]

    rows = []
    for spec in specs:
        for variant in variants:
            mine = [r for r in records if r["model"] == spec.id and r["variant"] == variant]
            errs = np.array([r["err"] for r in mine if not r["failed"]], dtype=float)
            row = {
                "model": spec.id, "variant": variant,
                "mean_err": float(errs.mean()) if errs.size else float("nan"),
                "sd_err": float(errs.std(ddof=1)) if errs.size > 1 else 0.0,
                "reps": int(errs.size),
                "failures": int(sum(r["failed"] for r in mine)),
                "dim_correct": None,
            }
            if dimension and variant != BASELINE:
                row["dim_correct"] = int(sum(r["khat"] == spec.k for r in mine))
            rows.append(row)
    return StudySummary(rows, records, int(seed))
