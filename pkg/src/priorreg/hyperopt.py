"""Gaussian-process Bayesian optimization for the outer (lambda, theta) loop.

The GP works on inputs scaled to the unit cube and on standardized
objectives.  Kernel: Matern-5/2 with one length-scale per dimension, a
signal variance and a noise variance, all fit by maximizing the log marginal
likelihood with a multi-start coordinate search in log space.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import ndtr
from scipy.stats import qmc

from . import _kernels
from .errors import ContractError, DivergedError

FAILURE_PENALTY = 1e6
JITTERS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)
N_CANDIDATES = 1024
PATTERN_STEPS = 50


class GPNumericalError(ArithmeticError):
    """Kernel matrix stayed singular after the largest jitter."""


@dataclass(frozen=True)
class Dim:
    name: str
    scale: str
    lower: float
    upper: float

    def __post_init__(self):
        if self.scale not in ("log10", "linear"):
            raise ContractError(f"unknown scale {self.scale!r}")
        if not self.lower < self.upper:
            raise ContractError(f"dimension {self.name}: lower must be < upper")
        if self.scale == "log10" and self.lower <= 0:
            raise ContractError(f"log10 dimension {self.name} needs lower > 0")

    def internal_bounds(self):
        if self.scale == "log10":
            return math.log10(self.lower), math.log10(self.upper)
        return self.lower, self.upper


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if not self.dims:
            raise ContractError("search space needs at least one dimension")

    @property
    def names(self):
        return [d.name for d in self.dims]

    def _bounds(self):
        b = np.array([d.internal_bounds() for d in self.dims])
        return b[:, 0], b[:, 1]

    def unit_to_internal(self, u):
        lo, hi = self._bounds()
        return lo + np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0) * (hi - lo)

    def internal_to_unit(self, z):
        lo, hi = self._bounds()
        return (np.asarray(z, dtype=np.float64) - lo) / (hi - lo)

    def internal_to_raw(self, z):
        z = np.asarray(z, dtype=np.float64)
        return np.array([10.0**v if d.scale == "log10" else v for d, v in zip(self.dims, z)])

    def raw_to_internal(self, x):
        return np.array([math.log10(v) if d.scale == "log10" else float(v) for d, v in zip(self.dims, x)])

    def contains_raw(self, x, tol=1e-12) -> bool:
        return all(d.lower * (1 - tol) - tol <= v <= d.upper * (1 + tol) + tol for d, v in zip(self.dims, x))


@dataclass
class TrialRecord:
    point: np.ndarray  # internal scale (log10 for log dims)
    objective: float
    model_ref: str = ""
    raw: np.ndarray | None = None
    wallclock: float = 0.0
    failed: bool = False


@dataclass
class GPHyper:
    lengthscales: np.ndarray
    signal_var: float = 1.0
    noise_var: float = 1e-6

    def to_log(self):
        return np.concatenate([np.log(self.lengthscales), [math.log(self.signal_var), math.log(self.noise_var)]])

    @classmethod
    def from_log(cls, theta):
        return cls(np.exp(theta[:-2]), float(np.exp(theta[-2])), float(np.exp(theta[-1])))


# log-space bounds for hyperparameter search
_LOG_LS = (math.log(1e-2), math.log(10.0))
_LOG_SF = (math.log(1e-2), math.log(1e2))
_LOG_SN = (math.log(1e-10), math.log(1.0))


@dataclass
class GPModel:
    x: np.ndarray  # unit-cube inputs (n, d)
    y: np.ndarray  # raw objectives (n,)
    hyper: GPHyper
    y_mean: float
    y_std: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    trials: list = field(default_factory=list)


def _kernel(a, b, hyper: GPHyper):
    inv = 1.0 / np.asarray(hyper.lengthscales, dtype=np.float64)
    return hyper.signal_var * _kernels.matern52(np.ascontiguousarray(a), np.ascontiguousarray(b), inv)


def _factor(x, hyper):
    k = _kernel(x, x, hyper)
    n = len(x)
    for jitter in JITTERS:
        try:
            chol = np.linalg.cholesky(k + (hyper.noise_var + jitter) * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        return chol, jitter
    raise GPNumericalError("kernel matrix is not positive definite even with jitter 1e-6")


def _standardize(y):
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not std > 0 or len(y) < 2:
        std = 1.0
    return mean, std, (y - mean) / std


def log_marginal_likelihood(x, ys, hyper: GPHyper) -> float:
    try:
        chol, _ = _factor(x, hyper)
    except GPNumericalError:
        return -np.inf
    alpha = cho_solve((chol, True), ys)
    return float(-0.5 * ys @ alpha - np.log(np.diag(chol)).sum() - 0.5 * len(ys) * math.log(2 * math.pi))


def _coordinate_search(f, theta0, lower, upper, step=1.0, min_step=0.05, max_evals=300):
    theta = np.clip(theta0, lower, upper)
    best = f(theta)
    evals = 1
    while step >= min_step and evals < max_evals:
        improved = False
        for i in range(len(theta)):
            for sgn in (1.0, -1.0):
                cand = theta.copy()
                cand[i] = np.clip(cand[i] + sgn * step, lower[i], upper[i])
                if cand[i] == theta[i]:
                    continue
                val = f(cand)
                evals += 1
                if val > best:
                    theta, best, improved = cand, val, True
                    break
        if not improved:
            step *= 0.5
    return theta, best


def fit_hyper(x, ys, seed=0, n_starts=4) -> GPHyper:
    d = x.shape[1]
    lower = np.array([_LOG_LS[0]] * d + [_LOG_SF[0], _LOG_SN[0]])
    upper = np.array([_LOG_LS[1]] * d + [_LOG_SF[1], _LOG_SN[1]])
    rng = np.random.default_rng(seed)
    starts = [GPHyper(np.full(d, 0.3), 1.0, 1e-4).to_log()]
    starts += [rng.uniform(lower, upper) for _ in range(n_starts - 1)]
    f = lambda th: log_marginal_likelihood(x, ys, GPHyper.from_log(th))  # noqa: E731
    best_theta, best_val = None, -np.inf
    for th0 in starts:
        th, val = _coordinate_search(f, th0, lower, upper)
        if val > best_val:
            best_theta, best_val = th, val
    if best_theta is None:
        best_theta = starts[0]
    return GPHyper.from_log(best_theta)


def gp_fit(x, y, hyper: GPHyper | None = None, seed: int = 0) -> GPModel:
    """Exact GP posterior on unit-cube inputs ``x`` (n, d) and objectives ``y``.

    If ``hyper`` is None the kernel hyperparameters are fit by maximizing the
    log marginal likelihood.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) < 1 or len(x) != len(y):
        raise ContractError("gp_fit needs at least one observation and matching x/y")
    if (x < -1e-12).any() or (x > 1 + 1e-12).any():
        raise ContractError("gp inputs must be normalized to [0, 1]")
    mean, std, ys = _standardize(y)
    if hyper is None:
        hyper = fit_hyper(x, ys, seed=seed)
    chol, jitter = _factor(x, hyper)
    alpha = cho_solve((chol, True), ys)
    return GPModel(x, y, hyper, mean, std, chol, alpha, jitter)


def gp_fit_trials(trials, space: SearchSpace, hyper=None, seed=0, transform=None) -> GPModel:
    x = np.array([space.internal_to_unit(t.point) for t in trials])
    y = np.array([t.objective for t in trials], dtype=np.float64)
    ok = np.array([not t.failed for t in trials])
    if ok.any() and not ok.all():
        # keep the failure penalty out of the GP's scale: failed trials look like the worst success
        y = np.where(ok, y, y[ok].max())
    if transform is not None:
        y = transform(y)
    model = gp_fit(x, y, hyper, seed)
    model.trials = list(trials)
    return model


def gp_predict(model: GPModel, x):
    """Posterior mean and standard deviation at unit-cube point(s) ``x``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    ks = _kernel(xs, model.x, model.hyper)
    mu = ks @ model.alpha
    v = solve_triangular(model.chol, ks.T, lower=True)
    var = model.hyper.signal_var - np.sum(v * v, axis=0)
    sigma = np.sqrt(np.maximum(var, 0.0))
    mu = model.y_mean + model.y_std * mu
    sigma = model.y_std * sigma
    if single:
        return float(mu[0]), float(sigma[0])
    return mu, sigma


def expected_improvement(mu, sigma, best):
    """EI for minimization; ``max(best - mu, 0)`` where ``sigma == 0``."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if (sigma < 0).any():
        raise ContractError("sigma must be >= 0")
    imp = best - mu
    safe = np.where(sigma > 0, sigma, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        # tiny sigma: z overflows to +-inf, which ndtr and exp handle
        z = imp / safe
        ei = imp * ndtr(z) + safe * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    out = np.where(sigma > 0, np.maximum(ei, 0.0), np.maximum(imp, 0.0))
    return float(out) if out.ndim == 0 else out


def propose_next(model: GPModel, space: SearchSpace, rng) -> np.ndarray:
    """Next unit-cube point: EI argmax over random candidates, then pattern search.

    Ties (including the all-zero case) go to the lowest candidate index.
    """
    d = len(space.dims)
    best = float(np.min(model.y))
    cands = rng.random((N_CANDIDATES, d))
    mu, sigma = gp_predict(model, cands)
    ei = expected_improvement(mu, sigma, best)
    i = int(np.argmax(ei))
    x, fx = cands[i].copy(), float(ei[i])
    if fx <= 0.0:
        return cands[0].copy()
    step = 0.05
    for _ in range(PATTERN_STEPS):
        trial = []
        for j in range(d):
            for sgn in (1.0, -1.0):
                c = x.copy()
                c[j] = min(1.0, max(0.0, c[j] + sgn * step))
                trial.append(c)
        trial = np.array(trial)
        m, s = gp_predict(model, trial)
        e = expected_improvement(m, s, best)
        k = int(np.argmax(e))
        if e[k] > fx:
            x, fx = trial[k], float(e[k])
        else:
            step *= 0.5
    return x


@dataclass
class BOResult:
    best_point: np.ndarray  # raw values
    best_value: float
    trials: list
    incumbents: list
    space: SearchSpace | None = None

    @property
    def best_trial(self) -> TrialRecord:
        return min(self.trials, key=lambda t: t.objective)


def bo_minimize(
    objective: Callable,
    space: SearchSpace,
    n_init: int = 5,
    budget: int = 20,
    seed: int = 0,
    transform: Callable | None = None,
    on_trial: Callable | None = None,
) -> BOResult:
    """Sequential GP/EI minimization of ``objective(raw_point)``.

    ``objective`` may return a float or ``(float, model_ref)``.  Divergence
    (``DivergedError``/``FloatingPointError`` or a non-finite value) is
    recorded with ``FAILURE_PENALTY``.  ``transform`` is applied to the
    objective values the GP sees (e.g. ``np.log``); reported values stay raw.
    """
    if not budget >= n_init >= 1:
        raise ContractError("need budget >= n_init >= 1")
    d = len(space.dims)
    rng = np.random.default_rng(seed)
    init = qmc.Halton(d=d, scramble=True, seed=np.random.default_rng([seed, 1])).random(n_init)
    trials: list[TrialRecord] = []
    incumbents: list[float] = []

    def evaluate(u):
        z = space.unit_to_internal(u)
        raw = space.internal_to_raw(z)
        start = time.perf_counter()
        ref, failed = "", False
        try:
            out = objective(raw)
            if isinstance(out, tuple):
                out, ref = out
            value = float(out)
            if not math.isfinite(value):
                raise DivergedError("objective returned a non-finite value")
        except (DivergedError, FloatingPointError):
            value, failed = FAILURE_PENALTY, True
        rec = TrialRecord(z, value, str(ref), raw, time.perf_counter() - start, failed)
        trials.append(rec)
        incumbents.append(min(t.objective for t in trials))
        if on_trial is not None:
            on_trial(len(trials) - 1, rec)

    for u in init:
        evaluate(u)
    for it in range(budget - n_init):
        model = gp_fit_trials(trials, space, seed=seed + it, transform=transform)
        evaluate(propose_next(model, space, rng))

    best = min(trials, key=lambda t: t.objective)
    return BOResult(best.raw, best.objective, trials, incumbents, space)


def write_trials_csv(result: BOResult, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = result.space.names if result.space else [f"x{i}" for i in range(len(result.trials[0].raw))]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", *names, "objective", "wallclock_s"])
        for i, t in enumerate(result.trials):
            w.writerow([i, *[repr(float(v)) for v in t.raw], repr(float(t.objective)), f"{t.wallclock:.3f}"])
    return path
