"""End-to-end experiment driver.

One run of a configuration at one seed::

    dataset -> validation split -> baseline -> weight-decay sweep
            -> tuned prior run (GP/EI outer loop) -> heatmaps -> report

Every artifact lands in the run's own directory.  If a stage raises, the
files written so far stay in place and ``error.json`` names the stage.
"""

from __future__ import annotations

import json
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import hnn as hnn_mod
from .config import ExperimentConfig, save_config
from .errors import ContractError, ExperimentError
from .hyperopt import BOResult, Dim, SearchSpace, bo_minimize, write_trials_csv
from .oracles import Dataset, NoiseSpec, make_dataset, oracle_field, save_dataset
from .report import ReportRow, aggregate, emit_heatmap, write_report
from .training import LossWeights, TrainedModel, evaluate_mse, save_checkpoint, split_validation, train

log = logging.getLogger("priorreg")


@dataclass
class TuneOutcome:
    model: TrainedModel
    lambdas: list
    priors: list
    theta: dict
    result: BOResult | None
    val_mse: float


class _Stages:
    """Tracks the current stage and writes the error manifest on failure."""

    def __init__(self, out: Path, config: ExperimentConfig):
        self.out = out
        self.config = config
        self.name = "setup"

    def __call__(self, name):
        self.name = name
        log.info("%s seed %d: %s", self.config.name, self.config.seed, name)
        return self

    def fail(self, exc: BaseException):
        manifest = {
            "case": self.config.name,
            "seed": self.config.seed,
            "stage": self.name,
            "error_type": type(exc).__name__,
            "message": str(exc),
            "traceback": traceback.format_exception_only(type(exc), exc)[-1].strip(),
        }
        (self.out / "error.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        return ExperimentError(self.name, f"{type(exc).__name__}: {exc}")


def _fmt_lambdas(lams) -> str:
    return ";".join(repr(float(v)) for v in lams)


def _fmt_theta(theta: dict) -> str:
    return ";".join(f"{k}={float(v)!r}" for k, v in theta.items())


def priors_label(priors) -> str:
    return "+".join(p.label() for p in priors)


# ---------------------------------------------------------------------------
# PDE cases
# ---------------------------------------------------------------------------


def build_dataset(config: ExperimentConfig) -> Dataset:
    return make_dataset(config.oracle, config.grid, config.n_train, NoiseSpec(config.noise_sigma), config.n_colloc, config.seed)


def search_space(config: ExperimentConfig):
    """Search space over the lambdas (log10) and tunable coefficients (linear).

    Returns ``(space, decode)`` where ``decode(raw)`` gives
    ``(lambdas, priors, theta)``.
    """
    s = config.search
    priors = config.priors
    multi = len(priors) > 1
    dims, coef_slots = [], []
    for k in range(len(priors)):
        dims.append(Dim(f"lambda{k + 1}" if multi else "lambda", "log10", s.lambda_lower, s.lambda_upper))
    for k, p in enumerate(priors):
        for c in sorted(p.tunable):
            v = p.coeffs[c]
            half = s.theta_window * abs(v)
            if half == 0:
                raise ContractError(f"cannot open a relative window around {c} = 0")
            name = f"{c}{k + 1}" if multi else c
            dims.append(Dim(name, "linear", v - half, v + half))
            coef_slots.append((k, c, name))
    space = SearchSpace(dims)

    def decode(raw):
        raw = [float(v) for v in raw]
        lams = raw[: len(priors)]
        new = [dict(p.coeffs) for p in priors]
        theta = {}
        for (k, c, name), v in zip(coef_slots, raw[len(priors):]):
            new[k][c] = v
            theta[name] = v
        return lams, [p.with_coeffs(**coeffs) for p, coeffs in zip(priors, new)], theta

    return space, decode


def tune(config: ExperimentConfig, inner: Dataset, val_x, val_y, trials_csv=None) -> TuneOutcome:
    """Outer loop: pick lambdas (and coefficients) by validation MSE."""
    tc = replace(config.train, seed=config.seed)
    s = config.search
    if not s.enabled:
        lams = s.fixed_lambdas or [0.0] * len(config.priors)
        model = train(tc, inner, config.priors, LossWeights(lams))
        return TuneOutcome(model, lams, list(config.priors), {}, None, evaluate_mse(model, val_x, val_y))

    space, decode = search_space(config)
    best: dict = {}

    def objective(raw):
        lams, priors, theta = decode(raw)
        model = train(tc, inner, priors, LossWeights(lams))
        val = evaluate_mse(model, val_x, val_y)
        if math.isfinite(val) and val < best.get("val", math.inf):
            best.update(val=val, model=model, lams=lams, priors=priors, theta=theta)
        return val

    result = bo_minimize(objective, space, s.n_init, s.budget, seed=config.seed, transform=np.log if s.log_objective else None)
    if trials_csv is not None:
        write_trials_csv(result, trials_csv)
    if "model" not in best:
        raise ContractError("every outer-loop trial diverged")
    return TuneOutcome(best["model"], best["lams"], best["priors"], best["theta"], result, best["val"])


def _run_pde(config: ExperimentConfig, out: Path, stage: _Stages) -> ReportRow:
    stage("dataset")
    ds = build_dataset(config)
    save_dataset(ds, out / "dataset.json")
    inner, val_x, val_y = split_validation(ds, config.val_fraction, config.seed)
    tc = replace(config.train, seed=config.seed)

    stage("baseline")
    baseline = train(tc, inner)
    save_checkpoint(baseline, out / "baseline.json")

    stage("weight_decay")
    decay_model, best_decay, best_val = None, None, math.inf
    for wd in config.weight_decays:
        model = train(replace(tc, weight_decay=wd), inner)
        val = evaluate_mse(model, val_x, val_y)
        if val < best_val or decay_model is None:
            decay_model, best_decay, best_val = model, wd, val
    if decay_model is not None:
        save_checkpoint(decay_model, out / "weight_decay.json")

    stage("tune")
    outcome = tune(config, inner, val_x, val_y, trials_csv=out / "trials.csv")
    outcome.model.meta["val_mse"] = outcome.val_mse
    save_checkpoint(outcome.model, out / "tuned.json")

    if config.heatmaps:
        stage("heatmaps")
        hm = out / "heatmaps"
        emit_heatmap(oracle_field(config.oracle, config.grid), config.grid, hm / "oracle")
        emit_heatmap(baseline, config.grid, hm / "baseline")
        if decay_model is not None:
            emit_heatmap(decay_model, config.grid, hm / "weight_decay")
        emit_heatmap(outcome.model, config.grid, hm / "tuned")

    flags = [] if config.search.enabled else ["search_disabled"]
    return ReportRow(
        case=config.name,
        priors=priors_label(config.priors),
        seeds=[config.seed],
        baseline_mse=baseline.final_test_mse,
        weight_decay_mse=decay_model.final_test_mse if decay_model else None,
        best_decay=repr(best_decay) if best_decay is not None else "",
        tuned_mse=outcome.model.final_test_mse,
        lambda_opt=_fmt_lambdas(outcome.lambdas),
        theta_opt=_fmt_theta(outcome.theta),
        flags=flags,
        details={"lambdas": list(outcome.lambdas), "theta": dict(outcome.theta), "val_mse": outcome.val_mse},
    )


# ---------------------------------------------------------------------------
# Hamiltonian cases
# ---------------------------------------------------------------------------


def hnn_data(config: ExperimentConfig):
    """Seeded train / validation / clean test trajectory sets."""
    h = config.hnn
    spec = h.spec()
    span = (0.0, h.t_end)
    train_trajs = hnn_mod.generate_trajectories(spec, h.n_traj, span, h.dt, h.noise, seed=config.seed)
    val_trajs = hnn_mod.generate_trajectories(spec, h.n_val_traj, span, h.dt, h.noise, seed=[config.seed, 1])
    test_trajs = hnn_mod.generate_trajectories(spec, h.n_test_traj, span, h.dt, 0.0, seed=[config.seed, 2])
    return train_trajs, val_trajs, test_trajs


def hnn_energy(model, test_trajs, config: ExperimentConfig):
    """Mean energy drift of learned rollouts from the test initial states."""
    h = config.hnn
    spec = h.spec()
    drifts, diverged = [], False
    for traj in test_trajs:
        roll = hnn_mod.integrate_learned(model, traj.states[0], (0.0, h.rollout_t), h.rollout_dt)
        diverged |= roll.diverged
        drifts.append(hnn_mod.energy_metric(roll, spec))
    return float(np.mean(drifts)), diverged


def hnn_setup(config: ExperimentConfig):
    """Trajectory sets, regularizer points and inner-loop config of an HNN case."""
    h = config.hnn
    train_trajs, val_trajs, test_trajs = hnn_data(config)
    states, _ = hnn_mod.stack(train_trajs)
    reg_pts = hnn_mod.regularizer_points(states, h.n_reg_extra, seed=config.seed)
    t = config.train
    hcfg = hnn_mod.HnnConfig(t.hidden_layers, t.width, t.lr, t.steps, config.seed, t.eval_every)
    return train_trajs, val_trajs, test_trajs, reg_pts, hcfg


def tune_hnn(config: ExperimentConfig, train_trajs, val_trajs, reg_pts, hcfg, trials_csv=None) -> TuneOutcome:
    """Outer loop over the regularizer weight, scored by validation HNN loss."""
    h = config.hnn
    prior = h.prior()
    best: dict = {}

    def fit(lam):
        model = hnn_mod.train_hnn(hcfg, train_trajs, prior, lam, h.mode, reg_pts)
        val = hnn_mod.hnn_loss(model.params, val_trajs)
        if math.isfinite(val) and val < best.get("val", math.inf):
            best.update(val=val, model=model, lam=lam)
        return val

    s = config.search
    result = None
    if s.enabled:
        space = SearchSpace([Dim("lambda", "log10", s.lambda_lower, s.lambda_upper)])
        result = bo_minimize(lambda raw: fit(float(raw[0])), space, s.n_init, s.budget, seed=config.seed, transform=np.log if s.log_objective else None)
        if trials_csv is not None:
            write_trials_csv(result, trials_csv)
    else:
        fit(s.fixed_lambdas[0] if s.fixed_lambdas else 0.0)
    if "model" not in best:
        raise ContractError("every outer-loop trial diverged")
    return TuneOutcome(best["model"], [best["lam"]], [prior], {}, result, best["val"])


def _run_hnn(config: ExperimentConfig, out: Path, stage: _Stages) -> ReportRow:
    h = config.hnn
    stage("dataset")
    train_trajs, val_trajs, test_trajs, reg_pts, hcfg = hnn_setup(config)
    hnn_mod.save_trajectories(train_trajs, out / "trajectories.json", h.spec(), config.seed)
    prior = h.prior()
    s = config.search

    stage("baseline")
    baseline = hnn_mod.train_hnn(hcfg, train_trajs)
    save_checkpoint(baseline, out / "baseline.json")

    stage("tune")
    outcome = tune_hnn(config, train_trajs, val_trajs, reg_pts, hcfg, trials_csv=out / "trials.csv")
    tuned = outcome.model
    tuned.meta["val_loss"] = outcome.val_mse
    save_checkpoint(tuned, out / "tuned.json")

    stage("evaluate")
    base_energy, base_div = hnn_energy(baseline, test_trajs, config)
    tuned_energy, tuned_div = hnn_energy(tuned, test_trajs, config)
    flags = [] if s.enabled else ["search_disabled"]
    if base_div or tuned_div:
        flags.append("rollout_diverged")
    return ReportRow(
        case=config.name,
        priors=f"hamiltonian[{h.mode}]({','.join(f'{k}={v:g}' for k, v in sorted(prior.coeffs.items()))})",
        seeds=[config.seed],
        baseline_mse=hnn_mod.hnn_loss(baseline.params, test_trajs),
        tuned_mse=hnn_mod.hnn_loss(tuned.params, test_trajs),
        baseline_energy=base_energy,
        tuned_energy=tuned_energy,
        lambda_opt=_fmt_lambdas(outcome.lambdas),
        flags=flags,
        details={"lambdas": list(outcome.lambdas), "theta": {}, "val_mse": outcome.val_mse},
    )


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def run_experiment(config: ExperimentConfig, out_dir) -> ReportRow:
    """Run one configuration at ``config.seed``; writes ``report.csv`` in ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stale = out / "error.json"
    if stale.exists():
        stale.unlink()
    stage = _Stages(out, config)
    try:
        save_config(config, out / "config.json")
        row = _run_pde(config, out, stage) if config.kind == "pde" else _run_hnn(config, out, stage)
        stage("report")
        write_report([row], out / "report.csv")
    except Exception as exc:
        raise stage.fail(exc) from exc
    return row


def _run_seed(config: ExperimentConfig, seed: int, out: Path):
    try:
        return seed, run_experiment(config.with_seed(seed), out / f"seed-{seed}"), None
    except ExperimentError as exc:
        return seed, None, str(exc)


def repeatability_run(config: ExperimentConfig, seeds, out_dir, workers: int = 1) -> ReportRow:
    """Run every distinct seed once and aggregate mean and sample std.

    Seeds listed more than once are run once but counted per listing.
    Failed seeds are skipped in the aggregate and flagged.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ContractError("need at least one seed")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    unique = list(dict.fromkeys(seeds))
    if workers > 1 and len(unique) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(unique))) as pool:
            results = list(pool.map(_run_seed, [config] * len(unique), unique, [out] * len(unique)))
    else:
        results = [_run_seed(config, s, out) for s in unique]
    rows = [row for _, row, _ in results if row is not None]
    failed = [s for s, row, _ in results if row is None]
    if not rows:
        errors = "; ".join(f"seed {s}: {msg}" for s, _, msg in results)
        raise ExperimentError("aggregate", f"every seed failed ({errors})")
    row = aggregate(rows, [s for s in seeds if s not in failed], failed)
    write_report([row], out / "report.csv")
    return row
