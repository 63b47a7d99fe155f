"""Composite loss assembly, Adam, and the inner training loop."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels, io
from .autodiff import Jet2, LossTerm, MlpParams, ParamGradient, init_mlp, loss_grad, mlp_forward, squared_error_term
from .errors import ContractError, DivergedError
from .oracles import TWO_PI, Dataset
from .priors import PriorSpec, prior_term

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    hidden_layers: int = 4
    width: int = 64
    lr: float = 2e-4
    steps: int = 5000
    seed: int = 0
    weight_decay: float = 0.0
    eval_every: int = 500
    # accepted for config compatibility; dropout is not implemented
    dropout: float = 0.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ContractError("lr must be > 0")
        if self.steps < 1:
            raise ContractError("steps must be >= 1")
        if self.weight_decay < 0:
            raise ContractError("weight_decay must be >= 0")
        if self.eval_every < 1:
            raise ContractError("eval_every must be >= 1")
        if self.dropout != 0.0:
            raise ContractError("dropout is a configuration stub only; it must be 0")

    def layer_sizes(self, input_dim=2, output_dim=1) -> list[int]:
        return [input_dim] + [self.width] * self.hidden_layers + [output_dim]


@dataclass
class LossWeights:
    lambdas: list = field(default_factory=list)

    def __post_init__(self):
        self.lambdas = [float(v) for v in self.lambdas]
        if not all(math.isfinite(v) and v >= 0 for v in self.lambdas):
            raise ContractError("lambdas must be finite and non-negative")


@dataclass
class LossBreakdown:
    data: float
    ic: float
    bc: float
    prior: list
    total: float
    decay: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainedModel:
    params: MlpParams
    config: TrainConfig
    history: list
    final_test_mse: float
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# loss assembly
# ---------------------------------------------------------------------------


def _bc_term(bc_t) -> LossTerm:
    bc_t = np.asarray(bc_t, dtype=np.float64)
    n = bc_t.size
    pts = np.concatenate([np.column_stack([np.zeros(n), bc_t]), np.column_stack([np.full(n, TWO_PI), bc_t])])

    def reduce(jet):
        left, right = jet.value[:n], jet.value[n:]
        diff = left - right
        g = 2.0 * diff / diff.size
        return float(np.mean(diff * diff)), Jet2(np.concatenate([g, -g]))

    return LossTerm("bc", pts, reduce)


def build_terms(data: Dataset, priors=(), lambdas=()) -> list[LossTerm]:
    """Data, initial-condition, boundary and prior terms of the composite loss."""
    if len(priors) != len(lambdas):
        raise ContractError(f"{len(priors)} priors but {len(lambdas)} lambdas")
    terms = []
    if len(data.train_x):
        terms.append(squared_error_term("data", data.train_x, data.train_y))
    if len(data.ic_x):
        ic_pts = np.column_stack([data.ic_x, np.zeros(len(data.ic_x))])
        terms.append(squared_error_term("ic", ic_pts, data.ic_y))
    if len(data.bc_t):
        terms.append(_bc_term(data.bc_t))
    for k, (prior, lam) in enumerate(zip(priors, lambdas)):
        terms.append(prior_term(data.collocation, prior, weight=lam, name=f"prior{k}"))
    return terms


def _breakdown(parts, n_priors, total, decay) -> LossBreakdown:
    return LossBreakdown(
        data=parts.get("data", 0.0),
        ic=parts.get("ic", 0.0),
        bc=parts.get("bc", 0.0),
        prior=[parts[f"prior{k}"] for k in range(n_priors)],
        total=total,
        decay=decay,
    )


def total_loss(params: MlpParams, data: Dataset, priors, weights: LossWeights, weight_decay: float = 0.0) -> LossBreakdown:
    parts: dict = {}
    value, _ = loss_grad(params, build_terms(data, priors, weights.lambdas), parts)
    decay = weight_decay * params.sq_norm() if weight_decay else 0.0
    return _breakdown(parts, len(priors), value + decay, decay)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    params: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def start(cls, flat) -> "AdamState":
        flat = np.array(flat, dtype=np.float64)
        return cls(flat, np.zeros_like(flat), np.zeros_like(flat), 0)


def adam_step(state: AdamState, grads, lr: float) -> AdamState:
    """One bias-corrected Adam update; returns a new state."""
    g = grads.flat() if isinstance(grads, ParamGradient) else np.asarray(grads, dtype=np.float64)
    if g.shape != state.params.shape:
        raise ContractError("gradient and state shapes differ")
    if not np.isfinite(g).all():
        raise DivergedError("non-finite gradient", term="gradient", step=state.t + 1)
    new = AdamState(state.params.copy(), state.m.copy(), state.v.copy(), state.t + 1)
    _kernels.adam_update(new.params, new.m, new.v, g, float(lr), ADAM_BETA1, ADAM_BETA2, ADAM_EPS, new.t)
    return new


def run_adam(params: MlpParams, terms, steps: int, lr: float, weight_decay: float = 0.0, eval_every: int = 500, record=None):
    """Full-batch Adam on ``params`` (updated in place).

    ``record(step, parts, total, decay)`` is called at step 0, every
    ``eval_every`` steps and after the final update.
    """
    sizes = params.layer_sizes
    flat = params.flat()
    work = MlpParams.from_flat(flat, sizes, params.activation, copy=False)
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    g = np.zeros_like(flat)

    def evaluate(step, parts):
        try:
            value, _ = loss_grad(work, terms, parts, out=g)
        except DivergedError as exc:
            exc.step = step
            raise
        decay = 0.0
        if weight_decay:
            decay = weight_decay * float(flat @ flat)
            g[:] += (2.0 * weight_decay) * flat
        if not math.isfinite(value + decay):
            raise DivergedError(f"total loss diverged at step {step}", term="total", step=step)
        return value + decay, decay

    for step in range(steps):
        parts: dict = {}
        total, decay = evaluate(step, parts)
        if record is not None and step % eval_every == 0:
            record(step, parts, total, decay)
        if not np.isfinite(g).all():
            raise DivergedError(f"non-finite gradient at step {step}", term="gradient", step=step)
        _kernels.adam_update(flat, m, v, g, float(lr), ADAM_BETA1, ADAM_BETA2, ADAM_EPS, step + 1)

    if record is not None:
        parts = {}
        total, decay = evaluate(steps, parts)
        record(steps, parts, total, decay)
    for dst, src in zip(params.weights + params.biases, work.weights + work.biases):
        dst[...] = src
    return params


def train(config: TrainConfig, data: Dataset, priors=(), weights: LossWeights | None = None) -> TrainedModel:
    """Inner loop: minimize the composite loss over the network weights."""
    weights = weights or LossWeights([0.0] * len(priors))
    if len(data.train_x) == 0 and len(data.ic_x) == 0:
        raise ContractError("dataset has no supervised points")
    terms = build_terms(data, list(priors), weights.lambdas)
    params = init_mlp(config.layer_sizes(), seed=config.seed)
    history = []

    def record(step, parts, total, decay):
        history.append((step, _breakdown(parts, len(priors), total, decay)))

    run_adam(params, terms, config.steps, config.lr, config.weight_decay, config.eval_every, record)
    test_mse = evaluate_mse(params, data.test_x, data.test_y) if len(data.test_x) else float("nan")
    meta = {"priors": [p.to_dict() for p in priors], "lambdas": list(weights.lambdas)}
    return TrainedModel(params, config, history, test_mse, meta)


def evaluate_mse(model, test_x, test_y) -> float:
    params = model.params if isinstance(model, TrainedModel) else model
    test_y = np.asarray(test_y, dtype=np.float64)
    if test_y.size == 0:
        raise ContractError("empty test set")
    pred = mlp_forward(params, np.asarray(test_x, dtype=np.float64)).reshape(test_y.shape)
    r = pred - test_y
    return float(np.mean(r * r))


def split_validation(data: Dataset, fraction: float = 0.2, seed: int = 0):
    """Hold out ``fraction`` of the noisy training points for the outer loop.

    Returns ``(inner_dataset, val_x, val_y)``.
    """
    n = len(data.train_x)
    n_val = int(round(fraction * n))
    if n_val == 0:
        return data, data.train_x[:0], data.train_y[:0]
    rng = np.random.default_rng([seed, 0x5EED])
    val_idx = np.sort(rng.choice(n, size=n_val, replace=False))
    keep = np.ones(n, dtype=bool)
    keep[val_idx] = False
    inner = Dataset(**{**data.__dict__, "train_x": data.train_x[keep], "train_y": data.train_y[keep]})
    return inner, data.train_x[val_idx], data.train_y[val_idx]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: TrainedModel, path):
    header = {
        "layer_sizes": model.params.layer_sizes,
        "activation": model.params.activation,
        "config": asdict(model.config),
        "history": [[step, b.as_dict() if isinstance(b, LossBreakdown) else b] for step, b in model.history],
        # NaN (no test set) is stored as null to keep the file strict JSON
        "final_test_mse": model.final_test_mse if math.isfinite(model.final_test_mse) else None,
        "meta": model.meta,
    }
    return io.dump(path, "checkpoint", header, {"flat": model.params.flat()})


def load_checkpoint(path) -> TrainedModel:
    header, arr = io.load(path, "checkpoint")
    params = MlpParams.from_flat(arr["flat"], header["layer_sizes"], header["activation"])
    keys = set(LossBreakdown.__dataclass_fields__)
    history = [(int(step), LossBreakdown(**b) if set(b) == keys else b) for step, b in header["history"]]
    mse = header["final_test_mse"]
    return TrainedModel(params, TrainConfig(**header["config"]), history, float("nan") if mse is None else mse, header.get("meta", {}))
