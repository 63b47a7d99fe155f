"""Hamiltonian neural networks with a reference-Hamiltonian regularizer.

The network maps a phase-space point ``(q, p)`` to a scalar energy ``H_w``;
its symplectic gradient ``(dH_w/dp, -dH_w/dq)`` is the learned vector field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import io
from .autodiff import Jet2, LossTerm, MlpParams, init_mlp, loss_grad, mlp_jet
from .errors import ContractError, ShapeError
from .training import TrainConfig, TrainedModel, run_adam

Q_DIR = ("q", (1.0, 0.0))
P_DIR = ("p", (0.0, 1.0))

DEFAULT_COEFFS = {
    "mass_spring": {"mass": 1.0, "spring_k": 1.0},
    "ideal_pendulum": {"mass": 1.0, "length": 1.0, "gravity": 3.0},
}
# radius range of initial states, per system
DEFAULT_RADII = {"mass_spring": (0.1, 1.0), "ideal_pendulum": (1.3, 2.3)}


@dataclass(frozen=True)
class HamiltonianSpec:
    system: str
    coeffs: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.system not in DEFAULT_COEFFS:
            raise ContractError(f"unknown system {self.system!r}")
        merged = {**DEFAULT_COEFFS[self.system], **{k: float(v) for k, v in self.coeffs.items()}}
        if set(merged) != set(DEFAULT_COEFFS[self.system]):
            raise ContractError(f"{self.system} takes coefficients {sorted(DEFAULT_COEFFS[self.system])}")
        if not all(v > 0 and math.isfinite(v) for v in merged.values()):
            raise ContractError("Hamiltonian coefficients must be positive")
        object.__setattr__(self, "coeffs", merged)

    def to_dict(self):
        return {"system": self.system, "coeffs": dict(self.coeffs)}


@dataclass
class PhaseState:
    q: float
    p: float


@dataclass
class Trajectory:
    """``states`` and ``derivs`` are ``(n, 2)`` arrays of ``(q, p)`` and ``(dq/dt, dp/dt)``."""

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    diverged: bool = False

    def __post_init__(self):
        n = len(self.times)
        if self.states.shape != (n, 2) or self.derivs.shape != (n, 2):
            raise ShapeError("times, states and derivs must have equal lengths")
        if n > 1 and not (np.diff(self.times) > 0).all():
            raise ContractError("times must be strictly increasing")


def _qp(s):
    if isinstance(s, PhaseState):
        return np.float64(s.q), np.float64(s.p)
    s = np.asarray(s, dtype=np.float64)
    return s[..., 0], s[..., 1]


def h_analytic(spec: HamiltonianSpec, s):
    q, p = _qp(s)
    c = spec.coeffs
    if spec.system == "mass_spring":
        return 0.5 * (c["spring_k"] * q * q + p * p / c["mass"])
    m, g, l = c["mass"], c["gravity"], c["length"]
    return 2.0 * m * g * l * (1.0 - np.cos(q)) + l * l * p * p / (2.0 * m)


def h_gradient(spec: HamiltonianSpec, s):
    """``(dH/dq, dH/dp)``."""
    q, p = _qp(s)
    c = spec.coeffs
    if spec.system == "mass_spring":
        return c["spring_k"] * q, p / c["mass"]
    m, g, l = c["mass"], c["gravity"], c["length"]
    return 2.0 * m * g * l * np.sin(q), l * l * p / m


def vector_field(spec: HamiltonianSpec, s):
    dq, dp = h_gradient(spec, s)
    return np.stack([dp, -dq], axis=-1)


def _rk4(f, y0, dt, n_steps, bound=None):
    ys = np.empty((n_steps + 1,) + np.shape(y0))
    ys[0] = y0
    y = np.asarray(y0, dtype=np.float64)
    for i in range(n_steps):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if bound is not None and not (np.all(np.isfinite(y)) and np.abs(y).sum() <= bound):
            return ys[: i + 1], True
        ys[i + 1] = y
    return ys, False


def _n_steps(t_span, dt):
    if not dt > 0:
        raise ContractError("dt must be > 0")
    n = int(round((t_span[1] - t_span[0]) / dt))
    if n < 1:
        raise ContractError("t_span shorter than dt")
    return n


def generate_trajectories(spec: HamiltonianSpec, n_traj: int, t_span=(0.0, 3.0), dt: float = 1.0 / 15.0, noise: float = 0.1, seed: int = 0, radius=None) -> list[Trajectory]:
    """RK4 trajectories from random initial states of random radius.

    Derivatives come from the analytic vector field at the clean states; noise
    is then added to both states and derivatives.
    """
    rng = np.random.default_rng(seed)
    r_lo, r_hi = radius or DEFAULT_RADII[spec.system]
    n = _n_steps(t_span, dt)
    times = t_span[0] + dt * np.arange(n + 1)
    out = []
    for _ in range(n_traj):
        y0 = rng.uniform(-1.0, 1.0, size=2)
        y0 = y0 / np.linalg.norm(y0) * rng.uniform(r_lo, r_hi)
        states, _ = _rk4(lambda y: vector_field(spec, y), y0, dt, n)
        derivs = vector_field(spec, states)
        if noise > 0:
            states = states + rng.normal(0.0, noise, size=states.shape)
            derivs = derivs + rng.normal(0.0, noise, size=derivs.shape)
        out.append(Trajectory(times.copy(), states, derivs))
    return out


def stack(trajs):
    """Concatenate trajectories into ``(states, derivs)`` arrays."""
    return np.concatenate([t.states for t in trajs]), np.concatenate([t.derivs for t in trajs])


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def hnn_term(states, derivs, weight: float = 1.0, name: str = "hnn") -> LossTerm:
    """Mean of ``(dH_w/dp - dq/dt)^2 + (dH_w/dq + dp/dt)^2``."""
    states = np.asarray(states, dtype=np.float64).reshape(-1, 2)
    derivs = np.asarray(derivs, dtype=np.float64).reshape(-1, 2)
    n = len(states)
    if n == 0:
        raise ContractError("empty batch")
    dq_dt = derivs[:, :1]
    dp_dt = derivs[:, 1:]

    def reduce(jet):
        a = jet.d1["p"] - dq_dt
        b = jet.d1["q"] + dp_dt
        val = float(np.sum(a * a + b * b) / n)
        return val, Jet2(None, {"p": 2.0 * a / n, "q": 2.0 * b / n})

    return LossTerm(name, states, reduce, dirs=(Q_DIR, P_DIR), weight=weight)


def hnn_reg_term(pts, spec: HamiltonianSpec, mode: str = "summed", weight: float = 1.0, name: str = "hnn_reg") -> LossTerm:
    if mode not in ("summed", "separated"):
        raise ContractError(f"unknown mode {mode!r}")
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ContractError("regularizer needs at least one point")
    ref_dq, ref_dp = h_gradient(spec, pts)
    ref_dq = ref_dq.reshape(-1, 1)
    ref_dp = ref_dp.reshape(-1, 1)

    def reduce(jet):
        eq = jet.d1["q"] - ref_dq
        ep = jet.d1["p"] - ref_dp
        if mode == "summed":
            s = ep + eq
            return float(np.sum(s * s) / n), Jet2(None, {"q": 2.0 * s / n, "p": 2.0 * s / n})
        return float(np.sum(eq * eq + ep * ep) / n), Jet2(None, {"q": 2.0 * eq / n, "p": 2.0 * ep / n})

    return LossTerm(name, pts, reduce, dirs=(Q_DIR, P_DIR), weight=weight)


def _check_hnn_params(params):
    if params.input_dim != 2 or params.output_dim != 1:
        raise ShapeError("HNN network must map (q, p) -> H")


def hnn_loss(params: MlpParams, batch) -> float:
    """``batch`` is ``(states, derivs)`` or a list of trajectories."""
    _check_hnn_params(params)
    states, derivs = stack(batch) if isinstance(batch, list) else batch
    value, _ = loss_grad(params, [hnn_term(states, derivs)])
    return value


def hnn_reg(params: MlpParams, pts, spec: HamiltonianSpec, mode: str = "summed") -> float:
    _check_hnn_params(params)
    value, _ = loss_grad(params, [hnn_reg_term(pts, spec, mode)])
    return value


def regularizer_points(states, n_extra: int = 100, seed: int = 0) -> np.ndarray:
    """Training states plus uniform samples over their bounding box."""
    states = np.asarray(states, dtype=np.float64).reshape(-1, 2)
    rng = np.random.default_rng([seed, 18])
    lo, hi = states.min(axis=0), states.max(axis=0)
    return np.concatenate([states, rng.uniform(lo, hi, size=(n_extra, 2))])


@dataclass
class HnnConfig:
    hidden_layers: int = 2
    width: int = 64
    lr: float = 1e-3
    steps: int = 2000
    seed: int = 0
    eval_every: int = 200

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.hidden_layers, self.width, self.lr, self.steps, self.seed, 0.0, self.eval_every)


def train_hnn(config: HnnConfig, train_trajs, prior: HamiltonianSpec | None = None, lam: float = 0.0, mode: str = "summed", reg_pts=None) -> TrainedModel:
    states, derivs = stack(train_trajs)
    terms = [hnn_term(states, derivs)]
    if prior is not None:
        pts = regularizer_points(states, seed=config.seed) if reg_pts is None else reg_pts
        terms.append(hnn_reg_term(pts, prior, mode, weight=lam))
    tc = config.train_config()
    params = init_mlp(tc.layer_sizes(2, 1), seed=config.seed)
    history = []

    def record(step, parts, total, decay):
        history.append((step, {"hnn": parts["hnn"], "reg": parts.get("hnn_reg", 0.0), "total": total}))

    run_adam(params, terms, tc.steps, tc.lr, 0.0, tc.eval_every, record)
    meta = {"prior": prior.to_dict() if prior else None, "lambda": lam, "mode": mode}
    return TrainedModel(params, tc, history, float("nan"), meta)


# ---------------------------------------------------------------------------
# rollout and energy
# ---------------------------------------------------------------------------


def learned_field(params: MlpParams, s):
    jet = mlp_jet(params, s, (Q_DIR, P_DIR), order=1)
    return np.concatenate([jet.d1["p"], -jet.d1["q"]], axis=-1)


def integrate_learned(model, s0, t_span=(0.0, 10.0), dt: float = 0.05, bound: float = 1e6) -> Trajectory:
    """RK4 on the learned symplectic field; stops early (``diverged``) past ``|q|+|p| > bound``."""
    params = model.params if isinstance(model, TrainedModel) else model
    _check_hnn_params(params)
    q, p = _qp(s0)
    y0 = np.array([float(q), float(p)])
    n = _n_steps(t_span, dt)
    f = lambda y: learned_field(params, y)  # noqa: E731
    states, diverged = _rk4(f, y0, dt, n, bound=bound)
    times = t_span[0] + dt * np.arange(len(states))
    derivs = learned_field(params, states)
    return Trajectory(times, states, derivs, diverged)


def integrate_exact(spec: HamiltonianSpec, s0, t_span=(0.0, 10.0), dt: float = 0.05) -> Trajectory:
    q, p = _qp(s0)
    n = _n_steps(t_span, dt)
    states, _ = _rk4(lambda y: vector_field(spec, y), np.array([float(q), float(p)]), dt, n)
    times = t_span[0] + dt * np.arange(n + 1)
    return Trajectory(times, states, vector_field(spec, states))


def energy_metric(traj: Trajectory, spec: HamiltonianSpec) -> float:
    """Mean squared drift of the true energy from its initial value."""
    if len(traj.times) == 0:
        raise ContractError("empty trajectory")
    e = h_analytic(spec, traj.states)
    return float(np.mean((e - e[0]) ** 2))


def save_trajectories(trajs, path, spec: HamiltonianSpec, seed: int):
    arrays = {}
    for i, t in enumerate(trajs):
        arrays[f"times_{i}"] = t.times
        arrays[f"states_{i}"] = t.states
        arrays[f"derivs_{i}"] = t.derivs
    return io.dump(path, "trajectories", {"spec": spec.to_dict(), "seed": seed, "n_traj": len(trajs)}, arrays)


def load_trajectories(path):
    header, arr = io.load(path, "trajectories")
    trajs = [
        Trajectory(arr[f"times_{i}"], arr[f"states_{i}"].reshape(-1, 2), arr[f"derivs_{i}"].reshape(-1, 2))
        for i in range(header["n_traj"])
    ]
    return HamiltonianSpec(header["spec"]["system"], header["spec"]["coeffs"]), trajs
