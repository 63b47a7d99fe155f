"""Physics-prior residual operators and the collocation regularizer.

A prior is an approximate PDE ``F_theta(u) = 0``.  Its regularizer is the
mean squared residual of the network over a fixed set of collocation points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Jet2, LossTerm, MlpParams, loss_grad
from .errors import ContractError

REQUIRED_COEFFS = {
    "reaction": ("rho",),
    "convection": ("beta",),
    "reaction_diffusion": ("rho", "nu"),
    "hamiltonian": ("mass", "length", "gravity"),
}
PDE_FAMILIES = ("reaction", "convection", "reaction_diffusion")

# network input is (x, t)
X_DIR = ("x", (1.0, 0.0))
T_DIR = ("t", (0.0, 1.0))


@dataclass
class PriorSpec:
    family: str
    coeffs: dict
    tunable: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.family not in REQUIRED_COEFFS:
            raise ContractError(f"unknown prior family {self.family!r}")
        need = set(REQUIRED_COEFFS[self.family])
        if set(self.coeffs) != need:
            raise ContractError(f"{self.family} prior needs coefficients {sorted(need)}, got {sorted(self.coeffs)}")
        self.coeffs = {k: float(v) for k, v in self.coeffs.items()}
        if not all(math.isfinite(v) for v in self.coeffs.values()):
            raise ContractError("prior coefficients must be finite")
        if self.coeffs.get("nu", 0.0) < 0:
            raise ContractError("nu must be non-negative")
        self.tunable = frozenset(self.tunable)
        if not self.tunable <= need:
            raise ContractError(f"tunable {sorted(self.tunable)} not among {sorted(need)}")

    def with_coeffs(self, **coeffs) -> "PriorSpec":
        return PriorSpec(self.family, {**self.coeffs, **coeffs}, self.tunable)

    def label(self) -> str:
        return self.family + "(" + ",".join(f"{k}={v:g}" for k, v in sorted(self.coeffs.items())) + ")"

    def to_dict(self) -> dict:
        return {"family": self.family, "coeffs": dict(self.coeffs), "tunable": sorted(self.tunable)}

    @classmethod
    def from_dict(cls, d) -> "PriorSpec":
        return cls(d["family"], dict(d["coeffs"]), frozenset(d.get("tunable", ())))


@dataclass
class ResidualSample:
    point: np.ndarray
    residual: np.ndarray


def _need(jet, order, label):
    table = jet.d1 if order == 1 else jet.d2
    if label not in table:
        kind = "first" if order == 1 else "second"
        raise ContractError(f"jet lacks the {kind} derivative along {label!r}")
    return table[label]


def residual_reaction(jet: Jet2, rho: float):
    """``u_t - rho u (1 - u)``."""
    u = jet.value
    return _need(jet, 1, "t") - rho * u * (1.0 - u)


def residual_convection(jet: Jet2, beta: float):
    """``u_t + beta u_x``."""
    return _need(jet, 1, "t") + beta * _need(jet, 1, "x")


def residual_reaction_diffusion(jet: Jet2, rho: float, nu: float):
    """``u_t - nu u_xx - rho u (1 - u)``."""
    u = jet.value
    return _need(jet, 1, "t") - nu * _need(jet, 2, "x") - rho * u * (1.0 - u)


def residual(jet: Jet2, prior: PriorSpec):
    c = prior.coeffs
    if prior.family == "reaction":
        return residual_reaction(jet, c["rho"])
    if prior.family == "convection":
        return residual_convection(jet, c["beta"])
    if prior.family == "reaction_diffusion":
        return residual_reaction_diffusion(jet, c["rho"], c["nu"])
    raise ContractError(f"{prior.family} is not a PDE prior")


def _residual_cotangent(jet, prior, r_bar):
    """Pull the residual cotangent ``r_bar`` back onto the jet entries."""
    c = prior.coeffs
    u = jet.value
    if prior.family == "convection":
        return Jet2(None, {"t": r_bar, "x": c["beta"] * r_bar})
    du = -c["rho"] * (1.0 - 2.0 * u) * r_bar
    if prior.family == "reaction":
        return Jet2(du, {"t": r_bar})
    return Jet2(du, {"t": r_bar}, {"x": -c["nu"] * r_bar})


def jet_request(prior: PriorSpec):
    """Directions and second-order labels the family's residual needs."""
    if prior.family == "reaction":
        return (T_DIR,), ()
    if prior.family == "convection":
        return (T_DIR, X_DIR), ()
    if prior.family == "reaction_diffusion":
        return (X_DIR, T_DIR), ("x",)
    raise ContractError(f"{prior.family} is not a PDE prior")


def prior_term(collocation, prior: PriorSpec, weight: float = 1.0, name: str | None = None) -> LossTerm:
    """Loss term ``weight * mean_i residual(x_i)^2`` for use with ``loss_grad``."""
    pts = np.asarray(collocation, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ContractError("collocation set is empty")
    dirs, second = jet_request(prior)

    def reduce(jet):
        r = residual(jet, prior)
        return float(np.mean(r * r)), _residual_cotangent(jet, prior, 2.0 * r / r.size)

    return LossTerm(name or "prior:" + prior.label(), pts, reduce, dirs=dirs, second=second, weight=weight)


def prior_loss(params: MlpParams, collocation, prior: PriorSpec) -> float:
    value, _ = loss_grad(params, [prior_term(collocation, prior)])
    return value


def residual_samples(params: MlpParams, collocation, prior: PriorSpec) -> list[ResidualSample]:
    from .autodiff import mlp_jet

    pts = np.asarray(collocation, dtype=np.float64).reshape(-1, 2)
    dirs, second = jet_request(prior)
    jet = mlp_jet(params, pts, dirs, order=2 if second else 1, second=second or None)
    r = residual(jet, prior)
    return [ResidualSample(p, ri) for p, ri in zip(pts, r)]
