"""Experiment configuration with a strict JSON schema.

Every section rejects keys it does not know, so a typo in a config file is
an error instead of a silently ignored setting.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError, ContractError
from .hnn import DEFAULT_COEFFS, HamiltonianSpec
from .oracles import GridSpec, OracleSpec
from .priors import PDE_FAMILIES, PriorSpec
from .training import TrainConfig

KINDS = ("pde", "hnn")
HNN_MODES = ("summed", "separated")


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _build(cls, d, where):
    _check_keys(d, [f.name for f in fields(cls)], where)
    try:
        return cls(**d)
    except (TypeError, ContractError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class SearchConfig:
    """Outer-loop settings.

    With ``enabled`` false the prior run uses ``fixed_lambdas`` (zeros when
    empty) and the nominal prior coefficients.
    """

    enabled: bool = True
    n_init: int = 5
    budget: int = 15
    lambda_lower: float = 1e-8
    lambda_upper: float = 10.0
    theta_window: float = 0.5
    log_objective: bool = True
    fixed_lambdas: list = field(default_factory=list)

    def __post_init__(self):
        if self.enabled and not self.budget >= self.n_init >= 1:
            raise ConfigError("search needs budget >= n_init >= 1")
        if not 0 < self.lambda_lower < self.lambda_upper:
            raise ConfigError("search needs 0 < lambda_lower < lambda_upper")
        if not 0 < self.theta_window < 1:
            raise ConfigError("theta_window must lie in (0, 1)")
        self.fixed_lambdas = [float(v) for v in self.fixed_lambdas]
        if not all(math.isfinite(v) and v >= 0 for v in self.fixed_lambdas):
            raise ConfigError("fixed_lambdas must be finite and non-negative")


@dataclass
class HnnSetup:
    system: str = "ideal_pendulum"
    coeffs: dict = field(default_factory=dict)
    # reference Hamiltonian of the regularizer; empty means the system defaults
    prior_coeffs: dict = field(default_factory=dict)
    mode: str = "separated"
    n_traj: int = 25
    n_val_traj: int = 5
    n_test_traj: int = 5
    t_end: float = 3.0
    dt: float = 1.0 / 15.0
    noise: float = 0.1
    n_reg_extra: int = 100
    rollout_t: float = 10.0
    rollout_dt: float = 0.05

    def __post_init__(self):
        if self.system not in DEFAULT_COEFFS:
            raise ConfigError(f"unknown system {self.system!r}")
        if self.mode not in HNN_MODES:
            raise ConfigError(f"mode must be one of {HNN_MODES}")
        if min(self.n_traj, self.n_val_traj, self.n_test_traj) < 1:
            raise ConfigError("trajectory counts must be >= 1")
        if not (self.dt > 0 and self.t_end > self.dt and self.rollout_dt > 0 and self.rollout_t > self.rollout_dt):
            raise ConfigError("time spans must be longer than their steps")
        if self.noise < 0 or self.n_reg_extra < 0:
            raise ConfigError("noise and n_reg_extra must be non-negative")
        # validate both Hamiltonians eagerly
        self.spec()
        self.prior()

    def spec(self) -> HamiltonianSpec:
        return HamiltonianSpec(self.system, self.coeffs)

    def prior(self) -> HamiltonianSpec:
        return HamiltonianSpec(self.system, self.prior_coeffs)


@dataclass
class ExperimentConfig:
    name: str
    kind: str = "pde"
    seed: int = 0
    oracle: OracleSpec | None = None
    grid: GridSpec = field(default_factory=GridSpec)
    noise_sigma: float = 0.1
    n_train: int = 50
    n_colloc: int = 100
    priors: list = field(default_factory=list)
    train: TrainConfig = field(default_factory=TrainConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    weight_decays: list = field(default_factory=lambda: [1e-3, 1e-4, 1e-6, 1e-8])
    val_fraction: float = 0.2
    heatmaps: bool = True
    hnn: HnnSetup | None = None

    def __post_init__(self):
        if not self.name:
            raise ConfigError("experiment needs a name")
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if self.kind == "pde":
            if self.oracle is None:
                raise ConfigError("pde experiments need an oracle")
            if not self.priors:
                raise ConfigError("pde experiments need at least one prior")
            for p in self.priors:
                if p.family not in PDE_FAMILIES:
                    raise ConfigError(f"prior family {p.family!r} is not a PDE family")
            if self.hnn is not None:
                raise ConfigError("hnn section only applies to kind 'hnn'")
        elif self.hnn is None:
            raise ConfigError("hnn experiments need an hnn section")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")
        self.weight_decays = [float(v) for v in self.weight_decays]
        if any(not v > 0 for v in self.weight_decays):
            raise ConfigError("weight decays must be > 0")
        lams = self.search.fixed_lambdas
        n_lams = len(self.priors) if self.kind == "pde" else 1
        if lams and len(lams) != n_lams:
            raise ConfigError(f"fixed_lambdas needs {n_lams} values")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "seed": self.seed,
            "oracle": self.oracle.to_dict() if self.oracle else None,
            "grid": self.grid.to_dict(),
            "noise_sigma": self.noise_sigma,
            "n_train": self.n_train,
            "n_colloc": self.n_colloc,
            "priors": [p.to_dict() for p in self.priors],
            "train": asdict(self.train),
            "search": asdict(self.search),
            "weight_decays": list(self.weight_decays),
            "val_fraction": self.val_fraction,
            "heatmaps": self.heatmaps,
            "hnn": asdict(self.hnn) if self.hnn else None,
        }

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        _check_keys(d, [f.name for f in fields(cls)], "config")
        d = dict(d)
        if d.get("oracle") is not None:
            _check_keys(d["oracle"], ("family", "coeffs", "initial_condition"), "config.oracle")
            try:
                d["oracle"] = OracleSpec.from_dict(d["oracle"])
            except (KeyError, ContractError) as exc:
                raise ConfigError(f"config.oracle: {exc}") from exc
        if "grid" in d:
            d["grid"] = _build(GridSpec, d["grid"], "config.grid")
        if "priors" in d:
            priors = []
            for i, p in enumerate(d["priors"]):
                _check_keys(p, ("family", "coeffs", "tunable"), f"config.priors[{i}]")
                try:
                    priors.append(PriorSpec.from_dict(p))
                except (KeyError, ContractError) as exc:
                    raise ConfigError(f"config.priors[{i}]: {exc}") from exc
            d["priors"] = priors
        if "train" in d:
            d["train"] = _build(TrainConfig, d["train"], "config.train")
        if "search" in d:
            d["search"] = _build(SearchConfig, d["search"], "config.search")
        if d.get("hnn") is not None:
            d["hnn"] = _build(HnnSetup, d["hnn"], "config.hnn")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(doc)


def save_config(config: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.dumps())
    return path
