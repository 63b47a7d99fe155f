"""Named experiment presets for the reaction, convection, reaction-diffusion
and Hamiltonian cases, at three scales.

Preset names::

    {case}-prior{v}     one fixed prior with coefficient v, lambda tuned
    {case}-multi        both priors of the case together, two lambdas tuned
    {case}-coef{v}      prior starting at v, lambda and the coefficient tuned
    hnn-pendulum        ideal pendulum, reference-Hamiltonian regularizer
    hnn-spring          mass-spring, reference-Hamiltonian regularizer

``desk`` is the scale the acceptance suite runs, ``paper`` the full network
and budget, ``smoke`` a seconds-long configuration for tests and demos.
"""

from __future__ import annotations

import re
from dataclasses import replace

from .config import ExperimentConfig, HnnSetup, SearchConfig
from .errors import ConfigError
from .oracles import GridSpec, OracleSpec
from .priors import PriorSpec
from .training import TrainConfig

SCALES = ("desk", "paper", "smoke")

# case -> (oracle family, oracle coeffs, prior coefficient name, prior values, t_max, n_train)
CASES = {
    "reaction-case1": ("reaction", {"rho": 10.0}, "rho", (5.0, 15.0), 0.5, 50),
    "reaction-case2": ("reaction", {"rho": 20.0}, "rho", (15.0, 25.0), 0.5, 50),
    "convection-case1": ("convection", {"beta": 30.0}, "beta", (25.0, 35.0), 0.5, 100),
    "convection-case2": ("convection", {"beta": 50.0}, "beta", (45.0, 55.0), 0.5, 100),
    "rd-case1": ("reaction_diffusion", {"rho": 10.0, "nu": 3.0}, "rho", (5.0, 15.0), 0.5, 50),
    "rd-case2": ("reaction_diffusion", {"rho": 20.0, "nu": 3.0}, "rho", (15.0, 25.0), 0.5, 50),
}
HNN_SYSTEMS = {"hnn-pendulum": "ideal_pendulum", "hnn-spring": "mass_spring"}

_PDE_TRAIN = {
    "desk": TrainConfig(hidden_layers=4, width=64, lr=2e-4, steps=10000, eval_every=1000),
    "paper": TrainConfig(hidden_layers=5, width=512, lr=2e-4, steps=20000, eval_every=1000),
    "smoke": TrainConfig(hidden_layers=2, width=16, lr=2e-3, steps=200, eval_every=100),
}
_HNN_TRAIN = {
    "desk": TrainConfig(hidden_layers=2, width=64, lr=1e-3, steps=2000, eval_every=200),
    "paper": TrainConfig(hidden_layers=2, width=200, lr=1e-3, steps=2000, eval_every=200),
    "smoke": TrainConfig(hidden_layers=1, width=16, lr=1e-3, steps=100, eval_every=50),
}
_SEARCH = {
    "desk": SearchConfig(n_init=5, budget=15),
    "paper": SearchConfig(n_init=5, budget=20),
    "smoke": SearchConfig(n_init=2, budget=3),
}
_DECAYS = {"desk": [1e-3, 1e-4, 1e-6, 1e-8], "paper": [1e-3, 1e-4, 1e-6, 1e-8], "smoke": [1e-4]}


def _fmt(v: float) -> str:
    return f"{v:g}"


def preset_names() -> list[str]:
    names = []
    for case, (_, _, _, values, _, _) in CASES.items():
        names += [f"{case}-prior{_fmt(v)}" for v in values]
        names.append(f"{case}-multi")
        names += [f"{case}-coef{_fmt(v)}" for v in values]
    return names + list(HNN_SYSTEMS)


def _prior(family, oracle_coeffs, name, value, tunable=()):
    coeffs = dict(oracle_coeffs)
    coeffs[name] = value
    return PriorSpec(family, coeffs, frozenset(tunable))


def preset(name: str, scale: str = "desk") -> ExperimentConfig:
    """Resolve a preset name to a full configuration."""
    if scale not in SCALES:
        raise ConfigError(f"unknown scale {scale!r}; choose from {SCALES}")
    if name in HNN_SYSTEMS:
        n_traj = 5 if scale == "smoke" else 25
        return ExperimentConfig(
            name=name,
            kind="hnn",
            train=_HNN_TRAIN[scale],
            search=replace(_SEARCH[scale], lambda_lower=1e-4, lambda_upper=1e3),
            weight_decays=[],
            heatmaps=False,
            hnn=HnnSetup(system=HNN_SYSTEMS[name], n_traj=n_traj, n_val_traj=min(5, n_traj), n_test_traj=min(5, n_traj)),
        )
    m = re.fullmatch(r"(.+-case\d)-(prior|coef)([0-9.]+)|(.+-case\d)-multi", name)
    case = m and (m.group(1) or m.group(4))
    if case not in CASES:
        raise ConfigError(f"unknown preset {name!r}")
    family, oracle_coeffs, coef, values, t_max, n_train = CASES[case]
    if m.group(4):
        priors = [_prior(family, oracle_coeffs, coef, v) for v in values]
    else:
        value = float(m.group(3))
        if value not in values:
            raise ConfigError(f"{case} has priors {[_fmt(v) for v in values]}, not {m.group(3)}")
        tunable = (coef,) if m.group(2) == "coef" else ()
        priors = [_prior(family, oracle_coeffs, coef, value, tunable)]
    return ExperimentConfig(
        name=name,
        kind="pde",
        oracle=OracleSpec(family, dict(oracle_coeffs)),
        grid=GridSpec(t_max=t_max),
        n_train=n_train,
        priors=priors,
        train=_PDE_TRAIN[scale],
        search=_SEARCH[scale],
        weight_decays=list(_DECAYS[scale]),
    )
