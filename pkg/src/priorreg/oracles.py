"""Ground-truth fields and noisy training datasets.

The hidden "oracle" systems are solved exactly (reaction, convection) or by a
Fourier pseudo-spectral Strang-splitting scheme (reaction-diffusion) on a
periodic ``x`` grid over ``[0, 2 pi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import io
from .errors import ContractError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GridSpec:
    """Space-time grid.  The periodic endpoint ``x = 2 pi`` is excluded."""

    t_max: float = 0.5
    nx: int = 256
    nt: int = 100
    x_min: float = 0.0
    x_max: float = TWO_PI
    t_min: float = 0.0

    def __post_init__(self):
        if self.nx < 2 or self.nt < 2:
            raise ContractError("grid needs nx >= 2 and nt >= 2")
        if not self.t_max > self.t_min:
            raise ContractError("t_max must exceed t_min")

    @property
    def x(self) -> np.ndarray:
        return self.x_min + (self.x_max - self.x_min) * np.arange(self.nx) / self.nx

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.nt)

    def points(self) -> np.ndarray:
        """All ``(x, t)`` grid points, x-major: row ``ix * nt + it``."""
        xx, tt = np.meshgrid(self.x, self.t, indexing="ij")
        return np.column_stack([xx.ravel(), tt.ravel()])

    def to_dict(self) -> dict:
        return {"t_max": self.t_max, "nx": self.nx, "nt": self.nt, "x_min": self.x_min, "x_max": self.x_max, "t_min": self.t_min}

    @classmethod
    def from_dict(cls, d) -> "GridSpec":
        return cls(**d)


DEFAULT_IC = {"reaction": "gaussian_bump", "reaction_diffusion": "gaussian_bump", "convection": "sine"}
ORACLE_COEFFS = {"reaction": ("rho",), "convection": ("beta",), "reaction_diffusion": ("rho", "nu")}


@dataclass(frozen=True)
class OracleSpec:
    family: str
    coeffs: dict = field(hash=False)
    initial_condition: str = ""

    def __post_init__(self):
        if self.family not in ORACLE_COEFFS:
            raise ContractError(f"unknown oracle family {self.family!r}")
        if set(self.coeffs) != set(ORACLE_COEFFS[self.family]):
            raise ContractError(f"{self.family} oracle needs {ORACLE_COEFFS[self.family]}")
        if not self.initial_condition:
            object.__setattr__(self, "initial_condition", DEFAULT_IC[self.family])
        if self.initial_condition != DEFAULT_IC[self.family]:
            raise ContractError(f"{self.family} oracle uses the {DEFAULT_IC[self.family]} initial condition")

    def to_dict(self) -> dict:
        return {"family": self.family, "coeffs": {k: float(v) for k, v in self.coeffs.items()}, "initial_condition": self.initial_condition}

    @classmethod
    def from_dict(cls, d) -> "OracleSpec":
        return cls(d["family"], dict(d["coeffs"]), d.get("initial_condition", ""))


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.1

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ContractError("noise sigma must be >= 0")


def gaussian_bump(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-((x - math.pi) ** 2) / (2.0 * (math.pi / 4.0) ** 2))


def initial_condition(name: str, x):
    if name == "gaussian_bump":
        return gaussian_bump(x)
    if name == "sine":
        return np.sin(np.asarray(x, dtype=np.float64))
    raise ContractError(f"unknown initial condition {name!r}")


def logistic_flow(u0, rho_t):
    """Exact solution of ``du/dt = rho u (1 - u)`` after time ``t`` from ``u0``."""
    u0, rho_t = np.broadcast_arrays(np.asarray(u0, dtype=np.float64), np.asarray(rho_t, dtype=np.float64))
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        e = np.exp(np.minimum(rho_t, 500.0))
        direct = u0 * e / (u0 * e + 1.0 - u0)
        # log-space form for large rho*t: u = 1 / (1 + exp(log(1-u0) - log(u0) - rho t))
        logodds = np.log1p(-u0) - np.log(u0) - rho_t
        stable = 1.0 / (1.0 + np.exp(logodds))
    out = np.where(rho_t > 500.0, np.where(u0 > 0, stable, 0.0), direct)
    return out[()] if out.ndim == 0 else out


def reaction_exact(x, t, rho):
    return logistic_flow(gaussian_bump(x), rho * np.asarray(t, dtype=np.float64))


def convection_exact(x, t, beta):
    return np.sin(np.asarray(x, dtype=np.float64) - beta * np.asarray(t, dtype=np.float64))


def rd_spectral_solve(grid: GridSpec, rho: float, nu: float, substeps: int = 8, u0=None) -> np.ndarray:
    """Reaction-diffusion field on ``grid``, shape ``(nx, nt)``.

    Strang splitting per step ``dt = (t_k+1 - t_k) / substeps``: half-step
    exact logistic reaction, full-step exact diffusion of each Fourier mode,
    half-step reaction.
    """
    nx = grid.nx
    if nx & (nx - 1):
        raise ContractError("nx must be a power of two")
    if nu < 0:
        raise ContractError("nu must be non-negative")
    if substeps < 1:
        raise ContractError("substeps must be >= 1")
    length = grid.x_max - grid.x_min
    k = TWO_PI * np.fft.rfftfreq(nx, d=length / nx)
    t = grid.t
    u = gaussian_bump(grid.x) if u0 is None else np.asarray(u0, dtype=np.float64).copy()
    out = np.empty((nx, grid.nt))
    out[:, 0] = u
    for it in range(1, grid.nt):
        dt = (t[it] - t[it - 1]) / substeps
        decay = np.exp(-nu * k * k * dt)
        half = 0.5 * rho * dt
        for _ in range(substeps):
            u = logistic_flow(u, half)
            u = np.fft.irfft(np.fft.rfft(u) * decay, n=nx)
            u = logistic_flow(u, half)
        out[:, it] = u
    return out


def oracle_field(oracle: OracleSpec, grid: GridSpec, substeps: int = 8) -> np.ndarray:
    """Oracle values on the grid, shape ``(nx, nt)``."""
    xx, tt = np.meshgrid(grid.x, grid.t, indexing="ij")
    c = oracle.coeffs
    if oracle.family == "reaction":
        return reaction_exact(xx, tt, c["rho"])
    if oracle.family == "convection":
        return convection_exact(xx, tt, c["beta"])
    return rd_spectral_solve(grid, c["rho"], c["nu"], substeps=substeps)


@dataclass
class Dataset:
    """Noisy observations plus the point sets of the composite loss.

    Inputs are ``(x, t)`` rows.  ``ic_x``/``ic_y`` are the clean initial
    condition at ``t = 0``; ``bc_t`` the times at which periodicity is
    enforced; ``collocation`` the prior's residual points.
    """

    train_x: np.ndarray
    train_y: np.ndarray
    ic_x: np.ndarray
    ic_y: np.ndarray
    bc_t: np.ndarray
    collocation: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    seed: int
    oracle: OracleSpec | None = None
    grid: GridSpec | None = None
    noise: NoiseSpec | None = None

    def arrays(self) -> dict:
        return {
            "train_x": self.train_x,
            "train_y": self.train_y,
            "ic_x": self.ic_x,
            "ic_y": self.ic_y,
            "bc_t": self.bc_t,
            "collocation": self.collocation,
            "test_x": self.test_x,
            "test_y": self.test_y,
        }

    def identical(self, other: "Dataset") -> bool:
        a, b = self.arrays(), other.arrays()
        return self.seed == other.seed and all(np.array_equal(a[k], b[k]) and a[k].shape == b[k].shape for k in a)


def make_dataset(oracle: OracleSpec, grid: GridSpec, n_train: int = 50, noise: NoiseSpec = NoiseSpec(), n_colloc: int = 100, seed: int = 0) -> Dataset:
    if n_train < 0 or n_train + grid.nx > grid.nx * grid.nt:
        raise ContractError(f"cannot draw {n_train} training points from {grid.nx * (grid.nt - 1)} interior grid points")
    if n_colloc < 0:
        raise ContractError("n_colloc must be >= 0")
    rng = np.random.default_rng(seed)
    field_ = oracle_field(oracle, grid)
    pts = grid.points()
    values = field_.ravel()

    interior = np.flatnonzero(np.tile(np.arange(grid.nt) > 0, grid.nx))
    train_idx = np.sort(rng.choice(interior, size=n_train, replace=False))
    noise_draw = rng.normal(0.0, noise.sigma, size=n_train) if noise.sigma > 0 else np.zeros(n_train)
    train_y = values[train_idx] + noise_draw

    colloc = np.column_stack(
        [rng.uniform(grid.x_min, grid.x_max, size=n_colloc), rng.uniform(grid.t_min, grid.t_max, size=n_colloc)]
    )
    keep = np.ones(values.size, dtype=bool)
    keep[train_idx] = False
    return Dataset(
        train_x=pts[train_idx],
        train_y=train_y,
        ic_x=grid.x.copy(),
        ic_y=field_[:, 0].copy(),
        bc_t=grid.t.copy(),
        collocation=colloc,
        test_x=pts[keep],
        test_y=values[keep],
        seed=int(seed),
        oracle=oracle,
        grid=grid,
        noise=noise,
    )


def save_dataset(ds: Dataset, path):
    header = {
        "seed": ds.seed,
        "oracle": ds.oracle.to_dict() if ds.oracle else None,
        "grid": ds.grid.to_dict() if ds.grid else None,
        "noise": {"sigma": ds.noise.sigma} if ds.noise else None,
    }
    return io.dump(path, "dataset", header, ds.arrays())


def load_dataset(path) -> Dataset:
    header, arr = io.load(path, "dataset")
    return Dataset(
        train_x=arr["train_x"].reshape(-1, 2),
        train_y=arr["train_y"],
        ic_x=arr["ic_x"],
        ic_y=arr["ic_y"],
        bc_t=arr["bc_t"],
        collocation=arr["collocation"].reshape(-1, 2),
        test_x=arr["test_x"].reshape(-1, 2),
        test_y=arr["test_y"],
        seed=int(header["seed"]),
        oracle=OracleSpec.from_dict(header["oracle"]) if header.get("oracle") else None,
        grid=GridSpec.from_dict(header["grid"]) if header.get("grid") else None,
        noise=NoiseSpec(header["noise"]["sigma"]) if header.get("noise") else None,
    )
