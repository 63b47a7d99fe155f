import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priorreg.errors import ContractError
from priorreg.oracles import (
    GridSpec,
    NoiseSpec,
    OracleSpec,
    convection_exact,
    gaussian_bump,
    load_dataset,
    make_dataset,
    oracle_field,
    rd_spectral_solve,
    reaction_exact,
    save_dataset,
)


def test_reaction_exact_examples():
    x = np.linspace(0, 2 * math.pi, 50, endpoint=False)
    assert np.allclose(reaction_exact(x, 0.0, 8.0), gaussian_bump(x), atol=1e-15)
    assert np.allclose(reaction_exact(math.pi, np.linspace(0, 3, 20), 8.0), 1.0, atol=1e-15)


def test_reaction_exact_satisfies_ode():
    rng = np.random.default_rng(0)
    x, t, rho, h = rng.uniform(0, 2 * math.pi, 200), rng.uniform(0.01, 1, 200), 10.0, 1e-5
    u = reaction_exact(x, t, rho)
    ut = (reaction_exact(x, t + h, rho) - reaction_exact(x, t - h, rho)) / (2 * h)
    assert np.max(np.abs(ut - rho * u * (1 - u))) < 1e-6


def test_reaction_exact_large_rho_t_is_finite():
    u = reaction_exact(np.linspace(0.1, 6, 40), 100.0, 20.0)
    assert np.isfinite(u).all() and np.allclose(u, 1.0)


def test_convection_exact_examples():
    x = np.linspace(0, 6, 30)
    beta = 7.0
    assert np.allclose(convection_exact(x, 0.0, beta), np.sin(x), atol=1e-15)
    assert np.allclose(convection_exact(x, 2 * math.pi / beta, beta), np.sin(x), atol=1e-12)
    rng = np.random.default_rng(1)
    x, t, h = rng.uniform(0, 6, 100), rng.uniform(0, 1, 100), 1e-5
    ut = (convection_exact(x, t + h, beta) - convection_exact(x, t - h, beta)) / (2 * h)
    ux = (convection_exact(x + h, t, beta) - convection_exact(x - h, t, beta)) / (2 * h)
    assert np.max(np.abs(ut + beta * ux)) < 1e-6


def test_heat_modes_decay_exactly():
    grid = GridSpec(t_max=0.25, nx=64, nt=11)
    nu = 0.4
    u = rd_spectral_solve(grid, 0.0, nu)
    k = np.arange(33)
    a0, a1 = np.fft.rfft(u[:, 0]), np.fft.rfft(u[:, -1])
    expect = a0 * np.exp(-nu * k * k * 0.25)
    # modes that decay into rounding noise carry no relative information
    big = np.abs(expect) > 1e-8 * np.abs(a0).max()
    assert np.max(np.abs(a1[big] - expect[big]) / np.abs(expect[big])) < 1e-6


def test_rd_without_diffusion_matches_reaction():
    grid = GridSpec(t_max=0.5, nx=64, nt=21)
    xx, tt = np.meshgrid(grid.x, grid.t, indexing="ij")
    assert np.max(np.abs(rd_spectral_solve(grid, 10.0, 0.0) - reaction_exact(xx, tt, 10.0))) < 1e-6


def _observed_order(rho=10.0, nu=3.0):
    grid = GridSpec(t_max=0.5, nx=64, nt=2)
    finals = [rd_spectral_solve(grid, rho, nu, substeps=s)[:, -1] for s in (4, 8, 16)]
    d1 = np.max(np.abs(finals[0] - finals[1]))
    d2 = np.max(np.abs(finals[1] - finals[2]))
    return math.log2(d1 / d2)


def test_rd_second_order_in_dt():
    assert 1.7 <= _observed_order() <= 2.3


def test_rd_contract_errors():
    with pytest.raises(ContractError):
        rd_spectral_solve(GridSpec(nx=100, nt=3), 1.0, 1.0)
    with pytest.raises(ContractError):
        rd_spectral_solve(GridSpec(nx=64, nt=3), 1.0, -1.0)


def test_rd_heat_conserves_mean():
    u = rd_spectral_solve(GridSpec(t_max=1.0, nx=64, nt=10), 0.0, 2.0)
    assert np.allclose(u.mean(axis=0), u[:, 0].mean(), atol=1e-13)


@pytest.mark.parametrize("family,coeffs", [("reaction", {"rho": 20.0}), ("reaction_diffusion", {"rho": 10.0, "nu": 3.0})])
def test_fields_finite_and_in_unit_interval(family, coeffs):
    f = oracle_field(OracleSpec(family, coeffs), GridSpec(nx=64, nt=20))
    assert np.isfinite(f).all() and f.min() >= 0.0 and f.max() <= 1.0 + 1e-12


@settings(max_examples=25, deadline=None)
@given(rho=st.floats(0.1, 30), x=st.floats(0.05, 6.2))
def test_reaction_monotone_in_time(rho, x):
    u = reaction_exact(x, np.linspace(0, 1, 50), rho)
    assert (np.diff(u) >= -1e-15).all()


def test_make_dataset_counts():
    ds = make_dataset(OracleSpec("reaction", {"rho": 10.0}), GridSpec(), 50, NoiseSpec(0.1), 100, seed=0)
    assert (len(ds.ic_x), len(ds.bc_t), len(ds.train_x), len(ds.collocation), len(ds.test_x)) == (256, 100, 50, 100, 25600 - 50)
    assert (ds.train_x[:, 1] > 0).all()
    train = {tuple(p) for p in ds.train_x}
    assert not train & {tuple(p) for p in ds.test_x}


def test_noise_free_targets_are_exact():
    grid = GridSpec(nx=32, nt=10)
    oracle = OracleSpec("convection", {"beta": 3.0})
    ds = make_dataset(oracle, grid, 20, NoiseSpec(0.0), 5, seed=4)
    assert np.array_equal(ds.train_y, convection_exact(ds.train_x[:, 0], ds.train_x[:, 1], 3.0))


def test_dataset_deterministic_and_roundtrips(tmp_path):
    args = (OracleSpec("reaction", {"rho": 5.0}), GridSpec(nx=32, nt=10), 20, NoiseSpec(0.1), 15)
    a, b = make_dataset(*args, seed=9), make_dataset(*args, seed=9)
    assert a.identical(b)
    assert not a.identical(make_dataset(*args, seed=10))
    assert load_dataset(save_dataset(a, tmp_path / "d.json")).identical(a)


def test_oversubscribed_train_rejected():
    with pytest.raises(ContractError):
        make_dataset(OracleSpec("reaction", {"rho": 1.0}), GridSpec(nx=4, nt=3), 10, seed=0)
    with pytest.raises(ContractError):
        NoiseSpec(-1.0)
