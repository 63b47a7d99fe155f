import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from priorreg.errors import ContractError, DivergedError
from priorreg.hyperopt import (
    FAILURE_PENALTY,
    Dim,
    GPHyper,
    SearchSpace,
    bo_minimize,
    expected_improvement,
    gp_fit,
    gp_predict,
    propose_next,
    write_trials_csv,
)

LOG_SPACE = SearchSpace([Dim("lambda", "log10", 1e-7, 1.0)])


def matern(a, b, ls, sf):
    r = np.sqrt((((a[:, None, :] - b[None, :, :]) / ls) ** 2).sum(-1))
    s = math.sqrt(5) * r
    return sf * (1 + s + s * s / 3) * np.exp(-s)


def dense_posterior(x, y, xs, hyper):
    """Textbook GP equations with an explicit inverse."""
    mean, std = y.mean(), y.std()
    ys = (y - mean) / std
    k = matern(x, x, hyper.lengthscales, hyper.signal_var) + hyper.noise_var * np.eye(len(x))
    kinv = np.linalg.inv(k)
    ks = matern(xs, x, hyper.lengthscales, hyper.signal_var)
    mu = ks @ kinv @ ys
    var = hyper.signal_var - np.einsum("ij,jk,ik->i", ks, kinv, ks)
    return mean + std * mu, std * np.sqrt(np.maximum(var, 0))


def test_single_observation_interpolates():
    m = gp_fit([[0.3]], [2.5], GPHyper(np.array([0.2]), 1.0, 1e-12))
    mu, sigma = gp_predict(m, [0.3])
    assert abs(mu - 2.5) < 1e-9 and sigma < 1e-5


def test_constant_objective():
    x = np.linspace(0, 1, 5).reshape(-1, 1)
    m = gp_fit(x, np.full(5, 4.0))
    mu, _ = gp_predict(m, np.random.default_rng(0).random((20, 1)))
    assert np.allclose(mu, 4.0)


@pytest.mark.parametrize("seed", range(5))
def test_three_point_posterior_matches_dense(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random((3, 2)), rng.normal(size=3)
    hyper = GPHyper(rng.uniform(0.1, 1.0, 2), rng.uniform(0.5, 2.0), 1e-4)
    m = gp_fit(x, y, hyper)
    xs = rng.random((10, 2))
    mu, sigma = gp_predict(m, xs)
    mu_ref, sigma_ref = dense_posterior(x, y, xs, hyper)
    assert np.max(np.abs(mu - mu_ref)) < 1e-10
    assert np.max(np.abs(sigma - sigma_ref)) < 1e-10


def test_variance_small_at_observations():
    rng = np.random.default_rng(0)
    x, y = rng.random((6, 2)), rng.normal(size=6)
    m = gp_fit(x, y, GPHyper(np.array([0.5, 0.5]), 1.0, 1e-10))
    _, sigma = gp_predict(m, x)
    assert (sigma**2 / m.y_std**2 < 1e-4).all()


def test_fitted_hyper_within_bounds():
    x = np.linspace(0, 1, 8).reshape(-1, 1)
    m = gp_fit(x, np.sin(6 * x).ravel())
    assert np.isfinite(m.hyper.to_log()).all()
    mu, _ = gp_predict(m, x)
    assert np.max(np.abs(mu - np.sin(6 * x).ravel())) < 0.1


def test_gp_rejects_unnormalized_inputs():
    with pytest.raises(ContractError):
        gp_fit([[1.5]], [0.0])


def test_ei_examples():
    assert expected_improvement(2.0, 0.0, 1.0) == 0.0
    assert expected_improvement(1.0, 0.0, 1.0) == 0.0
    assert expected_improvement(0.0, 0.0, 1.0) == 1.0
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
    with pytest.raises(ContractError):
        expected_improvement(0.0, -1.0, 0.0)


def test_ei_matches_monte_carlo():
    rng = np.random.default_rng(0)
    draws = rng.normal(0.0, 1.0, 1_000_000) * 1.0 + 0.0
    imp = np.maximum(0.0 - draws, 0.0)
    assert abs(expected_improvement(0.0, 1.0, 0.0) - imp.mean()) < 3 * imp.std() / 1000


@settings(max_examples=50, deadline=None)
@given(mu=st.floats(-10, 10), sigma=st.floats(0, 10), best=st.floats(-10, 10))
def test_ei_nonnegative(mu, sigma, best):
    assert expected_improvement(mu, sigma, best) >= 0.0


def test_ei_closed_form_agrees_with_formula():
    mu, sigma, best = 0.3, 0.7, 0.1
    z = (best - mu) / sigma
    ref = (best - mu) * ndtr(z) + sigma * math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
    assert expected_improvement(mu, sigma, best) == pytest.approx(ref, rel=1e-14)


def test_degenerate_ei_returns_first_candidate():
    m = gp_fit([[0.5]], [0.0], GPHyper(np.array([0.3]), 1e-12, 1e-12))
    # signal variance ~0 makes sigma ~0 and mu == best everywhere
    m.hyper = GPHyper(np.array([0.3]), 0.0, 1e-12)
    space = SearchSpace([Dim("a", "linear", 0.0, 1.0)])
    x = propose_next(m, space, np.random.default_rng(7))
    assert np.array_equal(x, np.random.default_rng(7).random((1024, 1))[0])


def test_single_center_observation_explores():
    m = gp_fit([[0.5, 0.5]], [1.0])
    space = SearchSpace([Dim("a", "linear", 0, 1), Dim("b", "linear", 0, 1)])
    x = propose_next(m, space, np.random.default_rng(0))
    assert np.max(np.abs(x - 0.5)) >= 1e-3


def test_proposal_deterministic():
    rng = np.random.default_rng(3)
    m = gp_fit(rng.random((4, 2)), rng.normal(size=4))
    space = SearchSpace([Dim("a", "linear", 0, 1), Dim("b", "linear", 0, 1)])
    a = propose_next(m, space, np.random.default_rng(5))
    b = propose_next(m, space, np.random.default_rng(5))
    assert np.array_equal(a, b)


def quad(raw):
    return (math.log10(raw[0]) + 3.0) ** 2


def test_budget_equal_to_init_returns_best_initial():
    res = bo_minimize(quad, LOG_SPACE, n_init=4, budget=4, seed=0)
    assert len(res.trials) == 4
    assert res.best_value == min(t.objective for t in res.trials)


def test_bo_finds_quadratic_minimum():
    res = bo_minimize(quad, LOG_SPACE, n_init=5, budget=25, seed=0)
    assert abs(math.log10(res.best_point[0]) + 3) < 0.35


def test_bo_deterministic_and_in_bounds():
    a = bo_minimize(quad, LOG_SPACE, n_init=3, budget=10, seed=4)
    b = bo_minimize(quad, LOG_SPACE, n_init=3, budget=10, seed=4)
    assert [t.raw.tolist() for t in a.trials] == [t.raw.tolist() for t in b.trials]
    assert all(LOG_SPACE.contains_raw(t.raw) for t in a.trials)
    assert all(x >= y for x, y in zip(a.incumbents, a.incumbents[1:]))


def test_failed_trials_get_penalty():
    def objective(raw):
        if raw[0] > 1e-2:
            raise DivergedError("boom")
        return quad(raw)

    res = bo_minimize(objective, LOG_SPACE, n_init=4, budget=8, seed=1)
    failed = [t for t in res.trials if t.failed]
    assert failed and all(t.objective == FAILURE_PENALTY for t in failed)
    assert res.best_value < FAILURE_PENALTY


def test_log_transform_and_trials_csv(tmp_path):
    res = bo_minimize(lambda r: 1e-3 + quad(r), LOG_SPACE, n_init=3, budget=6, seed=0, transform=np.log)
    path = write_trials_csv(res, tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "trial,lambda,objective,wallclock_s" and len(lines) == 7


def test_search_space_contracts():
    with pytest.raises(ContractError):
        Dim("a", "log10", 0.0, 1.0)
    with pytest.raises(ContractError):
        Dim("a", "linear", 1.0, 1.0)
    with pytest.raises(ContractError):
        bo_minimize(quad, LOG_SPACE, n_init=5, budget=3)
    z = LOG_SPACE.raw_to_internal([1e-3])
    assert np.allclose(LOG_SPACE.internal_to_raw(z), [1e-3])
