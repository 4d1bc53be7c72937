import numpy as np
import pytest

from conftest import orthonormal
from sarrs.estimator import (
    SarrsConfig,
    SarrsError,
    Split,
    bsw_fit,
    bsw_objective,
    procrustes_update,
    sarrs_fit,
    split_responses,
)
from sarrs.gpls import GplsProblem, solve_gpls
from sarrs.linalg import numerical_rank, row_support
from sarrs.penalty import PenaltyKind, PenaltySpec


def model(rng, n=30, p=10, m=6, s=4, r=2, sigma=0.5, scale=2.0):
    x = rng.standard_normal((n, p))
    a = np.zeros((p, m))
    a[:s] = scale * rng.standard_normal((s, r)) @ rng.standard_normal((r, m))
    y = x @ a + sigma * rng.standard_normal((n, m))
    return x, a, y


def true_v(a, r):
    return np.linalg.svd(a)[2][:r].T


def test_noiseless_recovery(rng):
    x, a, _ = model(rng)
    fit = sarrs_fit(x, x @ a, SarrsConfig(rank=2, init=true_v(a, 2), lam=1e-8))
    assert np.linalg.norm(fit.a_hat - a) <= 1e-6


def test_fit_report_invariants(rng):
    x, a, y = model(rng)
    for kind in PenaltyKind:
        fit = sarrs_fit(x, y, SarrsConfig(penalty=kind, lam=8.0, sigma=0.5))
        np.testing.assert_array_equal(fit.a_hat, fit.b2 @ fit.v1.T)
        np.testing.assert_allclose(fit.a_hat @ fit.v1 @ fit.v1.T, fit.a_hat, atol=1e-10)
        np.testing.assert_array_equal(fit.support, row_support(fit.b2))
        np.testing.assert_array_equal(row_support(fit.a_hat), row_support(fit.b2))
        assert numerical_rank(fit.a_hat) <= fit.rank_used
        np.testing.assert_allclose(fit.v1.T @ fit.v1, np.eye(fit.rank_used), atol=1e-10)
        assert fit.gpls_invocations == 2
        assert fit.diagnostics["lambda"] == 8.0


def test_sparse_init_adds_one_invocation(rng):
    x, a, y = model(rng, n=40, scale=4.0, sigma=0.1)
    fit = sarrs_fit(x, y, SarrsConfig(init="sparse", sigma=0.1))
    assert fit.gpls_invocations == 3
    assert fit.diagnostics["init"]["method"] == "sparse"


def test_matches_full_response_problem(rng):
    x, a, y = model(rng)
    fit = sarrs_fit(x, y, SarrsConfig(lam=5.0, sigma=0.5))
    v = fit.v1
    full = solve_gpls(GplsProblem(x, y @ v @ v.T, PenaltySpec(PenaltyKind.GROUP_LASSO, 5.0)), tol=1e-10)
    np.testing.assert_allclose(full.b, fit.a_hat, atol=1e-6)


def test_row_permutation_equivariance(rng):
    x, a, y = model(rng)
    perm = rng.permutation(x.shape[1])
    cfg = SarrsConfig(rank=2, init=true_v(a, 2), lam=5.0, tol=1e-11)
    base = sarrs_fit(x, y, cfg)
    permuted = sarrs_fit(x[:, perm], y, cfg)
    # cyclic sweeps visit rows in a different order, so agreement is up to solver tolerance
    np.testing.assert_allclose(permuted.a_hat, base.a_hat[perm], atol=1e-8)
    np.testing.assert_array_equal(np.sort(perm[permuted.support]), base.support)


def test_right_rotation_equivariance(rng):
    x, a, y = model(rng)
    q = orthonormal(rng, 6, 6)
    v0 = true_v(a, 2)
    base = sarrs_fit(x, y, SarrsConfig(rank=2, init=v0, lam=5.0, tol=1e-10))
    rotated = sarrs_fit(x, y @ q, SarrsConfig(rank=2, init=q.T @ v0, lam=5.0, tol=1e-10))
    np.testing.assert_allclose(rotated.a_hat, base.a_hat @ q, atol=1e-6)


def test_rank_deficient_step_two_warns(rng):
    x, a, y = model(rng, r=2)
    y = x @ a + 0.01 * rng.standard_normal(y.shape)
    lam_max = np.max(np.linalg.norm(x.T @ y @ true_v(a, 2), axis=1))
    # pick a level that keeps a single row alive in step one
    fit = sarrs_fit(x, y, SarrsConfig(rank=2, init=true_v(a, 2), lam=0.97 * lam_max))
    assert fit.rank_used == 1
    assert fit.diagnostics["warnings"]


def test_excessive_lambda_names_level(rng):
    x, a, y = model(rng)
    with pytest.raises(SarrsError, match="1e\\+06|1000000"):
        sarrs_fit(x, y, SarrsConfig(rank=2, lam=1e6, sigma=0.5))


def test_dimension_and_config_errors(rng):
    x, a, y = model(rng)
    with pytest.raises(ValueError):
        sarrs_fit(x, y[:-1], SarrsConfig(lam=1.0))
    with pytest.raises(ValueError):
        sarrs_fit(x, y, SarrsConfig(rank=7, lam=1.0, sigma=0.5))
    with pytest.raises(ValueError):
        SarrsConfig(rank=0)
    with pytest.raises(ValueError):
        Split(0.0)
    with pytest.raises(ValueError):
        SarrsConfig(init="spectral")


def test_split_variance_and_independence():
    sigma = 1.3
    draws = np.array([np.stack(split_responses(np.zeros((2, 2)), sigma, seed)) for seed in range(10_000)])
    var = draws.reshape(10_000, 4, -1).var(axis=0)
    np.testing.assert_allclose(var, 3 * sigma**2, rtol=0.05)

    rng = np.random.default_rng(5)
    z = sigma * rng.standard_normal((200, 500))
    copies = [c.ravel() for c in split_responses(z, sigma, seed=9)]
    corr = np.corrcoef(copies)
    assert np.max(np.abs(corr - np.eye(4))) < 0.02
    for c in copies:
        assert np.var(c) == pytest.approx(4 * sigma**2, rel=0.02)


def test_split_degenerate_and_deterministic(rng):
    y = rng.standard_normal((5, 3))
    for copy in split_responses(y, 0.0, seed=1):
        np.testing.assert_array_equal(copy, y)
    a, b = split_responses(y, 1.0, seed=4), split_responses(y, 1.0, seed=4)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


def test_split_mode_fit(rng):
    x, a, y = model(rng, n=60, sigma=0.2, scale=3.0)
    cfg = SarrsConfig(split=Split(0.2, seed=3))
    f1, f2 = sarrs_fit(x, y, cfg), sarrs_fit(x, y, cfg)
    np.testing.assert_array_equal(f1.a_hat, f2.a_hat)
    assert f1.diagnostics["sigma"] == pytest.approx(0.4)
    assert f1.gpls_invocations == 2


def test_procrustes_update_is_orthonormal_and_optimal(rng):
    x, a, y = model(rng)
    b = rng.standard_normal((10, 2))
    v = procrustes_update(x, y, b, orthonormal(rng, 6, 2))
    np.testing.assert_allclose(v.T @ v, np.eye(2), atol=1e-12)
    best = np.trace(v.T @ y.T @ x @ b)
    for _ in range(200):
        other = orthonormal(rng, 6, 2)
        assert np.trace(other.T @ y.T @ x @ b) <= best + 1e-9


@pytest.mark.parametrize("kind", [PenaltyKind.GROUP_LASSO, PenaltyKind.GROUP_MCP])
def test_bsw_objective_monotone(kind):
    for seed in range(10):
        x, a, y = model(np.random.default_rng(seed), sigma=1.0, scale=1.0)
        fit = bsw_fit(x, y, SarrsConfig(penalty=kind, lam=4.0, sigma=1.0, rank=2))
        trace = np.array(fit.diagnostics["objective_trace"])
        assert np.all(np.diff(trace) <= 1e-9 * trace[:-1])
        assert fit.gpls_invocations == fit.diagnostics["alternations"]
        final = bsw_objective(x, y, fit.b2, fit.v1, PenaltySpec(kind, 4.0))
        assert final == pytest.approx(trace[-1], rel=1e-10)


def test_bsw_noiseless_stops_immediately(rng):
    x, a, _ = model(rng)
    fit = bsw_fit(x, x @ a, SarrsConfig(rank=2, init=true_v(a, 2), lam=1e-8))
    assert fit.diagnostics["alternations"] <= 2
    assert fit.diagnostics["converged"]
    assert np.linalg.norm(fit.a_hat - a) <= 1e-5 * np.linalg.norm(a)
