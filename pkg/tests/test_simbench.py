import math

import numpy as np
import pytest

import benchcache
from sarrs.estimator import SarrsConfig
from sarrs.linalg import numerical_rank
from sarrs.simbench import (
    PRESETS,
    CvPlan,
    MethodSpec,
    Scenario,
    cross_validate,
    evaluate,
    generate_scenario,
    lambda_bar,
    lambda_grid,
    replication_seed,
    run_benchmark,
    summarize,
    validation_sigma,
)

SMALL = Scenario(n=20, m=4, p=10, s=4, r=2, b=1.0, n_vld=200, n_test=200, name="small")


def test_presets():
    hi, lo = PRESETS["paper-high-dim"], PRESETS["paper-low-dim"]
    assert (hi.n, hi.m, hi.p, hi.s, hi.r, hi.rho, hi.sigma) == (30, 10, 100, 15, 2, 0.1, 1.0)
    assert (lo.n, lo.m, lo.p, lo.s, lo.r, lo.rho, lo.sigma) == (100, 25, 25, 15, 5, 0.1, 1.0)


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(n=10, m=3, p=5, s=6, r=1)
    with pytest.raises(ValueError):
        Scenario(n=10, m=3, p=5, s=2, r=3)
    with pytest.raises(ValueError):
        Scenario(n=10, m=3, p=5, s=2, r=1, rho=1.0)
    with pytest.raises(ValueError):
        Scenario(n=10, m=3, p=5, s=2, r=1, sigma=0.0)


def test_identity_covariance_when_rho_zero():
    sc = Scenario(n=100_000, m=2, p=5, s=2, r=1, rho=0.0, n_vld=10, n_test=10)
    x = generate_scenario(sc, 1).x
    assert np.max(np.abs(np.cov(x, rowvar=False) - np.eye(5))) < 0.02


def test_ar_covariance_structure():
    sc = Scenario(n=100_000, m=2, p=4, s=2, r=1, rho=0.5, n_vld=10, n_test=10)
    cov = np.cov(generate_scenario(sc, 2).x, rowvar=False)
    expected = 0.5 ** np.abs(np.subtract.outer(np.arange(4), np.arange(4)))
    assert np.max(np.abs(cov - expected)) < 0.03


def test_generated_shapes_rank_and_determinism():
    sc = PRESETS["paper-high-dim"]
    for seed in range(20):
        d = generate_scenario(sc, seed)
        assert numerical_rank(d.a, 1e-8) == sc.r
        assert not np.any(d.a[sc.s:])
    d = generate_scenario(sc, 3)
    assert d.x.shape == (30, 100) and d.y.shape == (30, 10)
    assert d.x_vld.shape == (2000, 100) and d.x_test.shape == (2000, 100)
    e = generate_scenario(sc, 3)
    np.testing.assert_array_equal(d.y, e.y)
    np.testing.assert_array_equal(d.y_test, e.y_test)


def test_evaluate_trivial_cases(rng):
    a = np.zeros((4, 3))
    a[0, 0], a[1, 1] = 2.0, 3.0
    x = rng.standard_normal((10, 4))
    y = x @ a
    out = evaluate(a, a, x, y)
    assert out["estimation_error"] == 0.0 and out["prediction_error"] == 0.0
    assert out["schatten_q1"] == 0.0 and out["schatten_q2"] == 0.0
    assert out["support_size"] == 2
    zero = evaluate(np.zeros((4, 3)), a, x, y)
    assert zero["estimation_error"] == pytest.approx(13.0 / 12.0)
    assert zero["support_size"] == 0


def test_evaluate_matches_second_implementation(rng):
    a, a_hat = rng.standard_normal((6, 4)), rng.standard_normal((6, 4))
    a_hat[2] = 0.0
    x, y = rng.standard_normal((50, 6)), rng.standard_normal((50, 4))
    out = evaluate(a_hat, a, x, y, q_list=(1.0, 1.5, 2.0))
    diff = a_hat - a
    pred = sum((y[i, j] - x[i] @ a_hat[:, j]) ** 2 for i in range(50) for j in range(4)) / 200
    eig = np.clip(np.linalg.eigvalsh(diff.T @ diff), 0, None)
    assert out["prediction_error"] == pytest.approx(pred, rel=1e-12)
    assert out["estimation_error"] == pytest.approx(np.sum(eig) / 24, rel=1e-10)
    for q in (1.0, 1.5, 2.0):
        assert out[f"schatten_q{q:g}"] == pytest.approx(np.sum(eig ** (q / 2)) ** (2 / q), rel=1e-10)
    assert out["support_size"] == 5


def test_validation_sigma_formula(rng):
    x = rng.standard_normal((300, 5))
    y = x @ rng.standard_normal((5, 3)) + 0.7 * rng.standard_normal((300, 3))
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    rss = np.sum((y - x @ coef) ** 2)
    assert validation_sigma(x, y) == pytest.approx(math.sqrt(rss / (3 * 300 - 3 * 5)), rel=1e-10)
    with pytest.raises(ValueError):
        validation_sigma(rng.standard_normal((4, 5)), rng.standard_normal((4, 2)))


def test_lambda_grid():
    x = np.eye(4)[:, :3] * 2.0
    lb = lambda_bar(x, 2, 1.5)
    assert lb == pytest.approx(2 * 1.5 * 2.0 * (math.sqrt(2) + 2 * math.sqrt(math.log(3))))
    grid = lambda_grid(lb)
    assert grid.size == 50
    assert grid[0] == pytest.approx(lb / 50) and grid[-1] == pytest.approx(lb)
    assert np.all(grid > 0) and np.all(np.diff(grid) > 0)


def test_cv_plan_validation():
    with pytest.raises(ValueError):
        CvPlan(())
    with pytest.raises(ValueError):
        CvPlan((2.0, 1.0))
    with pytest.raises(ValueError):
        CvPlan((0.0, 1.0))
    with pytest.raises(ValueError):
        CvPlan((1.0,), rank_candidates=(0,))


def test_cv_single_candidate():
    d = generate_scenario(SMALL, 0)
    cv = cross_validate(d.x, d.y, CvPlan((3.0,)), "sarrs", SarrsConfig(rank=2), x_vld=d.x_vld, y_vld=d.y_vld)
    assert cv.best_lambda == 3.0 and cv.best_rank == 2
    assert cv.completion_rate == 1.0


def test_cv_selects_true_rank_without_noise():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((40, 10))
        a = np.zeros((10, 6))
        a[:4] = 2 * rng.standard_normal((4, 2)) @ rng.standard_normal((2, 6))
        xv = rng.standard_normal((200, 10))
        plan = CvPlan(tuple(lambda_grid(lambda_bar(x, 3, 1.0), 20)), rank_candidates=(1, 2, 3, 4))
        cv = cross_validate(x, x @ a, plan, "sarrs", SarrsConfig(sigma=1.0), x_vld=xv, y_vld=xv @ a)
        assert cv.best_rank == 2


def test_cv_kfold_and_failures():
    d = generate_scenario(SMALL, 1)
    plan = CvPlan(tuple(lambda_grid(lambda_bar(d.x, 2, 1.0), 8)), folds=4)
    cv = cross_validate(d.x, d.y, plan, "sarrs", SarrsConfig(rank=2))
    assert cv.best_lambda in plan.lambda_grid
    assert len(cv.table) == 8
    # levels that zero out step one fail every fit
    huge = CvPlan((1e6, 2e6, 3e6))
    with pytest.raises(RuntimeError, match="all cross-validation fits failed"):
        cross_validate(d.x, d.y, huge, "sarrs", SarrsConfig(rank=2), x_vld=d.x_vld, y_vld=d.y_vld)


def test_cv_bsw():
    d = generate_scenario(SMALL, 2)
    plan = CvPlan(tuple(lambda_grid(lambda_bar(d.x, 2, 1.0), 6)))
    cv = cross_validate(d.x, d.y, plan, "bsw", SarrsConfig(rank=2), x_vld=d.x_vld, y_vld=d.y_vld)
    assert cv.best_fit.diagnostics["alternations"] >= 1


def test_replication_seeds_are_distinct():
    seeds = {replication_seed(0, i, k).generate_state(1)[0] for i in range(3) for k in range(20)}
    assert len(seeds) == 60


def test_benchmark_identical_seeds_zero_sd():
    seed = replication_seed(7, 0, 0)
    res = run_benchmark([SMALL], [MethodSpec("sarrs", "grlasso")], 2, grid_size=10, seeds=[seed, seed])
    for row in res.table:
        assert row["sd"] == 0.0


def test_benchmark_rejects_single_replication():
    with pytest.raises(ValueError):
        run_benchmark([SMALL], [MethodSpec("sarrs", "grlasso")], 1)


def test_benchmark_schedule_independent(monkeypatch):
    methods = [MethodSpec("sarrs", "grlasso"), MethodSpec("bsw", "grmcp")]
    monkeypatch.setenv("SRRR_THREADS", "1")
    serial = run_benchmark([SMALL], methods, 3, master_seed=5, grid_size=8)
    monkeypatch.setenv("SRRR_THREADS", "2")
    parallel = run_benchmark([SMALL], methods, 3, master_seed=5, grid_size=8)
    assert serial.table_csv() == parallel.table_csv()
    assert serial.table_csv().splitlines()[0] == "setting,method,penalty,metric,mean,sd"


def test_summarize_reports_completion():
    recs = [
        {"setting": "s", "method": "sarrs", "penalty": "grlasso", "ok": True, "estimation_error": 1.0},
        {"setting": "s", "method": "sarrs", "penalty": "grlasso", "ok": True, "estimation_error": 3.0},
        {"setting": "s", "method": "sarrs", "penalty": "grlasso", "ok": False},
    ]
    table = {row["metric"]: row for row in summarize(recs)}
    assert table["completed"]["mean"] == pytest.approx(2 / 3)
    assert table["estimation_error"]["mean"] == 2.0
    assert table["estimation_error"]["sd"] == pytest.approx(math.sqrt(2.0))


@pytest.mark.parametrize("preset,b", [("paper-high-dim", 0.5), ("paper-low-dim", 0.4)])
def test_tuned_fit_beats_zero_estimator(preset, b):
    sc, result = benchcache.table_run(preset, b)
    wins = 0
    for rec, seed in zip(benchcache.records(result), range(benchcache.REPS)):
        assert rec["gpls_invocations"] == 2
        data = generate_scenario(sc, replication_seed(benchcache.SEED_TABLES, 0, seed))
        zero = np.sum(data.a**2) / (sc.m * sc.p)
        wins += rec["ok"] and rec["estimation_error"] < zero
    print(f"{preset} b={b}: tuned SARRS beats the zero estimator in {wins}/50")
    assert wins >= 45
