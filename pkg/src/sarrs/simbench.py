"""Simulation design, evaluation metrics, penalty tuning and the benchmark harness.

Each replication draws a training set, a large validation set used to tune
the penalty level (and to estimate the noise level), and an independent
test set on which prediction error is reported.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .estimator import SarrsConfig, SarrsError, bsw_fit, prepare, sarrs_fit
from .gpls import GplsError
from .init import RankZeroError
from .linalg import as_matrix, column_space_basis, schatten_norm_sq

THREADS_ENV = "SRRR_THREADS"
DEFAULT_N_VALIDATION = 2000
DEFAULT_N_TEST = 2000
DEFAULT_GRID_SIZE = 50

METHODS = ("sarrs", "bsw")


@dataclass(frozen=True)
class Scenario:
    """Row-sparse, low-rank regression design with AR(1) predictor correlation."""

    n: int
    m: int
    p: int
    s: int
    r: int
    rho: float = 0.1
    sigma: float = 1.0
    b: float = 1.0
    n_vld: int = DEFAULT_N_VALIDATION
    n_test: int = DEFAULT_N_TEST
    name: str = ""

    def __post_init__(self):
        for k in ("n", "m", "p", "s", "r", "n_vld", "n_test"):
            if int(getattr(self, k)) < 1:
                raise ValueError(f"{k} must be a positive integer, got {getattr(self, k)}")
        if self.s > self.p:
            raise ValueError(f"s = {self.s} exceeds p = {self.p}")
        if self.r > min(self.s, self.m):
            raise ValueError(f"r = {self.r} exceeds min(s, m) = {min(self.s, self.m)}")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")

    @property
    def label(self):
        return self.name or f"n{self.n}_m{self.m}_p{self.p}_s{self.s}_r{self.r}_b{self.b:g}"


PRESETS = {
    "paper-high-dim": Scenario(n=30, m=10, p=100, s=15, r=2, rho=0.1, sigma=1.0, b=0.5),
    "paper-low-dim": Scenario(n=100, m=25, p=25, s=15, r=5, rho=0.1, sigma=1.0, b=0.4),
}


@dataclass
class SimData:
    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    x_vld: np.ndarray
    y_vld: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


def ar_covariance(p, rho):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def generate_scenario(sc, seed=None):
    """Draw training, validation and test data for a :class:`Scenario`.

    Predictor rows are ``N(0, Sigma)`` with ``Sigma[j, k] = rho**|j - k|``;
    ``A = [b B0 B1; 0]`` with standard normal ``B0`` (s x r) and ``B1``
    (r x m); noise is i.i.d. ``N(0, sigma^2)``.
    """
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(ar_covariance(sc.p, sc.rho))
    a = np.zeros((sc.p, sc.m))
    a[: sc.s] = sc.b * rng.standard_normal((sc.s, sc.r)) @ rng.standard_normal((sc.r, sc.m))

    def draw(rows):
        x = rng.standard_normal((rows, sc.p)) @ chol.T
        y = x @ a + sc.sigma * rng.standard_normal((rows, sc.m))
        return x, y

    x, y = draw(sc.n)
    x_vld, y_vld = draw(sc.n_vld)
    x_test, y_test = draw(sc.n_test)
    return SimData(x, a, y, x_vld, y_vld, x_test, y_test)


def validation_sigma(x_vld, y_vld):
    """Noise level from the residual of ``Y_vld`` off the column space of ``X_vld``.

    ``sigma^2 = ||Y - P Y||_F^2 / (m n - m p)``; requires ``n > p``.
    """
    x_vld = as_matrix(x_vld, "x_vld")
    y_vld = as_matrix(y_vld, "y_vld")
    n, p = x_vld.shape
    m = y_vld.shape[1]
    if n <= p:
        raise ValueError(f"validation set needs more rows ({n}) than predictors ({p})")
    q = column_space_basis(x_vld)
    resid = y_vld - q @ (q.T @ y_vld)
    return math.sqrt(float(np.sum(resid * resid)) / (m * n - m * p))


def prediction_error(a_hat, x, y):
    resid = y - x @ a_hat
    return float(np.sum(resid * resid)) / (y.shape[0] * y.shape[1])


def evaluate(a_hat, a, x_test, y_test, q_list=(1.0, 2.0)):
    """Prediction, estimation and selection metrics for one fit."""
    diff = a_hat - a
    p, m = a.shape
    out = {
        "prediction_error": prediction_error(a_hat, x_test, y_test),
        "estimation_error": float(np.sum(diff * diff)) / (m * p),
        "support_size": int(np.sum(np.any(a_hat != 0.0, axis=1))),
    }
    for q in q_list:
        out[f"schatten_q{q:g}"] = schatten_norm_sq(diff, q)
    return out


def lambda_bar(x, r, sigma):
    """Upper end ``2 sigma max_j ||x_j|| (sqrt(r) + 2 sqrt(log p))`` of the tuning grid."""
    x = as_matrix(x, "x")
    p = x.shape[1]
    return 2.0 * sigma * float(np.max(np.linalg.norm(x, axis=0))) * (
        math.sqrt(r) + 2.0 * math.sqrt(math.log(p))
    )


def lambda_grid(lam_max, size=DEFAULT_GRID_SIZE):
    """``size`` equally spaced levels in ``(0, lam_max]``, ascending."""
    if not lam_max > 0:
        raise ValueError(f"grid endpoint must be positive, got {lam_max}")
    return lam_max * np.arange(1, size + 1) / size


@dataclass(frozen=True)
class CvPlan:
    """Penalty levels and optional rank candidates to score.

    Scoring uses an explicit validation set when one is passed to
    :func:`cross_validate`; otherwise ``folds``-fold cross validation on
    the training data.
    """

    lambda_grid: tuple
    rank_candidates: tuple | None = None
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        grid = np.asarray(self.lambda_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("lambda grid must be a nonempty sequence")
        if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("lambda grid must be strictly positive and strictly ascending")
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in grid))
        if self.rank_candidates is not None:
            ranks = tuple(int(v) for v in self.rank_candidates)
            if not ranks or min(ranks) < 1:
                raise ValueError("rank candidates must be positive integers")
            object.__setattr__(self, "rank_candidates", ranks)
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")


@dataclass
class CvResult:
    best_lambda: float
    best_rank: int
    best_fit: object
    table: list = field(default_factory=list)

    @property
    def completion_rate(self):
        return sum(row["ok"] for row in self.table) / len(self.table)


def _fit(method, x, y, config, warm, prepared):
    if method == "sarrs":
        return sarrs_fit(x, y, config, warm_start=warm, prepared=prepared)
    if method == "bsw":
        return bsw_fit(x, y, config, warm_start=warm, prepared=prepared)
    raise ValueError(f"unknown method {method!r}")


def _next_warm(method, fit):
    if method == "sarrs":
        return (fit.b1, fit.b2)
    return fit.b2


def _path(method, x, y, config, grid, scorer):
    """Fit every level of ``grid`` (largest first, warm-started) and score it."""
    prepared = prepare(x, y, config)
    rows = []
    warm = None
    for lam in sorted(grid, reverse=True):
        cfg = replace(config, lam=lam)
        try:
            fit = _fit(method, x, y, cfg, warm, prepared)
        except (SarrsError, GplsError) as exc:
            rows.append({"lambda": lam, "ok": False, "error": math.inf, "cause": str(exc), "fit": None})
            warm = None
            continue
        warm = _next_warm(method, fit)
        rows.append({"lambda": lam, "ok": True, "error": scorer(fit), "cause": "", "fit": fit})
    return rows


def cross_validate(x, y, plan, method="sarrs", config=None, *, x_vld=None, y_vld=None):
    """Select the penalty level (and optionally the rank) by prediction error.

    Every ``(rank, lambda)`` candidate is fitted on the training data and
    scored by mean squared prediction error on ``(x_vld, y_vld)``, or by
    the average over ``plan.folds`` folds when no validation set is given.
    The minimum wins; ties go to the larger level, then the smaller rank.

    Raises
    ------
    RuntimeError
        If every candidate fit failed.
    """
    config = config or SarrsConfig()
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    ranks = plan.rank_candidates or (config.rank,)
    table = []
    for rank in ranks:
        cfg = replace(config, rank=rank)
        if x_vld is not None:
            rows = _path(method, x, y, cfg, plan.lambda_grid, lambda f: prediction_error(f.a_hat, x_vld, y_vld))
        else:
            rows = _kfold_rows(method, x, y, cfg, plan)
        for row in rows:
            row["rank"] = row["fit"].rank_used if row["fit"] is not None else rank
            row["rank_candidate"] = rank
        table.extend(rows)

    ok = [row for row in table if row["ok"]]
    if not ok:
        causes = sorted({row["cause"] for row in table})
        raise RuntimeError("all cross-validation fits failed: " + "; ".join(causes))
    best = min(ok, key=lambda row: (row["error"], -row["lambda"], row["rank"]))
    fit = best["fit"]
    if fit is None or x_vld is None:
        # k-fold scoring: refit the winner on all of the training data
        fit = _fit(method, x, y, replace(config, rank=best["rank_candidate"], lam=best["lambda"]), None, None)
    return CvResult(best_lambda=best["lambda"], best_rank=fit.rank_used, best_fit=fit, table=table)


def _kfold_rows(method, x, y, config, plan):
    n = x.shape[0]
    rng = np.random.default_rng(plan.seed)
    fold_of = rng.permutation(n) % plan.folds
    errors = {lam: [] for lam in plan.lambda_grid}
    causes = {lam: "" for lam in plan.lambda_grid}
    for k in range(plan.folds):
        train, test = fold_of != k, fold_of == k
        rows = _path(
            method, x[train], y[train], config, plan.lambda_grid,
            lambda f: prediction_error(f.a_hat, x[test], y[test]),
        )
        for row in rows:
            errors[row["lambda"]].append(row["error"])
            causes[row["lambda"]] = causes[row["lambda"]] or row["cause"]
    out = []
    for lam in sorted(plan.lambda_grid, reverse=True):
        err = float(np.mean(errors[lam]))
        ok = math.isfinite(err)
        out.append({"lambda": lam, "ok": ok, "error": err, "cause": causes[lam], "fit": None})
    return out


@dataclass(frozen=True)
class MethodSpec:
    method: str = "sarrs"
    penalty: str = "grlasso"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        SarrsConfig(penalty=self.penalty)

    @property
    def label(self):
        return f"{self.method}/{self.penalty}"


def run_replication(scenario, methods, seed, grid_size=DEFAULT_GRID_SIZE, q_list=(1.0, 2.0)):
    """One replication of the tuning protocol for every method on shared data.

    The noise level is estimated from the validation set; the rank and the
    initial subspace come from the low-rank initializer with its default
    threshold; the penalty level is chosen on the validation set from a grid
    ending at :func:`lambda_bar`.
    """
    data = generate_scenario(scenario, seed)
    sigma_hat = validation_sigma(data.x_vld, data.y_vld)
    records = []
    for spec in methods:
        start = time.perf_counter()
        config = SarrsConfig(penalty=spec.penalty, sigma=sigma_hat, init="lowrank")
        record = {"method": spec.method, "penalty": spec.penalty, "sigma_hat": sigma_hat}
        try:
            prepared = prepare(data.x, data.y, config)
            r_hat = prepared.v0.shape[1]
            config = replace(config, rank=r_hat)
            grid = lambda_grid(lambda_bar(data.x, r_hat, sigma_hat), grid_size)
            cv = cross_validate(
                data.x, data.y, CvPlan(tuple(grid)), spec.method, config,
                x_vld=data.x_vld, y_vld=data.y_vld,
            )
        except (RankZeroError, RuntimeError) as exc:
            record.update({"ok": False, "cause": str(exc), "wall_time": time.perf_counter() - start})
            records.append(record)
            continue
        fit = cv.best_fit
        done = [row["fit"] for row in cv.table if row["ok"]]
        record.update(evaluate(fit.a_hat, data.a, data.x_test, data.y_test, q_list))
        record.update(
            {
                "ok": True,
                "r_hat": r_hat,
                "lambda": cv.best_lambda,
                "gpls_invocations": fit.gpls_invocations,
                "gpls_invocations_overall": float(np.mean([f.gpls_invocations for f in done])),
                "completion_rate": cv.completion_rate,
                "wall_time": time.perf_counter() - start,
            }
        )
        if spec.method == "bsw":
            record["alternations"] = fit.diagnostics["alternations"]
            record["alternations_overall"] = float(
                np.mean([f.diagnostics["alternations"] for f in done])
            )
        records.append(record)
    return records


SUMMARY_METRICS = (
    "prediction_error",
    "estimation_error",
    "support_size",
    "r_hat",
    "lambda",
    "gpls_invocations",
    "gpls_invocations_overall",
    "alternations",
    "alternations_overall",
    "completion_rate",
    "schatten_q1",
    "schatten_q2",
)


def replication_seed(master_seed, setting_index, replication):
    """Independent RNG stream for one (setting, replication) work unit."""
    return np.random.SeedSequence(master_seed, spawn_key=(setting_index, replication))


def _unit(args):
    scenario, methods, seed, grid_size, setting_index, rep = args
    records = run_replication(scenario, methods, seed, grid_size)
    for rec in records:
        rec.update({"setting": scenario.label, "setting_index": setting_index, "replication": rep})
    return records


def _threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


@dataclass
class BenchmarkResult:
    records: list
    table: list

    def table_csv(self):
        lines = ["setting,method,penalty,metric,mean,sd"]
        for row in self.table:
            lines.append(
                f"{row['setting']},{row['method']},{row['penalty']},{row['metric']},"
                f"{row['mean']!r},{row['sd']!r}"
            )
        return "\n".join(lines) + "\n"


def summarize(records):
    """Mean and sample standard deviation of every metric per setting and method.

    Records that failed are counted only in ``completed``.
    """
    groups = {}
    for rec in records:
        key = (rec["setting"], rec["method"], rec["penalty"])
        groups.setdefault(key, []).append(rec)
    table = []
    for (setting, method, penalty), recs in groups.items():
        good = [r for r in recs if r["ok"]]
        table.append(
            {"setting": setting, "method": method, "penalty": penalty, "metric": "completed",
             "mean": len(good) / len(recs), "sd": 0.0}
        )
        for metric in SUMMARY_METRICS:
            vals = [float(r[metric]) for r in good if metric in r]
            if not vals:
                continue
            sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            table.append(
                {"setting": setting, "method": method, "penalty": penalty, "metric": metric,
                 "mean": float(np.mean(vals)), "sd": sd}
            )
    return table


def run_benchmark(settings, methods, replications, master_seed=0, grid_size=DEFAULT_GRID_SIZE, *, seeds=None):
    """Run the tuning protocol over settings x replications.

    Work units are independent and seeded from ``(master_seed, setting
    index, replication)``, so results do not depend on scheduling. Up to
    ``$SRRR_THREADS`` worker processes are used.

    Parameters
    ----------
    settings : list of Scenario
    methods : list of MethodSpec
    replications : int
        At least 2.
    seeds : list, optional
        Explicit per-replication seeds overriding the derived streams.
    """
    if replications < 2:
        raise ValueError(f"need at least 2 replications, got {replications}")
    if not settings:
        raise ValueError("no scenarios to run")
    if not methods:
        raise ValueError("no methods to run")
    if seeds is not None and len(seeds) != replications:
        raise ValueError(f"expected {replications} seeds, got {len(seeds)}")
    units = []
    for i, sc in enumerate(settings):
        for rep in range(replications):
            seed = seeds[rep] if seeds is not None else replication_seed(master_seed, i, rep)
            units.append((sc, tuple(methods), seed, grid_size, i, rep))
    workers = min(_threads(), len(units))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_unit, units))
    else:
        chunks = [_unit(u) for u in units]
    records = [rec for chunk in chunks for rec in chunk]
    return BenchmarkResult(records=records, table=summarize(records))


def scenario_dict(sc):
    return asdict(sc)
