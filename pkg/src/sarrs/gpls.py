"""Group-penalized multivariate least squares.

Solves

    minimize_B  ||W - X B||_F^2 / 2 + sum_j f(||B[j]||_2)

by cyclic block coordinate descent over the rows of ``B``. Each row update
is the exact minimizer of the row subproblem (see :mod:`sarrs.penalty`),
so the objective never increases from one sweep to the next.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .linalg import as_matrix
from .penalty import PenaltyKind, PenaltySpec, penalty_value, scalar_penalty, threshold_norm

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10_000

_CONVERGED, _MAX_ITER, _ILL_POSED, _NON_FINITE = 0, 1, 2, 3


class GplsError(RuntimeError):
    """The solver could not produce a valid solution."""


@dataclass(frozen=True)
class GplsProblem:
    """Design ``x`` (n x p), response ``w`` (n x r) and a row penalty."""

    x: np.ndarray
    w: np.ndarray
    penalty: PenaltySpec

    def __post_init__(self):
        x = as_matrix(self.x, "x")
        w = as_matrix(self.w, "w")
        if x.shape[0] != w.shape[0]:
            raise ValueError(
                f"x has {x.shape[0]} rows but the response has {w.shape[0]}"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    @property
    def shape(self):
        """``(p, r)``, the shape of the coefficient matrix."""
        return self.x.shape[1], self.w.shape[1]

    def objective(self, b):
        resid = self.w - self.x @ b
        return 0.5 * float(np.sum(resid * resid)) + penalty_value(b, self.penalty)


@dataclass
class GplsSolution:
    b: np.ndarray
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    objective_trace: np.ndarray = field(repr=False)


@numba.njit(cache=True)
def _objective(rt, b, kind, lam, shape):
    val = 0.5 * np.sum(rt * rt)
    for j in range(b.shape[0]):
        val += scalar_penalty(np.sqrt(np.sum(b[j] * b[j])), kind, lam, shape)
    return val


@numba.njit(cache=True)
def _bcd(xt, colsq, rt, b, kind, lam, shape, tol, max_iter, trace, start):
    """Run sweeps until the largest entry change is <= tol.

    ``rt`` holds the transposed residual ``(W - X B).T`` and is updated in
    place together with ``b``. Returns ``(sweeps_done, status)``.
    """
    p = b.shape[0]
    r = b.shape[1]
    n = xt.shape[1]
    v = np.empty(r)
    sweeps = 0
    while sweeps < max_iter:
        max_change = 0.0
        for j in range(p):
            c = colsq[j]
            if c == 0.0:
                continue
            xj = xt[j]
            z2 = 0.0
            for k in range(r):
                g = 0.0
                rk = rt[k]
                for i in range(n):
                    g += xj[i] * rk[i]
                v[k] = b[j, k] + g / c
                z2 += v[k] * v[k]
            z = np.sqrt(z2)
            t = threshold_norm(z, c, kind, lam, shape)
            if t < 0.0:
                return sweeps, 2
            scale = t / z if z > 0.0 else 0.0
            for k in range(r):
                new = v[k] * scale
                delta = new - b[j, k]
                if delta != 0.0:
                    b[j, k] = new
                    rk = rt[k]
                    for i in range(n):
                        rk[i] -= delta * xj[i]
                    ad = abs(delta)
                    if ad > max_change:
                        max_change = ad
        sweeps += 1
        obj = _objective(rt, b, kind, lam, shape)
        if not np.isfinite(obj):
            return sweeps, 3
        trace[start + sweeps - 1] = obj
        if max_change <= tol:
            return sweeps, 0
    return sweeps, 1


@numba.njit(cache=True)
def _fixed_point_residual(xt, colsq, rt, b, kind, lam, shape):
    # max_j ||x_j||^2 * ||row change|| of one Jacobi row update at the current B;
    # in gradient units, so it bounds the stationarity violation
    p = b.shape[0]
    r = b.shape[1]
    n = xt.shape[1]
    v = np.empty(r)
    worst = 0.0
    for j in range(p):
        c = colsq[j]
        if c == 0.0:
            continue
        z2 = 0.0
        for k in range(r):
            g = 0.0
            for i in range(n):
                g += xt[j, i] * rt[k, i]
            v[k] = b[j, k] + g / c
            z2 += v[k] * v[k]
        z = np.sqrt(z2)
        t = threshold_norm(z, c, kind, lam, shape)
        scale = t / z if z > 0.0 else 0.0
        d2 = 0.0
        for k in range(r):
            d = v[k] * scale - b[j, k]
            d2 += d * d
        d = c * np.sqrt(d2)
        if d > worst:
            worst = d
    return worst


def solve_gpls(problem, *, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, warm_start=None):
    """Cyclic block coordinate descent for a :class:`GplsProblem`.

    Parameters
    ----------
    problem : GplsProblem
    tol : float
        Sweeps stop once the largest entry change over a sweep is <= ``tol``.
        The solve counts as converged only if the stationarity residual
        (a fixed-point check in gradient units) is also <= ``tol``;
        otherwise sweeping resumes.
    max_iter : int
        Maximum number of sweeps.
    warm_start : array_like, shape (p, r), optional
        Starting coefficients. Nonconvex penalties without a warm start are
        started from the group Lasso solution at the same level.

    Returns
    -------
    GplsSolution

    Raises
    ------
    ValueError
        On an all-zero design column with ``lam == 0`` (the row is not
        identifiable), or an invalid option.
    GplsError
        If a nonconvex row subproblem is ill-posed or iterates diverge.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    x, w, spec = problem.x, problem.w, problem.penalty
    p, r = problem.shape
    colsq = np.einsum("ij,ij->j", x, x)
    zero_cols = np.flatnonzero(colsq == 0.0)
    if zero_cols.size and spec.lam == 0.0:
        raise ValueError(
            f"design column {int(zero_cols[0])} is zero and lam = 0: row not identifiable"
        )
    if spec.kind is PenaltyKind.GROUP_MCP and spec.lam > 0:
        bad = np.flatnonzero((colsq > 0) & (colsq * spec.param <= 1.0))
        if bad.size:
            raise GplsError(
                f"group MCP row subproblem for column {int(bad[0])} is nonconvex "
                f"(||x_j||^2 * gamma = {colsq[bad[0]] * spec.param:.4g} <= 1)"
            )

    if warm_start is not None:
        b = as_matrix(warm_start, "warm_start").copy()
        if b.shape != (p, r):
            raise ValueError(f"warm_start must have shape {(p, r)}, got {b.shape}")
    elif not spec.is_convex and spec.lam > 0:
        convex = GplsProblem(x, w, PenaltySpec(PenaltyKind.GROUP_LASSO, spec.lam))
        b = solve_gpls(convex, tol=tol, max_iter=max_iter).b.copy()
    else:
        b = np.zeros((p, r))
    b[zero_cols] = 0.0

    xt = np.ascontiguousarray(x.T)
    rt = np.ascontiguousarray((w - x @ b).T)
    trace = np.empty(max_iter)
    done = 0
    converged = False
    kkt = math.inf
    while done < max_iter:
        sweeps, status = _bcd(
            xt, colsq, rt, b, spec.code, spec.lam, spec.param, tol, max_iter - done, trace, done
        )
        done += sweeps
        if status == _ILL_POSED:
            raise GplsError("nonconvex row subproblem became ill-posed")
        if status == _NON_FINITE or not np.all(np.isfinite(b)):
            raise GplsError(
                f"non-finite iterate after {done} sweeps (penalty {spec.kind.value}, "
                f"lam={spec.lam:.6g}); the run diverged"
            )
        kkt = _fixed_point_residual(xt, colsq, rt, b, spec.code, spec.lam, spec.param)
        if status == _CONVERGED and kkt <= tol:
            converged = True
            break
        if status == _MAX_ITER:
            break
    return GplsSolution(
        b=b,
        objective=problem.objective(b),
        iterations=done,
        converged=converged,
        kkt_residual=float(kkt),
        objective_trace=trace[:done].copy(),
    )


def kkt_certificate(problem, b):
    """Optimality gap of ``b`` for a group Lasso problem.

    For each row ``j`` with gradient ``g_j = X[:, j].T (W - X B)``:

    * active rows (``B[j] != 0``): ``max(| ||g_j|| - lam |, ||g_j - lam B[j]/||B[j]|| ||)``,
      which also measures misalignment between ``g_j`` and ``B[j]``;
    * inactive rows: ``(||g_j|| - lam)_+``.

    Returns the maximum over rows; zero certifies global optimality.
    """
    spec = problem.penalty
    if not spec.is_convex:
        raise ValueError(
            f"the KKT certificate is only defined for the convex group Lasso, "
            f"got {spec.kind.value}"
        )
    b = as_matrix(b, "b")
    if b.shape != problem.shape:
        raise ValueError(f"b must have shape {problem.shape}, got {b.shape}")
    grad = problem.x.T @ (problem.w - problem.x @ b)
    gnorm = np.linalg.norm(grad, axis=1)
    bnorm = np.linalg.norm(b, axis=1)
    active = bnorm > 0
    worst = 0.0
    if np.any(~active):
        worst = max(worst, float(np.max(np.maximum(gnorm[~active] - spec.lam, 0.0))))
    if np.any(active):
        direction = b[active] / bnorm[active, None]
        mismatch = np.linalg.norm(grad[active] - spec.lam * direction, axis=1)
        worst = max(worst, float(np.max(np.abs(gnorm[active] - spec.lam))))
        worst = max(worst, float(np.max(mismatch)))
    return worst


def _max_column_norm(x):
    return float(np.max(np.linalg.norm(as_matrix(x, "x"), axis=0)))


def default_lambda(x, r, sigma):
    """Penalty level ``4 sigma max_j ||x_j|| (sqrt(r) + sqrt(4 log p))``."""
    p = as_matrix(x, "x").shape[1]
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if p < 2:
        raise ValueError(f"need at least 2 predictors, got {p}")
    return 4.0 * sigma * _max_column_norm(x) * (math.sqrt(r) + math.sqrt(4.0 * math.log(p)))


def theorem_lambda(x, r, sigma, delta=None):
    """Penalty level ``2 sigma max_j ||x_j|| (sqrt(r) + sqrt(2 log(p / delta)))``.

    This is the smaller level for which the group Lasso error bound holds
    with probability at least ``1 - delta``; ``delta`` defaults to ``1/p``.
    """
    p = as_matrix(x, "x").shape[1]
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if p < 2:
        raise ValueError(f"need at least 2 predictors, got {p}")
    if delta is None:
        delta = 1.0 / p
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return 2.0 * sigma * _max_column_norm(x) * (math.sqrt(r) + math.sqrt(2.0 * math.log(p / delta)))
