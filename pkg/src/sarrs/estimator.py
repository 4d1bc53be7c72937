"""The two-stage subspace-assisted estimator and the alternating competitor.

:func:`sarrs_fit` estimates the right singular subspace of ``X A`` with one
group-penalized regression, then recovers ``A`` with a second one:

1. ``B1 = gpls(X, Y V0)``
2. ``U1`` = leading left singular vectors of ``X B1``
3. ``V1`` = leading right singular vectors of ``U1 U1' Y``
4. ``B2 = gpls(X, Y V1)``
5. ``A_hat = B2 V1'``

:func:`bsw_fit` alternates a group-penalized regression with an orthogonal
Procrustes update of ``V`` until the joint objective stabilizes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .gpls import DEFAULT_MAX_ITER, DEFAULT_TOL, GplsProblem, default_lambda, solve_gpls
from .init import estimate_sigma, init_low_rank, init_sparse
from .linalg import as_matrix, numerical_rank, row_support, thin_svd
from .penalty import PenaltyKind, PenaltySpec, penalty_value

logger = logging.getLogger(__name__)

BSW_REL_TOL = 1e-4
BSW_MAX_ALTERNATIONS = 200
_BSW_EPS = 1e-12


class SarrsError(RuntimeError):
    """A fit could not be completed."""


@dataclass(frozen=True)
class Split:
    """Synthesize four independent response copies with noise scale ``2 sigma``."""

    sigma: float
    seed: int | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"Split requires sigma > 0, got {self.sigma}")


@dataclass(frozen=True)
class SarrsConfig:
    """Inputs of a fit.

    Attributes
    ----------
    rank : int or None
        Fixed rank, or ``None`` to take the initializer's estimate.
    init : {"lowrank", "sparse"} or ndarray
        Initializer, or an explicit ``m x r`` orthonormal ``V0``.
    penalty : PenaltyKind or str
    lam : float or None
        Penalty level; ``None`` uses :func:`sarrs.gpls.default_lambda`.
    shape : float or None
        Penalty shape parameter (MCP/SCAD gamma, capped-l1 cap).
    sigma : float or None
        Noise level for rank thresholds and the automatic level. ``None``
        estimates it from the responses (or uses ``2 * split.sigma`` when
        splitting).
    eta, lambda0 : float or None
        Initializer thresholds; ``None`` selects their defaults.
    split : Split or None
        ``None`` reuses the observed responses in every step.
    """

    rank: int | None = None
    init: object = "lowrank"
    penalty: PenaltyKind = PenaltyKind.GROUP_LASSO
    lam: float | None = None
    shape: float | None = None
    sigma: float | None = None
    eta: float | None = None
    lambda0: float | None = None
    split: Split | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        object.__setattr__(self, "penalty", PenaltyKind(self.penalty))
        if self.rank is not None and self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if isinstance(self.init, str):
            if self.init not in ("lowrank", "sparse"):
                raise ValueError(f"unknown initializer {self.init!r}")
        else:
            object.__setattr__(self, "init", as_matrix(self.init, "V0"))
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def penalty_spec(self, lam):
        return PenaltySpec(self.penalty, lam, self.shape)


@dataclass(frozen=True)
class FitReport:
    a_hat: np.ndarray
    b2: np.ndarray
    v1: np.ndarray
    rank_used: int
    support: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    b1: np.ndarray | None = field(default=None, repr=False)

    @property
    def gpls_invocations(self):
        return self.diagnostics["gpls_invocations"]


def split_responses(y, sigma, seed=None):
    """Four response copies whose total noises are mutually independent.

    With ``Y = X A + Z`` and ``Z`` i.i.d. ``N(0, sigma^2)``, draws
    ``G1 ~ N(0, sigma^2)`` and ``G2, G3 ~ N(0, 2 sigma^2)`` and returns

        (Y + G1 + G2, Y + G1 - G2, Y - G1 + G3, Y - G1 - G3),

    each following the same model with i.i.d. ``N(0, 4 sigma^2)`` noise.
    """
    y = as_matrix(y, "y")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    rng = np.random.default_rng(seed)
    g1 = sigma * rng.standard_normal(y.shape)
    g2 = math.sqrt(2.0) * sigma * rng.standard_normal(y.shape)
    g3 = math.sqrt(2.0) * sigma * rng.standard_normal(y.shape)
    ya, yb = y + g1, y - g1
    return ya + g2, ya - g2, yb + g3, yb - g3


def _check_orthonormal(v, what="V0"):
    gram = v.T @ v
    err = np.max(np.abs(gram - np.eye(v.shape[1]))) if v.size else 0.0
    if err > 1e-8:
        raise ValueError(f"{what} must have orthonormal columns (max deviation {err:.3g})")


@dataclass(frozen=True)
class Prepared:
    """Validated data plus the initializer output shared by fits along a grid.

    ``responses`` holds the response copies used for initialization and for
    steps 1, 3 and 4 (all the same array unless splitting).
    """

    x: np.ndarray
    responses: tuple
    sigma: float | None
    init_summary: dict
    v0: np.ndarray
    init_invocations: int


def prepare(x, y, config):
    """Validate data, synthesize response copies and run the initializer."""
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    if config.split is not None:
        responses = split_responses(y, config.split.sigma, config.split.seed)
        sigma = config.sigma if config.sigma is not None else 2.0 * config.split.sigma
    else:
        responses = (y, y, y, y)
        sigma = config.sigma
    y_init = responses[0]

    if isinstance(config.init, np.ndarray):
        v0 = config.init
        if v0.shape[0] != y.shape[1]:
            raise ValueError(f"V0 must have {y.shape[1]} rows, got {v0.shape[0]}")
        if config.rank is not None and config.rank != v0.shape[1]:
            raise ValueError(f"rank {config.rank} disagrees with V0 of {v0.shape[1]} columns")
        _check_orthonormal(v0)
        if sigma is None and config.lam is None:
            sigma = estimate_sigma(y_init)
        summary = {"method": "provided", "r_hat": v0.shape[1]}
        return Prepared(x, responses, sigma, summary, v0, 0)

    if sigma is None:
        sigma = estimate_sigma(y_init)
    if config.init == "lowrank":
        res = init_low_rank(x, y_init, sigma, config.eta, rank=config.rank)
    else:
        res = init_sparse(
            x, y_init, sigma, config.lambda0, config.eta,
            rank=config.rank, tol=config.tol, max_iter=config.max_iter,
        )
    return Prepared(x, responses, sigma, res.summary(), res.v0, res.gpls_invocations)


def _solve(x, w, spec, config, warm):
    if warm is not None and warm.shape != (x.shape[1], w.shape[1]):
        warm = None
    return solve_gpls(GplsProblem(x, w, spec), tol=config.tol, max_iter=config.max_iter, warm_start=warm)


def sarrs_fit(x, y, config=None, *, warm_start=None, prepared=None):
    """Fit the two-stage subspace-assisted estimator.

    Parameters
    ----------
    x : array_like, shape (n, p)
    y : array_like, shape (n, m)
    config : SarrsConfig, optional
    warm_start : tuple of (B1, B2), optional
        Starting points for the two group-penalized solves, e.g. the
        solution at a neighbouring penalty level.
    prepared : Prepared, optional
        Output of :func:`prepare` on the same data and configuration; skips
        re-initialization along a penalty grid.

    Returns
    -------
    FitReport

    Raises
    ------
    SarrsError
        If ``X B1`` is identically zero (the penalty level is too large).
    """
    config = config or SarrsConfig()
    if prepared is None:
        prepared = prepare(x, y, config)
    x, sigma, v0 = prepared.x, prepared.sigma, prepared.v0
    _, y1, y3, y4 = prepared.responses
    r = v0.shape[1]
    lam = config.lam if config.lam is not None else default_lambda(x, r, sigma)
    spec = config.penalty_spec(lam)
    warm1, warm2 = warm_start if warm_start is not None else (None, None)
    warnings = []

    sol1 = _solve(x, y1 @ v0, spec, config, warm1)
    xb1 = x @ sol1.b
    k = numerical_rank(xb1) if np.any(xb1) else 0
    if k == 0:
        raise SarrsError(
            f"step-1 solution is identically zero at lambda = {lam:.6g}; "
            f"the penalty level is too large"
        )
    if k < r:
        msg = f"X B1 has numerical rank {k} < {r}; continuing with {k} components"
        logger.info(msg)
        warnings.append(msg)
    u1 = thin_svd(xb1, k).u
    v1 = thin_svd(u1 @ (u1.T @ y3), k).v

    sol2 = _solve(x, y4 @ v1, spec, config, warm2)
    b2 = sol2.b
    a_hat = b2 @ v1.T
    diagnostics = {
        "lambda": lam,
        "sigma": sigma,
        "penalty": spec.kind.value,
        "init": prepared.init_summary,
        "gpls_iterations": [sol1.iterations, sol2.iterations],
        "gpls_converged": [sol1.converged, sol2.converged],
        "gpls_invocations": 2 + prepared.init_invocations,
        "warnings": warnings,
    }
    return FitReport(
        a_hat=a_hat,
        b2=b2,
        v1=v1,
        rank_used=k,
        support=row_support(b2),
        diagnostics=diagnostics,
        b1=sol1.b,
    )


def bsw_objective(x, y, b, v, spec):
    resid = y - (x @ b) @ v.T
    return 0.5 * float(np.sum(resid * resid)) + penalty_value(b, spec)


def procrustes_update(x, y, b, v):
    """``V`` maximizing ``tr(V' Y' X B)`` over orthonormal ``m x r`` matrices.

    If ``Y' X B = P S Q'`` then ``V = P Q'``. An all-zero ``X B`` leaves ``v``
    unchanged.
    """
    c = y.T @ (x @ b)
    if not np.any(c):
        return v
    p_, _, qt = np.linalg.svd(c, full_matrices=False)
    return p_ @ qt


def bsw_fit(
    x,
    y,
    config=None,
    *,
    rel_tol=BSW_REL_TOL,
    max_alternations=BSW_MAX_ALTERNATIONS,
    warm_start=None,
    prepared=None,
):
    """Alternating minimization of ``||Y - X B V'||^2 / 2 + rho(B)``.

    Starting from the initializer's ``V0``, each alternation solves the
    group-penalized regression of ``Y V`` on ``X`` and then updates ``V``
    by orthogonal Procrustes. Stops when the relative objective change
    drops below ``rel_tol`` or after ``max_alternations`` alternations.

    Returns
    -------
    FitReport
        ``diagnostics["alternations"]`` equals the number of group
        regressions performed after initialization; the objective after
        each alternation is in ``diagnostics["objective_trace"]``.
    """
    config = config or SarrsConfig()
    if prepared is None:
        prepared = prepare(x, y, config)
    x, sigma, v = prepared.x, prepared.sigma, prepared.v0
    y1 = prepared.responses[1]
    r = v.shape[1]
    lam = config.lam if config.lam is not None else default_lambda(x, r, sigma)
    spec = config.penalty_spec(lam)

    b = warm_start
    trace = []
    prev = None
    converged = False
    for _ in range(max_alternations):
        b = _solve(x, y1 @ v, spec, config, b).b
        v = procrustes_update(x, y1, b, v)
        obj = bsw_objective(x, y1, b, v, spec)
        trace.append(obj)
        if prev is not None and abs(prev - obj) / max(prev, _BSW_EPS) < rel_tol:
            converged = True
            break
        prev = obj
    if not np.any(b):
        raise SarrsError(
            f"alternating fit is identically zero at lambda = {lam:.6g}; "
            f"the penalty level is too large"
        )
    alternations = len(trace)
    diagnostics = {
        "lambda": lam,
        "sigma": sigma,
        "penalty": spec.kind.value,
        "init": prepared.init_summary,
        "alternations": alternations,
        "converged": converged,
        "objective_trace": trace,
        "gpls_invocations": alternations + prepared.init_invocations,
        "warnings": [],
    }
    return FitReport(
        a_hat=b @ v.T,
        b2=b,
        v1=v,
        rank_used=r,
        support=row_support(b),
        diagnostics=diagnostics,
    )
