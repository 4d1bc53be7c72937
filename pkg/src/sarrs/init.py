"""Rank selection and initial right-subspace estimates.

Two initializers are provided: one exploits the low rank of ``X A`` through
the projection of ``Y`` onto the column space of ``X``, the other runs a
full-response group Lasso first and exploits row sparsity. Both threshold
singular values at ``sigma * eta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gpls import DEFAULT_MAX_ITER, DEFAULT_TOL, GplsProblem, default_lambda, solve_gpls
from .linalg import RANK_RTOL, as_matrix, column_space_basis, row_support, thin_svd
from .penalty import PenaltyKind, PenaltySpec


class RankZeroError(ValueError):
    """No singular value reaches the rank-selection threshold."""


@dataclass(frozen=True)
class InitResult:
    r_hat: int
    v0: np.ndarray
    method: str
    threshold_used: float
    sigma_used: float
    singular_values: np.ndarray
    gpls_invocations: int = 0
    support_size: int | None = None

    def summary(self):
        out = {
            "method": self.method,
            "r_hat": self.r_hat,
            "threshold": self.threshold_used,
            "sigma": self.sigma_used,
        }
        if self.support_size is not None:
            out["support_size"] = self.support_size
        return out


def estimate_sigma(y):
    """Median nonzero singular value of ``y`` divided by ``sqrt(max(n, m))``."""
    y = as_matrix(y, "y")
    s = np.linalg.svd(y, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("cannot estimate sigma from an all-zero response")
    nonzero = s[s > RANK_RTOL * s[0]]
    return float(np.median(nonzero)) / math.sqrt(max(y.shape))


def default_eta(n, m, p):
    """Low-rank threshold multiplier ``sqrt(2m) + sqrt(2 min(n, p))``."""
    return math.sqrt(2 * m) + math.sqrt(2 * min(n, p))


def _select(svd_values, sigma, eta, rank, what):
    if rank is not None:
        kmax = svd_values.size
        if not 1 <= rank <= kmax:
            raise ValueError(f"rank must be in [1, {kmax}], got {rank}")
        return rank
    threshold = sigma * eta
    r_hat = int(np.sum(svd_values >= threshold))
    if r_hat == 0:
        top = svd_values[0] if svd_values.size else 0.0
        raise RankZeroError(
            f"no singular value of {what} reaches sigma * eta = {threshold:.6g} "
            f"(largest is {top:.6g}); lower eta or supply a stronger signal"
        )
    return r_hat


def init_low_rank(x, y, sigma, eta=None, *, rank=None):
    """Rank and initial subspace from the singular structure of ``P Y``.

    ``P`` projects onto the column space of ``x``. The estimated rank is the
    number of singular values of ``P Y`` that are ``>= sigma * eta``;
    ``v0`` holds the corresponding leading right singular vectors. Passing
    ``rank`` skips the threshold and returns that many vectors.
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    n, p = x.shape
    m = y.shape[1]
    if eta is None:
        eta = default_eta(n, m, p)
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    basis = column_space_basis(x)
    py = basis @ (basis.T @ y)
    s = np.linalg.svd(py, compute_uv=False)
    r_hat = _select(s, sigma, eta, rank, "P Y")
    return InitResult(
        r_hat=r_hat,
        v0=thin_svd(py, r_hat).v,
        method="lowrank",
        threshold_used=float(sigma * eta),
        sigma_used=float(sigma),
        singular_values=s,
    )


def default_lambda0(x, m, sigma):
    """Group Lasso level for the full-response fit: the default rule at rank ``m``."""
    return default_lambda(x, m, sigma)


def init_sparse(
    x,
    y,
    sigma,
    lambda0=None,
    eta=None,
    *,
    rank=None,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
):
    """Rank and initial subspace from a full-response group Lasso fit.

    Parameters
    ----------
    lambda0 : float, optional
        Group Lasso level; defaults to :func:`default_lambda0`.
    eta : float or None
        Fixed threshold multiplier. ``None`` derives it from the fitted
        support: ``sqrt(s0 (m + 4 log p))`` with ``s0`` the number of
        nonzero rows.
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    p = x.shape[1]
    m = y.shape[1]
    if lambda0 is None:
        lambda0 = default_lambda0(x, m, sigma)
    sol = solve_gpls(
        GplsProblem(x, y, PenaltySpec(PenaltyKind.GROUP_LASSO, lambda0)),
        tol=tol,
        max_iter=max_iter,
    )
    s0 = row_support(sol.b).size
    if s0 == 0:
        raise RankZeroError(
            f"the group Lasso fit at lambda0 = {lambda0:.6g} is identically zero; "
            f"lower lambda0"
        )
    if eta is None:
        eta = math.sqrt(s0 * (m + 4.0 * math.log(p)))
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    xa0 = x @ sol.b
    s = np.linalg.svd(xa0, compute_uv=False)
    r_hat = _select(s, sigma, eta, rank, "X A0")
    return InitResult(
        r_hat=r_hat,
        v0=thin_svd(xa0, r_hat).v,
        method="sparse",
        threshold_used=float(sigma * eta),
        sigma_used=float(sigma),
        singular_values=s,
        gpls_invocations=1,
        support_size=s0,
    )


def subspace_overlap(v, v0):
    """Smallest singular value of ``v.T @ v0`` for orthonormal-column inputs."""
    v = as_matrix(v, "v")
    v0 = as_matrix(v0, "v0")
    if v.shape[0] != v0.shape[0]:
        raise ValueError(f"row counts differ: {v.shape[0]} vs {v0.shape[0]}")
    if v0.shape[1] < v.shape[1]:
        return 0.0
    s = np.linalg.svd(v.T @ v0, compute_uv=False)
    return float(min(max(s[-1], 0.0), 1.0))
