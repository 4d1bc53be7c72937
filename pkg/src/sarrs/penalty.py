"""Row-wise group penalties and their exact row-update (threshold) rules.

Every penalty has the form ``rho(B) = sum_j f(||B[j]||_2)``, so the row
subproblem

    minimize_b  c/2 * ||b - v||^2 + f(||b||)

has a minimizer colinear with ``v`` and reduces to a scalar problem in the
row norm. The scalar kernels are numba-compiled so the coordinate-descent
solver can call them from its inner loop.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numba
import numpy as np

from .linalg import row_norms


class PenaltyKind(str, enum.Enum):
    GROUP_LASSO = "grlasso"
    GROUP_MCP = "grmcp"
    GROUP_SCAD = "grscad"
    CAPPED_L1 = "capped-l1"


# integer codes understood by the compiled kernels
KIND_CODE = {
    PenaltyKind.GROUP_LASSO: 0,
    PenaltyKind.GROUP_MCP: 1,
    PenaltyKind.GROUP_SCAD: 2,
    PenaltyKind.CAPPED_L1: 3,
}

DEFAULT_MCP_GAMMA = 3.0
DEFAULT_SCAD_GAMMA = 3.7


class IllPosedRowProblem(ValueError):
    """The nonconvex row subproblem has no well-defined minimizer."""


@dataclass(frozen=True)
class PenaltySpec:
    """A group penalty with level ``lam`` and shape parameter ``shape``.

    ``shape`` is the MCP/SCAD gamma or the capped-l1 cap; it is ignored by
    the group Lasso. ``None`` selects the default for the kind.
    """

    kind: PenaltyKind = PenaltyKind.GROUP_LASSO
    lam: float = 0.0
    shape: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind(self.kind))
        lam = float(self.lam)
        if not np.isfinite(lam) or lam < 0:
            raise ValueError(f"penalty level must be finite and >= 0, got {self.lam}")
        object.__setattr__(self, "lam", lam)
        if self.shape is not None:
            object.__setattr__(self, "shape", float(self.shape))
        param = self.param
        if self.kind is PenaltyKind.GROUP_MCP and not param > 1:
            raise ValueError(f"group MCP requires gamma > 1, got {param}")
        if self.kind is PenaltyKind.GROUP_SCAD and not param > 2:
            raise ValueError(f"group SCAD requires gamma > 2, got {param}")
        if self.kind is PenaltyKind.CAPPED_L1 and not param > 0:
            raise ValueError(f"capped-l1 requires a positive cap, got {param}")

    @property
    def param(self):
        """Resolved shape parameter (defaults filled in)."""
        if self.shape is not None:
            return self.shape
        if self.kind is PenaltyKind.GROUP_MCP:
            return DEFAULT_MCP_GAMMA
        if self.kind is PenaltyKind.GROUP_SCAD:
            return DEFAULT_SCAD_GAMMA
        if self.kind is PenaltyKind.CAPPED_L1:
            # cap defaults to the penalty level
            return self.lam if self.lam > 0 else 1.0
        return 1.0

    @property
    def code(self):
        return KIND_CODE[self.kind]

    @property
    def is_convex(self):
        return self.kind is PenaltyKind.GROUP_LASSO

    def with_lambda(self, lam):
        return replace(self, lam=lam)


@numba.njit(cache=True)
def scalar_penalty(t, kind, lam, shape):
    """Penalty applied to a single row norm ``t >= 0``."""
    if kind == 0:
        return lam * t
    if kind == 1:
        if t <= shape * lam:
            return lam * t - t * t / (2.0 * shape)
        return 0.5 * shape * lam * lam
    if kind == 2:
        if t <= lam:
            return lam * t
        if t <= shape * lam:
            return (2.0 * shape * lam * t - t * t - lam * lam) / (2.0 * (shape - 1.0))
        return 0.5 * lam * lam * (shape + 1.0)
    return lam * min(t, shape)


@numba.njit(cache=True)
def _row_objective(t, z, c, kind, lam, shape):
    return 0.5 * c * (t - z) * (t - z) + scalar_penalty(t, kind, lam, shape)


@numba.njit(cache=True)
def _clip(t, lo, hi):
    return min(max(t, lo), hi)


@numba.njit(cache=True)
def threshold_norm(z, c, kind, lam, shape):
    """Minimizer over ``t >= 0`` of ``c/2 (t - z)^2 + f(t)`` for ``z >= 0``.

    Returns -1.0 when the group MCP subproblem is ill-posed (``c * gamma <= 1``).
    """
    if lam == 0.0:
        return z
    if kind == 0:
        return max(z - lam / c, 0.0)
    if kind == 1:
        if c * shape <= 1.0:
            return -1.0
        if z >= shape * lam:
            return z
        if c * z <= lam:
            return 0.0
        return (c * z - lam) / (c - 1.0 / shape)
    # SCAD and capped-l1: piecewise quadratic, compare the piecewise minimizers
    best_t = 0.0
    best_f = _row_objective(0.0, z, c, kind, lam, shape)
    if kind == 2:
        lo1, hi1 = 0.0, lam
        lo2, hi2 = lam, shape * lam
        cands = np.empty(5)
        cands[0] = _clip(z - lam / c, lo1, hi1)
        curv = c - 1.0 / (shape - 1.0)
        if curv > 0.0:
            cands[1] = _clip((c * z * (shape - 1.0) - shape * lam) / (c * (shape - 1.0) - 1.0), lo2, hi2)
        else:
            cands[1] = lo2
        cands[2] = hi2
        cands[3] = max(z, hi2)
        cands[4] = lo2
    else:
        cands = np.empty(3)
        cands[0] = _clip(z - lam / c, 0.0, shape)
        cands[1] = max(z, shape)
        cands[2] = shape
    for i in range(cands.shape[0]):
        t = cands[i]
        f = _row_objective(t, z, c, kind, lam, shape)
        if f < best_f:
            best_f = f
            best_t = t
    return best_t


def penalty_value(b, spec):
    """Total penalty ``sum_j f(||b[j]||_2)`` of a coefficient matrix."""
    norms = row_norms(np.atleast_2d(b))
    return float(
        sum(scalar_penalty(float(t), spec.code, spec.lam, spec.param) for t in norms)
    )


def group_threshold(v, step_curvature, spec):
    """Exact minimizer of ``c/2 ||b - v||^2 + f(||b||)`` over vectors ``b``.

    Parameters
    ----------
    v : array_like, shape (r,)
    step_curvature : float
        The quadratic coefficient ``c > 0`` (``||X[:, j]||^2`` inside the
        coordinate-descent solver).
    spec : PenaltySpec

    Raises
    ------
    IllPosedRowProblem
        For group MCP when ``c * gamma <= 1``.
    """
    v = np.asarray(v, dtype=np.float64)
    if not step_curvature > 0:
        raise ValueError(f"step curvature must be positive, got {step_curvature}")
    z = float(np.linalg.norm(v))
    t = threshold_norm(z, float(step_curvature), spec.code, spec.lam, spec.param)
    if t < 0:
        raise IllPosedRowProblem(
            f"group MCP row subproblem is nonconvex: curvature {step_curvature} "
            f"* gamma {spec.param} <= 1"
        )
    if z == 0.0 or t == 0.0:
        return np.zeros_like(v)
    return v * (t / z)
