"""Dense linear-algebra helpers: validated matrices, thin SVD, projections,
Schatten norms and sparse Riesz constants.

Matrices are plain ``numpy.ndarray`` objects of shape ``(rows, cols)``;
:func:`as_matrix` is the single entry point that enforces the finiteness
invariant.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

#: relative singular-value cutoff used for numerical rank decisions
RANK_RTOL = 1e-12

#: maximum number of column subsets enumerated by sparse_riesz_constants
RIESZ_SUBSET_CAP = 10**6


class NonFiniteError(ValueError):
    """Raised when a matrix contains NaN or infinite entries."""


def as_matrix(a, name="matrix"):
    """Return ``a`` as a 2-D float64 array, rejecting non-finite entries.

    One-dimensional input is treated as a single column.
    """
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class ThinSvd:
    """Leading ``k`` singular triples ``m ~= u @ diag(s) @ v.T``."""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    @property
    def k(self):
        return self.singular_values.shape[0]

    def reconstruct(self):
        return (self.u * self.singular_values) @ self.v.T


def _fix_signs(u, v):
    # make the largest-magnitude entry of each right singular vector positive
    if v.shape[1] == 0:
        return u, v
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, v * signs


def thin_svd(m, k=None):
    """Leading ``k`` singular triples of ``m``.

    Parameters
    ----------
    m : array_like, shape (n, q)
    k : int, optional
        Number of triples, ``1 <= k <= min(n, q)``. Defaults to ``min(n, q)``.

    Returns
    -------
    ThinSvd
        Singular values are nonincreasing; each right singular vector is
        signed so that its largest-magnitude entry is positive.
    """
    m = as_matrix(m)
    kmax = min(m.shape)
    if k is None:
        k = kmax
    if not 1 <= k <= kmax:
        raise ValueError(f"k must be in [1, {kmax}], got {k}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    u, v = _fix_signs(u[:, :k], vt[:k].T)
    return ThinSvd(u=u, singular_values=s[:k].copy(), v=v)


def singular_values(m):
    """All singular values of ``m`` in nonincreasing order."""
    return np.linalg.svd(as_matrix(m), compute_uv=False)


def numerical_rank(m, rtol=RANK_RTOL):
    s = singular_values(m)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def schatten_norm_sq(m, q):
    """Squared Schatten-``q`` norm ``(sum_i s_i**q)**(2/q)`` for ``q`` in [1, 2]."""
    if not 1.0 <= q <= 2.0:
        raise ValueError(f"q must lie in [1, 2], got {q}")
    s = singular_values(m)
    if q == 2.0:
        return float(np.sum(s**2))
    return float(np.sum(s**q) ** (2.0 / q))


def operator_norm(m):
    """Largest singular value of ``m``."""
    s = singular_values(m)
    return float(s[0]) if s.size else 0.0


def projection_onto_column_space(x, rtol=RANK_RTOL):
    """Orthogonal projector onto the column space of ``x``.

    Equal to ``x @ pinv(x.T @ x) @ x.T``; computed from the left singular
    vectors whose singular values exceed ``rtol * s_max``.
    """
    x = as_matrix(x, "x")
    u, s, _ = np.linalg.svd(x, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("x must be nonzero")
    basis = u[:, s > rtol * s[0]]
    return basis @ basis.T


def column_space_basis(x, rtol=RANK_RTOL):
    """Orthonormal basis of the column space of ``x``."""
    x = as_matrix(x, "x")
    u, s, _ = np.linalg.svd(x, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("x must be nonzero")
    return u[:, s > rtol * s[0]]


def sparse_riesz_constants(x, k, cap=RIESZ_SUBSET_CAP):
    """Exhaustive ``k``-sparse Riesz constants of the design ``x``.

    Returns ``(kappa_minus_sq, kappa_plus_sq)``: the smallest and largest
    eigenvalue of ``x[:, B].T @ x[:, B]`` over all column subsets ``B`` of
    size ``k``.

    Raises
    ------
    ValueError
        If ``k`` is out of range or the number of subsets exceeds ``cap``.
    """
    x = as_matrix(x, "x")
    p = x.shape[1]
    if not 1 <= k <= p:
        raise ValueError(f"k must be in [1, {p}], got {k}")
    n_subsets = comb(p, k)
    if n_subsets > cap:
        raise ValueError(
            f"C({p}, {k}) = {n_subsets} column subsets exceeds the cap of {cap}"
        )
    lo, hi = np.inf, -np.inf
    for subset in combinations(range(p), k):
        xb = x[:, list(subset)]
        ev = np.linalg.eigvalsh(xb.T @ xb)
        lo = min(lo, ev[0])
        hi = max(hi, ev[-1])
    return float(lo), float(hi)


def row_norms(b):
    return np.sqrt(np.sum(np.asarray(b) ** 2, axis=1))


def row_support(b):
    """Indices of the nonzero rows of ``b``."""
    return np.flatnonzero(np.any(np.asarray(b) != 0.0, axis=1))
