"""Symmetric eigensolvers for low-rank matrix-free operators.

Everything here is plain Euclidean: weighted problems are transformed
upstream through the metric factor, so the operators arriving in this
module are symmetric in the ordinary sense.  The default path projects the
action onto an orthonormal basis of a block that spans the operator range
and solves the small dense problem, which is exact for low-rank actions.
A block Lanczos iteration with full reorthogonalization is available
behind ``method="lanczos"``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .core import Metric, _as_matrix, orthonormalize

__all__ = [
    "LinearAction",
    "EigenPairs",
    "EigensolverError",
    "dense_symmetric_eig",
    "lowrank_eig",
]


@dataclass(frozen=True)
class LinearAction:
    """Matrix-free symmetric operator on R^dim.

    ``apply`` maps a vector to a vector; ``apply_block``, when provided,
    maps a matrix of column vectors in one call and must agree with
    column-by-column application.  ``rank_bound`` is an upper bound on the
    operator rank that the solver may trust.
    """

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]
    rank_bound: int
    apply_block: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("operator dimension must be positive")
        if not 0 <= self.rank_bound <= self.dim:
            raise ValueError("rank_bound must lie in [0, dim]")

    def on_block(self, x: np.ndarray) -> np.ndarray:
        if self.apply_block is not None:
            return self.apply_block(x)
        out = np.empty_like(x)
        for j in range(x.shape[1]):
            out[:, j] = self.apply(x[:, j])
        return out


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues in descending signed order with orthonormal vectors."""

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray

    @property
    def count(self) -> int:
        return len(self.values)


class EigensolverError(RuntimeError):
    """Iteration failed to converge; carries the best residuals seen."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = np.asarray(residuals) if residuals is not None else np.array([])


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    if vectors.shape[1] == 0:
        return vectors
    lead = vectors[np.abs(vectors).argmax(axis=0), np.arange(vectors.shape[1])]
    return np.where((lead < 0)[None, :], -vectors, vectors)


def dense_symmetric_eig(a, cap: int = 4096) -> EigenPairs:
    """Full eigendecomposition of a dense symmetric matrix.

    Rejects matrices larger than ``cap`` and asymmetry beyond 1e-10
    relative in Frobenius norm.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > cap:
        raise ValueError(f"matrix size {a.shape[0]} exceeds the dense cap {cap}")
    scale = np.linalg.norm(a)
    if scale > 0 and np.linalg.norm(a - a.T) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric within 1e-10 relative")
    a = (a + a.T) * 0.5
    vals, vecs = scipy.linalg.eigh(a)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = _fix_signs(vecs[:, order])
    resid = np.linalg.norm(a @ vecs - vecs * vals[None, :], axis=0)
    return EigenPairs(vals, vecs, resid)


def _empty(n: int) -> EigenPairs:
    return EigenPairs(np.zeros(0), np.zeros((n, 0)), np.zeros(0))


def _select(vals, vecs, av, want, tol) -> EigenPairs:
    """Top `want` by magnitude, filtered at tol*|lambda|_max, signed order."""
    if len(vals) == 0:
        return _empty(vecs.shape[0])
    by_mag = np.argsort(-np.abs(vals), kind="stable")[:want]
    lam_max = float(np.abs(vals[by_mag[0]]))
    keep = by_mag[np.abs(vals[by_mag]) > tol * lam_max]
    if len(keep) == 0:
        return _empty(vecs.shape[0])
    keep = keep[np.argsort(-vals[keep], kind="stable")]
    v = vecs[:, keep]
    w = av[:, keep]
    lead = v[np.abs(v).argmax(axis=0), np.arange(v.shape[1])]
    flip = (lead < 0)[None, :]
    v = np.where(flip, -v, v)
    w = np.where(flip, -w, w)
    resid = np.linalg.norm(w - v * vals[keep][None, :], axis=0)
    return EigenPairs(vals[keep].copy(), v, resid)


def lowrank_eig(
    action: LinearAction,
    init_block,
    want: int,
    tol: float = 1e-10,
    max_iter: int = 200,
    method: str = "project",
) -> EigenPairs:
    """Eigenpairs of a low-rank symmetric action, both signs captured.

    Parameters
    ----------
    action : LinearAction
        Symmetric operator whose range lies in the span of ``init_block``.
    init_block : (dim, k) array
        Columns spanning (at least) the operator range, e.g. the stacked
        snapshot matrix that generated the action.
    want : int
        Number of eigenpairs requested, at most ``action.rank_bound``.
    tol : float
        Eigenvalues with |lambda| <= tol * |lambda|_max are treated as zero
        and dropped.
    max_iter : int
        Lanczos sweep limit; ignored by the projection method.
    method : str
        "project" solves the dense problem restricted to span(init_block),
        exact for low-rank actions; "lanczos" runs block Lanczos with full
        reorthogonalization.

    Returns
    -------
    EigenPairs
        All surviving eigenpairs among the top ``want`` by magnitude, in
        descending signed order.
    """
    block = _as_matrix(init_block)
    if block.shape[0] != action.dim:
        raise ValueError("init_block dimension does not match the action")
    if want < 1:
        raise ValueError("want must be at least 1")
    if want > action.rank_bound:
        raise ValueError(f"want={want} exceeds rank_bound={action.rank_bound}")
    if method == "project":
        return _projected_eig(action, block, want, tol)
    if method == "lanczos":
        return _block_lanczos(action, block, want, tol, max_iter)
    raise ValueError(f"unknown method {method!r}")


def _projected_eig(action, block, want, tol) -> EigenPairs:
    q = orthonormalize(block, Metric.euclidean(action.dim)).vectors
    if q.shape[1] == 0:
        return _empty(action.dim)
    aq = action.on_block(q)
    small = q.T @ aq
    small = (small + small.T) * 0.5
    vals, y = scipy.linalg.eigh(small)
    vecs = q @ y
    av = aq @ y  # A(Qy) = (AQ)y, no second operator pass needed
    return _select(vals, vecs, av, want, tol)


def _block_lanczos(action, block, want, tol, max_iter) -> EigenPairs:
    n = action.dim
    euclid = Metric.euclidean(n)
    width = max(1, min(want, 32, block.shape[1]))
    # A fixed random mix of the spanning block avoids starting blocks that
    # are accidentally orthogonal to part of the spectrum.
    mix = np.random.default_rng(0).standard_normal((block.shape[1], width))
    q = orthonormalize(block @ mix, euclid).vectors
    if q.shape[1] == 0:
        q = orthonormalize(block[:, :width], euclid).vectors
    if q.shape[1] == 0:
        return _empty(n)
    basis = q
    last = q
    best_resid = None
    for _ in range(max_iter):
        ab = action.on_block(basis)
        small = basis.T @ ab
        small = (small + small.T) * 0.5
        vals, y = scipy.linalg.eigh(small)
        vecs = basis @ y
        av = ab @ y
        resid = np.linalg.norm(av - vecs * vals[None, :], axis=0)
        lam_max = float(np.abs(vals).max())
        take = min(want, action.rank_bound, len(vals))
        top = np.argsort(-np.abs(vals), kind="stable")[:take]
        live = top[np.abs(vals[top]) > tol * lam_max] if lam_max > 0 else top[:0]
        best_resid = resid[live] if len(live) else resid[:0]
        conv_tol = max(tol * lam_max, 1e-14 * max(lam_max, 1.0))
        if lam_max == 0.0 or (len(live) and (resid[live] <= conv_tol).all()):
            return _select(vals, vecs, av, want, tol)
        # Expand the Krylov space by one block, reorthogonalized against
        # everything kept so far; an empty expansion means the invariant
        # subspace is exhausted and the projection is already exact.
        cand = action.on_block(last)
        for _ in range(2):
            cand = cand - basis @ (basis.T @ cand)
        fresh = orthonormalize(cand, euclid).vectors
        if fresh.shape[1] == 0:
            return _select(vals, vecs, av, want, tol)
        basis = np.hstack([basis, fresh])
        last = fresh
    raise EigensolverError(
        f"block Lanczos did not converge within {max_iter} sweeps",
        residuals=best_resid,
    )
