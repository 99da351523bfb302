"""Multifidelity POD: the reweighted covariance operator and its basis.

The operator combines high-fidelity snapshots with control-variate
corrections from cheaper models,

    C_mf = (1/m_0) S_0 S_0^T W
           + sum_ell alpha_ell [ (1/m_ell - 1/m_{ell-1}) S_ell S_ell^T
                                 + (1/m_ell) S_ell,+ S_ell,+^T ] W,

acting through the metric weight W.  Its raw eigenvalues estimate the
optimal mean squared projection errors but can be negative for small
sample sizes; nonpositive values are repaired mode by mode before the
energy criterion selects the reduced dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import Basis, Metric, _as_matrix, orthonormalize, validate_levels
from .solver import LinearAction, lowrank_eig

__all__ = [
    "MfOperator",
    "MfBasis",
    "build_operator",
    "correct_eigenvalue",
    "mfpod_fixed",
    "jmf_plus",
]

# Corrected eigenvalues below this fraction of the largest are truncated.
_PLUS_FLOOR = 1e-10


@dataclass(frozen=True)
class MfOperator:
    """Snapshot-block form of the multifidelity covariance operator."""

    sets: tuple
    alphas: tuple[float, ...]
    metric: Metric

    def __post_init__(self):
        sets = tuple(self.sets)
        alphas = tuple(float(a) for a in self.alphas)
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "alphas", alphas)
        validate_levels(sets)
        if len(alphas) != len(sets) - 1:
            raise ValueError("need one weight per lower-fidelity level")
        if not all(np.isfinite(alphas)):
            raise ValueError("weights must be finite")
        if sets[0].dim != self.metric.n:
            raise ValueError("snapshot dimension does not match the metric")

    @cached_property
    def blocks(self) -> tuple[tuple[float, np.ndarray], ...]:
        """(coefficient, columns) pairs so that C_mf = sum c S S^T W."""
        out = [(1.0 / self.sets[0].count, self.sets[0].shared)]
        for ell in range(1, len(self.sets)):
            a = self.alphas[ell - 1]
            m_prev = self.sets[ell - 1].count
            m = self.sets[ell].count
            out.append((a * (1.0 / m - 1.0 / m_prev), self.sets[ell].shared))
            out.append((a / m, self.sets[ell].extra))
        return tuple(out)

    @cached_property
    def _transformed_blocks(self) -> tuple[tuple[float, np.ndarray], ...]:
        return tuple((c, self.metric.to_coords(s)) for c, s in self.blocks)

    @property
    def dim(self) -> int:
        return self.metric.n

    @property
    def rank_bound(self) -> int:
        cols = sum(s.shape[1] for _, s in self.blocks)
        return min(self.dim, cols)

    def apply(self, x) -> np.ndarray:
        """C_mf x in original coordinates, for a vector or matrix."""
        wx = self.metric.apply(np.asarray(x, dtype=float))
        out = np.zeros_like(wx)
        for c, s in self.blocks:
            out += c * (s @ (s.T @ wx))
        return out

    def action(self) -> LinearAction:
        """The operator in metric coordinates, where it is plainly symmetric."""
        blocks = self._transformed_blocks

        def apply_block(x):
            out = np.zeros_like(x)
            for c, t in blocks:
                out += c * (t @ (t.T @ x))
            return out

        def apply(x):
            return apply_block(x[:, None])[:, 0]

        return LinearAction(self.dim, apply, self.rank_bound, apply_block=apply_block)

    def stacked(self, transformed: bool = True) -> np.ndarray:
        """All snapshot columns side by side; spans the operator range."""
        blocks = self._transformed_blocks if transformed else self.blocks
        return np.hstack([s for _, s in blocks])

    def assemble(self, cap: int = 4096) -> np.ndarray:
        """Dense sum c S S^T (apply the weight on the right for the full operator)."""
        if self.dim > cap:
            raise ValueError(f"dimension {self.dim} exceeds the dense cap {cap}")
        out = np.zeros((self.dim, self.dim))
        for c, s in self.blocks:
            out += c * (s @ s.T)
        return out

    def assemble_transformed(self, cap: int = 4096) -> np.ndarray:
        """Dense symmetric operator matrix in metric coordinates."""
        if self.dim > cap:
            raise ValueError(f"dimension {self.dim} exceeds the dense cap {cap}")
        out = np.zeros((self.dim, self.dim))
        for c, t in self._transformed_blocks:
            out += c * (t @ t.T)
        return out


def build_operator(sets, alphas, metric: Metric) -> MfOperator:
    """Validated multifidelity covariance operator for telescoping snapshot sets."""
    return MfOperator(tuple(sets), tuple(alphas), metric)


@dataclass(frozen=True)
class MfBasis:
    """Multifidelity POD modes with raw and corrected eigenvalues.

    Modes are ordered by corrected eigenvalue; ``selected_dim`` is the
    smallest r whose cumulative corrected energy reaches ``kappa``.
    """

    raw_eigvals: np.ndarray
    corrected_eigvals: np.ndarray
    vectors: np.ndarray
    metric: Metric
    selected_dim: int
    kappa: float
    correction_count: int
    perp_zero_count: int
    energy_fraction: float
    diagnostic: str | None = None

    def __post_init__(self):
        raw = np.asarray(self.raw_eigvals, dtype=float)
        plus = np.asarray(self.corrected_eigvals, dtype=float)
        vecs = _as_matrix(self.vectors) if np.asarray(self.vectors).size else np.zeros((self.metric.n, 0))
        object.__setattr__(self, "raw_eigvals", raw)
        object.__setattr__(self, "corrected_eigvals", plus)
        object.__setattr__(self, "vectors", vecs)
        if not (len(raw) == len(plus) == vecs.shape[1]):
            raise ValueError("eigenvalue arrays and vectors disagree in length")
        if (plus < 0).any():
            raise ValueError("corrected eigenvalues must be nonnegative")
        if not 0 <= self.selected_dim <= len(plus):
            raise ValueError("selected_dim out of range")
        Basis(vecs, self.metric).check(1e-9)

    @property
    def mode_count(self) -> int:
        return self.vectors.shape[1]

    @property
    def basis(self) -> Basis:
        """The selected r-dimensional subspace."""
        return Basis(self.vectors[:, : self.selected_dim], self.metric)

    @property
    def full_basis(self) -> Basis:
        return Basis(self.vectors, self.metric)

    def tail_energy(self, r: int | None = None) -> float:
        """sum_{j>r} lambda_j^+ of the retained modes."""
        r = self.selected_dim if r is None else r
        return float(self.corrected_eigvals[max(0, r):].sum())


def correct_eigenvalue(lam, v, s0, s_all, metric: Metric, tol: float = 1e-8,
                       span_basis: Basis | None = None) -> float:
    """Repaired eigenvalue: lam if positive, else 0 when v is orthogonal to
    every snapshot, else the Monte Carlo estimate (1/m_0) sum (u_0,i, v)^2.

    ``span_basis`` may carry a precomputed orthonormal basis of the
    snapshot span to skip the orthogonalization.
    """
    lam = float(lam)
    if lam > 0:
        return lam
    v = np.asarray(v, dtype=float)
    if span_basis is None:
        span_basis = orthonormalize(_as_matrix(s_all), metric)
    coeff = span_basis.vectors.T @ metric.apply(v)
    if float(np.linalg.norm(coeff)) <= tol:
        return 0.0
    s0 = _as_matrix(s0)
    proj0 = s0.T @ metric.apply(v)
    return float(proj0 @ proj0) / s0.shape[1]


def _correct_transformed(lam: float, y: np.ndarray, t0: np.ndarray,
                         span_q: np.ndarray, tol: float) -> tuple[float, str]:
    """Eigenvalue repair in metric coordinates; returns (value, branch)."""
    if lam > 0:
        return lam, "positive"
    if float(np.linalg.norm(span_q.T @ y)) <= tol:
        return 0.0, "orthogonal_zero"
    p = t0.T @ y
    return float(p @ p) / t0.shape[1], "mc_fallback"


def _finalize_basis(raw, plus, branches, y_vectors, metric, kappa,
                    diagnostic: str | None = None) -> MfBasis:
    """Order by corrected value, truncate, apply the energy criterion."""
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    raw = np.asarray(raw, dtype=float)
    plus = np.asarray(plus, dtype=float)
    correction_count = sum(b != "positive" for b in branches)
    perp_zero_count = sum(b == "orthogonal_zero" for b in branches)

    def empty(msg):
        return MfBasis(
            np.zeros(0), np.zeros(0), np.zeros((metric.n, 0)), metric,
            selected_dim=0, kappa=kappa, correction_count=correction_count,
            perp_zero_count=perp_zero_count, energy_fraction=0.0, diagnostic=msg,
        )

    if len(plus) == 0:
        return empty(diagnostic or "operator has no eigenvalues above tolerance")
    order = np.lexsort((-raw, -plus))
    raw, plus = raw[order], plus[order]
    y = y_vectors[:, order]
    top = plus[0]
    if top <= 0:
        return empty(diagnostic or "all corrected eigenvalues are zero")
    keep = plus > _PLUS_FLOOR * top
    raw, plus, y = raw[keep], plus[keep], y[:, keep]

    cum = np.cumsum(plus)
    total = cum[-1]
    r = int(np.searchsorted(cum, kappa * total) + 1)
    r = min(r, len(plus))
    vectors = metric.from_coords(y)
    return MfBasis(
        raw, plus, vectors, metric,
        selected_dim=r, kappa=kappa, correction_count=correction_count,
        perp_zero_count=perp_zero_count, energy_fraction=float(cum[r - 1] / total),
        diagnostic=diagnostic,
    )


def mfpod_fixed(sets, alphas, kappa: float, metric: Metric,
                eig_tol: float = 1e-10, method: str = "project") -> MfBasis:
    """Multifidelity POD basis for fixed control-variate weights.

    Solves the operator eigenproblem restricted to the snapshot span,
    repairs nonpositive eigenvalues, orders modes by corrected value, and
    selects the smallest dimension reaching the ``kappa`` energy fraction.

    Parameters
    ----------
    sets : sequence of SnapshotSet
        Telescoping snapshot hierarchy (level 0 is high fidelity).
    alphas : sequence of float
        One weight per lower-fidelity level.
    kappa : float
        Energy fraction in (0, 1] for the dimension selection.
    metric : Metric
        Inner product of the ambient space.
    eig_tol : float
        Relative floor below which raw eigenvalues count as zero.
    method : str
        Eigensolver path, "project" (exact) or "lanczos".
    """
    op = build_operator(sets, alphas, metric)
    stacked = op.stacked(transformed=True)
    pairs = lowrank_eig(op.action(), stacked, want=op.rank_bound, tol=eig_tol, method=method)
    if pairs.count == 0:
        return _finalize_basis(
            np.zeros(0), np.zeros(0), [], np.zeros((metric.n, 0)), metric, kappa,
            diagnostic="operator is numerically zero",
        )
    t0 = op._transformed_blocks[0][1]
    span_q = None
    raw = pairs.values
    plus = np.empty_like(raw)
    branches = []
    for j, lam in enumerate(raw):
        if lam > 0:
            plus[j], branch = float(lam), "positive"
        else:
            if span_q is None:
                span_q = orthonormalize(stacked, Metric.euclidean(metric.n)).vectors
            plus[j], branch = _correct_transformed(float(lam), pairs.vectors[:, j], t0, span_q, 1e-8)
        branches.append(branch)
    return _finalize_basis(raw, plus, branches, pairs.vectors, metric, kappa)


def jmf_plus(mf: MfBasis, candidate: Basis) -> float:
    """Adjusted multifidelity error estimate of a candidate subspace.

    sum_j lambda_j^+ (1 - ||proj_V v_j||^2) over the retained modes;
    nonnegative by construction, and equal to the corrected tail energy
    when the candidate is the leading block of the modes themselves.
    """
    if mf.mode_count == 0:
        return 0.0
    if candidate.dim == 0:
        return float(mf.corrected_eigvals.sum())
    coeff = candidate.vectors.T @ mf.metric.apply(mf.vectors)
    captured = np.einsum("ij,ij->j", coeff, coeff)
    return float(np.sum(mf.corrected_eigvals * np.maximum(0.0, 1.0 - captured)))
