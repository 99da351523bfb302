"""Greedy multifidelity POD with per-mode weight adaptation.

The control-variate weight that minimizes the estimator variance depends
on the basis the estimator is evaluated at, so the fixed-weight pipeline
is slightly mismatched for every dimension but one.  This module rebuilds
the operator with the weight re-estimated at the current basis, extracts
one dominant eigenvector at a time (deflating what was already found),
and stops once the high-fidelity snapshots are reproduced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import Basis, Metric, orthonormalize, validate_levels
from .estimator import estimate_profile, optimal_alpha
from .mfpod import MfBasis, _correct_transformed, _finalize_basis

__all__ = ["AdaptiveStep", "AdaptiveTrace", "adaptive_weight", "mfpod_adaptive"]


@dataclass(frozen=True)
class AdaptiveStep:
    """One extraction: the weight used, the eigenpair found, the residual left."""

    index: int
    alpha: float
    raw_eigval: float
    corrected_eigval: float
    residual: float
    corrected: bool


@dataclass(frozen=True)
class AdaptiveTrace:
    steps: tuple[AdaptiveStep, ...]
    termination: str

    @property
    def alphas(self) -> tuple[float, ...]:
        return tuple(s.alpha for s in self.steps)

    @property
    def residuals(self) -> tuple[float, ...]:
        return tuple(s.residual for s in self.steps)


def adaptive_weight(basis: Basis, sets) -> float:
    """Variance-optimal weight for the residual energies at the given basis.

    Two-level only; delegates to the estimator's sample moments so the
    number here is exactly what the fixed-weight machinery would use.
    """
    validate_levels(sets)
    if len(sets) != 2:
        raise ValueError("adaptive weighting handles exactly two fidelity levels")
    return optimal_alpha(estimate_profile(basis, sets))[0]


def mfpod_adaptive(sets, kappa: float, metric: Metric,
                   residual_tol: float = 1e-10,
                   stagnation_tol: float = 1e-14) -> tuple[MfBasis, AdaptiveTrace]:
    """Multifidelity POD with the weight re-estimated before every mode.

    Parameters
    ----------
    sets : sequence of SnapshotSet
        Exactly two levels (high fidelity and one surrogate).
    kappa : float
        Energy fraction in (0, 1] for the final dimension selection.
    metric : Metric
        Inner product of the ambient space.
    residual_tol : float
        Stop once the high-fidelity snapshots are captured to this
        fraction of their combined norm.
    stagnation_tol : float
        Terminate with a diagnostic when a mode fails to decrease the
        high-fidelity residual by more than this relative amount.

    Returns
    -------
    (MfBasis, AdaptiveTrace)
        Modes reordered by corrected eigenvalue with the energy criterion
        applied, plus the per-iteration extraction record.
    """
    validate_levels(sets)
    if len(sets) != 2:
        raise ValueError("the adaptive loop handles exactly two fidelity levels")
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    m0, m1 = sets[0].count, sets[1].count

    t0 = metric.to_coords(sets[0].shared)
    t1_shared = metric.to_coords(sets[1].shared)
    t1_extra = metric.to_coords(sets[1].extra)
    span = orthonormalize(np.hstack([t0, t1_shared, t1_extra]), Metric.euclidean(metric.n))
    q = span.vectors
    rank = span.dim

    # Everything below runs in the fixed snapshot-span coordinates: the
    # operator is B(alpha) = B_hf + alpha * B_corr, a small dense matrix.
    p0 = q.T @ t0
    p1s = q.T @ t1_shared
    p1e = q.T @ t1_extra
    b_hf = p0 @ p0.T / m0
    b_corr = (1.0 / m1 - 1.0 / m0) * (p1s @ p1s.T) + (p1e @ p1e.T) / m1

    norm0 = float(np.linalg.norm(p0))
    z = np.zeros((rank, 0))
    raw, plus, branches, steps = [], [], [], []

    def residual_norm(zmat):
        resid = p0 - zmat @ (zmat.T @ p0)
        return float(np.linalg.norm(resid))

    def finalize(termination, diagnostic=None):
        y = q @ z
        basis = _finalize_basis(
            np.array(raw), np.array(plus), branches, y, metric, kappa,
            diagnostic=diagnostic,
        )
        return basis, AdaptiveTrace(tuple(steps), termination)

    if norm0 == 0.0:
        return finalize("residual", diagnostic="high-fidelity snapshots are all zero")

    resid = norm0
    while True:
        if resid <= residual_tol * norm0:
            return finalize("residual")
        if z.shape[1] >= rank:
            return finalize("rank")
        current = Basis(metric.from_coords(q @ z), metric)
        alpha = adaptive_weight(current, sets)
        b = b_hf + alpha * b_corr
        if z.shape[1]:
            b = b - z @ (z.T @ b)
            b = b - (b @ z) @ z.T
        b = (b + b.T) * 0.5
        vals, vecs = scipy.linalg.eigh(b)
        j = int(np.abs(vals).argmax())
        lam = float(vals[j])
        if abs(lam) <= 1e-14 * max(float(np.abs(b_hf + alpha * b_corr).max()), 1e-300):
            return finalize("exhausted",
                            diagnostic="deflated operator has no remaining eigenvalues")
        zj = vecs[:, j]
        if z.shape[1]:
            zj = zj - z @ (z.T @ zj)
            zj = zj / np.linalg.norm(zj)
        lam_plus, branch = _correct_transformed(lam, q @ zj, t0, q, 1e-8)
        z = np.hstack([z, zj[:, None]])
        new_resid = residual_norm(z)
        raw.append(lam)
        plus.append(lam_plus)
        branches.append(branch)
        steps.append(AdaptiveStep(
            index=len(steps) + 1, alpha=float(alpha), raw_eigval=lam,
            corrected_eigval=float(lam_plus), residual=new_resid,
            corrected=branch != "positive",
        ))
        if resid - new_resid <= stagnation_tol * norm0:
            return finalize("stagnation",
                            diagnostic="mode failed to reduce the high-fidelity residual")
        resid = new_resid
