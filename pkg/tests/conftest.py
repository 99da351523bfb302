"""Shared helpers: random weighted metrics, two-level instances, dense oracles.

The dense oracle assembles the multifidelity operator explicitly with plain
numpy/scipy and eigensolves it in Cholesky-transformed coordinates, entirely
independent of the package's low-rank path.
"""

import numpy as np
import scipy.linalg

from mfpod import Metric, SnapshotSet


def random_spd_metric(rng: np.random.Generator, n: int) -> Metric:
    """Well-conditioned random SPD weight matrix wrapped as a Metric."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = np.exp(rng.uniform(-0.7, 1.1, size=n))
    return Metric.from_weight((q * d) @ q.T)


def random_instance(rng: np.random.Generator, n: int, m0: int, m1: int,
                    metric: Metric, scale: float = 1.0):
    """Two-level snapshot sets with correlated levels and shared samples."""
    base = rng.standard_normal((n, m1)) * scale
    hf = base[:, :m0] + 0.1 * rng.standard_normal((n, m0)) * scale
    lf = base + 0.3 * rng.standard_normal((n, m1)) * scale
    ids = tuple(range(m1))
    return (
        SnapshotSet(0, hf, np.zeros((n, 0)), ids[:m0], 1.0),
        SnapshotSet(1, lf[:, :m0], lf[:, m0:], ids, 0.125),
    )


def assemble_mf_matrix(sets, alpha: float) -> np.ndarray:
    """Explicit sum-of-outer-products form of the two-level operator."""
    s0 = sets[0].shared
    s1s, s1e = sets[1].shared, sets[1].extra
    m0, m1 = sets[0].count, sets[1].count
    c = (1.0 / m0) * (s0 @ s0.T)
    c += alpha * (1.0 / m1 - 1.0 / m0) * (s1s @ s1s.T)
    c += (alpha / m1) * (s1e @ s1e.T)
    return c


def dense_mf_oracle(sets, alpha: float, metric: Metric, drop_tol: float = 1e-12):
    """Signed-descending nonzero eigenpairs of the explicit operator.

    Eigenvectors are returned metric-orthonormal, in original coordinates.
    """
    n = sets[0].dim
    c = assemble_mf_matrix(sets, alpha)
    w = metric.weight if metric.weight is not None else np.eye(n)
    w = np.asarray(w.todense()) if hasattr(w, "todense") else np.asarray(w)
    f = np.linalg.cholesky(w)
    sym = f.T @ c @ f
    vals, vecs = scipy.linalg.eigh((sym + sym.T) / 2.0)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    top = np.abs(vals).max() if len(vals) else 0.0
    keep = np.abs(vals) > drop_tol * top
    vecs = scipy.linalg.solve_triangular(f.T, vecs[:, keep], lower=False)
    return vals[keep], vecs
