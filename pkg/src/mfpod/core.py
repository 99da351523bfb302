"""Inner-product geometry and snapshot containers shared by every module.

All vectors live in R^n equipped with an inner product (u, v) = u^T W v for
a symmetric positive definite weight W (W = I for the Euclidean case).  The
lower-triangular factor F with F F^T = W maps metric geometry to Euclidean
geometry through y = F^T x; downstream eigensolves always run on the
transformed, plainly symmetric side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

__all__ = [
    "Metric",
    "SnapshotSet",
    "Basis",
    "inner",
    "norm",
    "project",
    "orthonormalize",
    "validate_levels",
]

# Sparse weights wider than this band are densified before factorization.
_MAX_BANDWIDTH = 16


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"expected vector or matrix, got ndim={a.ndim}")
    return a


class Metric:
    """Inner product (u, v) = u^T W v with symmetric positive definite W.

    Parameters come in through the constructors :meth:`euclidean` and
    :meth:`from_weight`; the latter accepts a dense array or any
    scipy.sparse matrix.  Narrow-banded sparse weights (1D finite element
    mass matrices in particular) keep a banded Cholesky factor so that
    coordinate transforms cost O(n) per vector.
    """

    def __init__(self, n: int, weight=None):
        if n < 1:
            raise ValueError("metric dimension must be positive")
        self.n = int(n)
        self.kind = "euclidean" if weight is None else "weighted"
        self._weight = weight
        self._factor = None
        self._factor_dense = None
        self._ft_bands = None  # F^T in solve_banded layout
        self._bandwidth = 0
        if weight is not None:
            self._factorize(weight)

    @classmethod
    def euclidean(cls, n: int) -> "Metric":
        return cls(n, None)

    @classmethod
    def from_weight(cls, weight) -> "Metric":
        if scipy.sparse.issparse(weight):
            w = weight.tocsr().astype(float)
        else:
            w = np.asarray(weight, dtype=float)
            if w.ndim != 2:
                raise ValueError("weight must be a matrix")
        if w.shape[0] != w.shape[1]:
            raise ValueError(f"weight must be square, got {w.shape}")
        asym = _fro_norm(w - w.T)
        scale = _fro_norm(w)
        if scale == 0.0 or asym > 1e-12 * scale:
            raise ValueError("weight matrix is not symmetric within 1e-12 relative")
        w = (w + w.T) * 0.5  # kill representation-level asymmetry exactly
        return cls(w.shape[0], w)

    def _factorize(self, w) -> None:
        if scipy.sparse.issparse(w):
            coo = w.tocoo()
            bw = int(np.abs(coo.row - coo.col).max()) if coo.nnz else 0
            if bw <= _MAX_BANDWIDTH:
                self._factorize_banded(w, bw)
                return
            w = w.toarray()
            self._weight = w
        try:
            f = scipy.linalg.cholesky(w, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise ValueError("weight matrix is not positive definite") from exc
        self._factor_dense = f

    def _factorize_banded(self, w, bw: int) -> None:
        n = self.n
        ab = np.zeros((bw + 1, n))
        for d in range(bw + 1):
            ab[d, : n - d] = w.diagonal(-d)
        try:
            fb = scipy.linalg.cholesky_banded(ab, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise ValueError("weight matrix is not positive definite") from exc
        self._bandwidth = bw
        self._factor = scipy.sparse.diags(
            [fb[d, : n - d] for d in range(bw + 1)],
            offsets=[-d for d in range(bw + 1)],
            format="csr",
        )
        # F^T is upper banded with u = bw; lay it out for solve_banded.
        ft = np.zeros_like(fb)
        for d in range(bw + 1):
            ft[bw - d, d:] = fb[d, : n - d]
        self._ft_bands = ft

    @property
    def weight(self):
        """Weight matrix W, or None for the Euclidean metric."""
        return self._weight

    @property
    def factor(self):
        """Lower-triangular F with F F^T = W, or None for the Euclidean metric."""
        if self.kind == "euclidean":
            return None
        if self._factor_dense is not None:
            return self._factor_dense
        return self._factor

    def apply(self, x) -> np.ndarray:
        """W @ x for a vector or a matrix of column vectors."""
        if self.kind == "euclidean":
            return np.asarray(x, dtype=float)
        out = self._weight @ x
        return np.asarray(out)

    def inner(self, u, v) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ self.apply(v))

    def norms_sq(self, x) -> np.ndarray:
        """Columnwise squared norms u^T W u, clipped at zero against roundoff."""
        a = _as_matrix(x)
        out = np.einsum("ij,ij->j", a, self.apply(a))
        return np.maximum(out, 0.0)

    def norm(self, u) -> float:
        return float(np.sqrt(self.norms_sq(u)[0]))

    def to_coords(self, x) -> np.ndarray:
        """y = F^T x, the Euclidean coordinates of x."""
        if self.kind == "euclidean":
            return np.asarray(x, dtype=float)
        if self._factor_dense is not None:
            return self._factor_dense.T @ x
        return np.asarray(self._factor.T @ x)

    def from_coords(self, y) -> np.ndarray:
        """Solve F^T x = y, mapping Euclidean coordinates back."""
        if self.kind == "euclidean":
            return np.asarray(y, dtype=float)
        if self._factor_dense is not None:
            return scipy.linalg.solve_triangular(self._factor_dense.T, y, lower=False)
        return scipy.linalg.solve_banded((0, self._bandwidth), self._ft_bands, y)

    def __repr__(self) -> str:
        return f"Metric(kind={self.kind!r}, n={self.n})"


def _fro_norm(a) -> float:
    if scipy.sparse.issparse(a):
        return float(np.sqrt(a.multiply(a).sum()))
    return float(np.linalg.norm(a))


@dataclass(frozen=True)
class SnapshotSet:
    """Snapshots of one fidelity level, split into shared and extra columns.

    Level 0 keeps all of its columns in ``shared``.  For level ell >= 1 the
    ``shared`` block holds the columns evaluated at the previous level's
    parameter samples (all of them, in the same order) and ``extra`` holds
    the additional samples unique to this level.
    """

    level: int
    shared: np.ndarray
    extra: np.ndarray
    sample_ids: tuple[int, ...]
    cost_per_sample: float

    def __post_init__(self):
        shared = _as_matrix(self.shared)
        extra = _as_matrix(self.extra) if np.asarray(self.extra).size else np.zeros((shared.shape[0], 0))
        object.__setattr__(self, "shared", shared)
        object.__setattr__(self, "extra", extra)
        object.__setattr__(self, "sample_ids", tuple(int(i) for i in self.sample_ids))
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        if extra.shape[0] != shared.shape[0]:
            raise ValueError("shared and extra blocks must have the same row count")
        if self.level == 0 and extra.shape[1] != 0:
            raise ValueError("level 0 carries no extra block")
        if len(self.sample_ids) != shared.shape[1] + extra.shape[1]:
            raise ValueError("sample_ids length must match the column count")
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ValueError("sample_ids must be distinct")
        if not (self.cost_per_sample > 0 and np.isfinite(self.cost_per_sample)):
            raise ValueError("cost_per_sample must be positive and finite")
        if not (np.isfinite(shared).all() and np.isfinite(extra).all()):
            raise ValueError("snapshot entries must be finite")

    @classmethod
    def from_columns(cls, level, columns, n_shared, sample_ids, cost_per_sample):
        cols = _as_matrix(columns)
        return cls(level, cols[:, :n_shared], cols[:, n_shared:], tuple(sample_ids), cost_per_sample)

    @property
    def dim(self) -> int:
        return self.shared.shape[0]

    @property
    def count(self) -> int:
        return self.shared.shape[1] + self.extra.shape[1]

    @property
    def columns(self) -> np.ndarray:
        """All snapshots of this level, shared columns first."""
        if self.extra.shape[1] == 0:
            return self.shared
        return np.hstack([self.shared, self.extra])


def validate_levels(sets) -> None:
    """Check the cross-level contract of a telescoping snapshot hierarchy.

    Raises ValueError on level numbering gaps, non-increasing sample counts,
    cost ordering violations, dimension mismatches, or broken sample sharing
    (level ell must reuse every sample of level ell-1, in order, as its
    shared block).
    """
    if not sets:
        raise ValueError("need at least one snapshot level")
    for ell, s in enumerate(sets):
        if s.level != ell:
            raise ValueError(f"levels must be numbered 0..L in order, got {s.level} at position {ell}")
        if s.dim != sets[0].dim:
            raise ValueError("all levels must share the ambient dimension")
    counts = [s.count for s in sets]
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError(f"sample counts must increase strictly across levels, got {counts}")
    costs = [s.cost_per_sample for s in sets]
    if len(costs) > 1 and costs[0] <= costs[1]:
        raise ValueError("level 0 must be strictly more expensive than level 1")
    if any(b > a for a, b in zip(costs[1:], costs[2:])):
        raise ValueError(f"costs must be non-increasing across lower fidelities, got {costs}")
    for prev, cur in zip(sets, sets[1:]):
        if cur.shared.shape[1] != prev.count:
            raise ValueError(
                f"level {cur.level} shared block has {cur.shared.shape[1]} columns, "
                f"expected {prev.count} from level {prev.level}"
            )
        if cur.sample_ids[: prev.count] != prev.sample_ids:
            raise ValueError(f"level {cur.level} does not share level {prev.level}'s samples in order")


@dataclass(frozen=True)
class Basis:
    """Metric-orthonormal column vectors spanning a subspace."""

    vectors: np.ndarray
    metric: Metric

    def __post_init__(self):
        v = _as_matrix(self.vectors)
        object.__setattr__(self, "vectors", v)
        if v.shape[0] != self.metric.n:
            raise ValueError(f"vectors live in R^{v.shape[0]} but metric has n={self.metric.n}")

    @classmethod
    def empty(cls, metric: Metric) -> "Basis":
        return cls(np.zeros((metric.n, 0)), metric)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def orthonormality_defect(self) -> float:
        """max |V^T W V - I|, zero for an exactly orthonormal basis."""
        if self.dim == 0:
            return 0.0
        g = self.vectors.T @ self.metric.apply(self.vectors)
        return float(np.abs(g - np.eye(self.dim)).max())

    def check(self, tol: float = 1e-9) -> "Basis":
        defect = self.orthonormality_defect()
        if defect > tol:
            raise ValueError(f"basis orthonormality defect {defect:.3e} exceeds {tol:.1e}")
        return self

    def truncated(self, r: int) -> "Basis":
        return Basis(self.vectors[:, : max(0, r)], self.metric)


def inner(u, v, metric: Metric) -> float:
    """(u, v) in the metric."""
    return metric.inner(u, v)


def norm(u, metric: Metric) -> float:
    return metric.norm(u)


def project(basis: Basis, u) -> np.ndarray:
    """Orthogonal projection of u (vector or columns) onto span(basis)."""
    a = np.asarray(u, dtype=float)
    if basis.dim == 0:
        return np.zeros_like(a)
    coeff = basis.vectors.T @ basis.metric.apply(a)
    return basis.vectors @ coeff


def orthonormalize(vectors, metric: Metric, tol: float = 1e-12) -> Basis:
    """Metric-orthonormal basis of span(vectors) by modified Gram-Schmidt.

    One reorthogonalization pass restores orthogonality lost to cancellation.
    Columns whose residual norm falls to tol times the largest input column
    norm are treated as dependent and dropped, so the result's dimension is
    the numerical rank of the input.
    """
    v = _as_matrix(vectors)
    n, k = v.shape
    if n != metric.n:
        raise ValueError(f"vectors live in R^{n} but metric has n={metric.n}")
    scale = float(np.sqrt(metric.norms_sq(v).max())) if k else 0.0
    q = np.empty((n, k))
    kept = 0
    for j in range(k):
        w = v[:, j].copy()
        for _ in range(2):
            if kept:
                w -= q[:, :kept] @ (q[:, :kept].T @ metric.apply(w))
        nw = metric.norm(w)
        if nw > tol * scale:
            q[:, kept] = w / nw
            kept += 1
    return Basis(q[:, :kept].copy(), metric).check(1e-9)
