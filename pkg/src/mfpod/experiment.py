"""Budgeted basis studies with deterministic reports and snapshot files.

A study repeats the full pipeline (draw parameters, solve models, build a
basis, score it against a fixed reference snapshot set) under a
computational budget expressed in units of one high-fidelity solve.  The
split policy decides how the budget is spent:

    even_split    half on high fidelity, half on the surrogate
    fixed_m0:K    exactly K high-fidelity solves, the rest on the surrogate
    hf_only       plain POD on as many high-fidelity solves as fit
    lf_only       plain POD on surrogate solves only

Reports are byte-deterministic for a fixed master seed: rerunning a study
reproduces report.json, every metric CSV, and the MFP1 snapshot files
exactly.  Wall-clock timings are therefore quarantined in timings.csv,
which is the one file excluded from that guarantee.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .adaptive import mfpod_adaptive
from .core import Basis, Metric, SnapshotSet, _as_matrix
from .estimator import estimate_profile, optimal_alpha
from .mfpod import MfBasis, mfpod_fixed
from .models import (
    AdvDiffConfig,
    ModelCosts,
    equispaced_parameters,
    fine_metric,
    sample_parameters,
    snapshot,
)
from .pod import pod

__all__ = [
    "StudyConfig",
    "StudyReport",
    "Reference",
    "MfpFileError",
    "allocate_budget",
    "captured_energy",
    "select_dim",
    "build_reference",
    "run_study",
    "write_study",
    "generate_snapshot_files",
    "write_snapshots",
    "read_snapshots",
]

_MAGIC = b"MFPS"
_VERSION = 1
_PERCENTILES = (5, 25, 50, 75, 95)
_MFPOD_SPLITS = ("even_split", "fixed_m0")


@dataclass(frozen=True)
class StudyConfig:
    """Everything a study needs; the config echo in reports is this, verbatim."""

    budget: float
    split: str = "even_split"
    weight_mode: str = "pilot_alpha"
    kappa: float = 0.9999
    repeats: int = 100
    master_seed: int = 0
    model: AdvDiffConfig = field(default_factory=AdvDiffConfig)
    reference_size: int = 10_000
    report_dims: int = 30

    def __post_init__(self):
        if not (self.budget > 0 and np.isfinite(self.budget)):
            raise ValueError("budget must be positive and finite")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")
        if self.repeats < 1:
            raise ValueError("repeats must be positive")
        if self.reference_size < 1 or self.report_dims < 1:
            raise ValueError("reference_size and report_dims must be positive")
        _parse_split(self.split)
        _parse_weight_mode(self.weight_mode)


def _parse_split(split: str) -> tuple[str, int | None]:
    if split in ("even_split", "hf_only", "lf_only"):
        return split, None
    if split.startswith("fixed_m0:"):
        try:
            k = int(split.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad fixed_m0 split {split!r}, expected fixed_m0:<int>") from None
        if k < 1:
            raise ValueError("fixed_m0 split needs a positive high-fidelity count")
        return "fixed_m0", k
    raise ValueError(f"unknown split policy {split!r}")


def _parse_weight_mode(mode: str) -> tuple[str, float | None]:
    if mode in ("pilot_alpha", "adaptive"):
        return mode, None
    if mode.startswith("fixed:"):
        try:
            return "fixed", float(mode.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad weight mode {mode!r}, expected fixed:<float>") from None
    raise ValueError(f"unknown weight mode {mode!r}")


def allocate_budget(budget: float, costs: ModelCosts, policy: str) -> tuple[int, int]:
    """Sample counts (m_0, m_1) that the policy buys under the budget.

    Unspent remainder smaller than one sample of the relevant level is
    forfeited; infeasible combinations (a multifidelity policy that cannot
    afford m_1 > m_0 >= 1) are rejected.
    """
    if not (budget > 0 and np.isfinite(budget)):
        raise ValueError("budget must be positive and finite")
    kind, k = _parse_split(policy)
    ratio = math.floor(costs.high / costs.low)
    if kind == "hf_only":
        m0 = math.floor(budget / costs.high)
        if m0 < 1:
            raise ValueError(f"budget {budget} does not cover one high-fidelity sample")
        return m0, 0
    if kind == "lf_only":
        m1 = math.floor(ratio * budget)
        if m1 < 1:
            raise ValueError(f"budget {budget} does not cover one surrogate sample")
        return 0, m1
    if kind == "even_split":
        m0 = math.floor(budget / (2.0 * costs.high))
        m1 = ratio * m0
    else:  # fixed_m0
        m0 = k
        m1 = math.floor((budget - k * costs.high) / costs.low)
    if m0 < 1 or m1 <= m0:
        raise ValueError(
            f"budget {budget} with split {policy!r} yields m_0={m0}, m_1={m1}; "
            "a multifidelity run needs m_1 > m_0 >= 1"
        )
    return m0, m1


def captured_energy(basis: Basis, reference_snapshots, metric: Metric) -> float:
    """Percentage of the reference snapshot energy inside the subspace."""
    ref = _as_matrix(reference_snapshots)
    denom = float(metric.norms_sq(ref).sum())
    if denom <= 0.0:
        raise ValueError("reference snapshots carry no energy")
    if basis.dim == 0:
        return 0.0
    coeff = basis.vectors.T @ metric.apply(ref)
    return 100.0 * float(np.sum(coeff * coeff)) / denom


def select_dim(eigvals, kappa: float) -> int:
    """Smallest r whose leading eigenvalues reach the kappa energy fraction."""
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    vals = np.asarray(eigvals, dtype=float)
    if (vals < 0).any():
        raise ValueError("eigenvalues must be nonnegative")
    cum = np.cumsum(vals)
    total = cum[-1] if len(cum) else 0.0
    if total <= 0:
        return 0
    return int(np.searchsorted(cum, kappa * total) + 1)


@dataclass(frozen=True)
class Reference:
    """Fixed snapshot set every study repeat is scored against."""

    weighted: np.ndarray  # W @ snapshots, the only form projections need
    denom: float
    eigvals: np.ndarray
    trace: float
    size: int
    metric: Metric

    def energy_curve(self, dims: int) -> list[float]:
        """Best possible captured energy per dimension, from the spectrum."""
        cum = np.cumsum(self.eigvals)
        return [
            100.0 * float(cum[min(r, len(cum)) - 1] / self.trace) if len(cum) else 0.0
            for r in range(1, dims + 1)
        ]


def build_reference(model: AdvDiffConfig, size: int, top_modes: int = 40) -> Reference:
    """High-fidelity snapshots at equispaced parameters, plus their spectrum."""
    metric = fine_metric(model)
    thetas = equispaced_parameters(size, model.theta_range)
    u = np.column_stack([snapshot(t, "high", model) for t in thetas])
    weighted = metric.apply(u)
    denom = float(np.einsum("ij,ij->", u, weighted))
    t = metric.to_coords(u)
    n = t.shape[0]
    k = max(1, min(top_modes, n, size))
    if size >= n:
        second = (t @ t.T) / size
        trace = float(np.trace(second))
        vals = scipy.linalg.eigh(second, eigvals_only=True, subset_by_index=[n - k, n - 1])
    else:
        gram = (t.T @ t) / size
        trace = float(np.trace(gram))
        vals = scipy.linalg.eigh(gram, eigvals_only=True, subset_by_index=[size - k, size - 1])
    eigvals = np.maximum(vals[::-1], 0.0)
    return Reference(weighted, denom, eigvals, trace, size, metric)


def _energy_curve(vectors: np.ndarray, reference: Reference, dims: int) -> list[float]:
    if vectors.shape[1] == 0:
        return [0.0] * dims
    coeff = vectors.T @ reference.weighted
    per_mode = np.einsum("ij,ij->i", coeff, coeff)
    cum = np.cumsum(per_mode)
    return [100.0 * float(cum[min(r, len(cum)) - 1] / reference.denom) for r in range(1, dims + 1)]


def _repeat_seed(master_seed: int, rep: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(rep,)).generate_state(1)[0])


def _draw_sets(model: AdvDiffConfig, costs: ModelCosts, m0: int, m1: int, seed: int):
    thetas = sample_parameters(max(m0, m1), seed, model.theta_range)
    ids = tuple(range(len(thetas)))
    hf = np.column_stack([snapshot(t, "high", model) for t in thetas[:m0]]) if m0 else None
    lf = np.column_stack([snapshot(t, "low", model) for t in thetas[:m1]]) if m1 else None
    if m0 and m1:
        sets = (
            SnapshotSet(0, hf, np.zeros((hf.shape[0], 0)), ids[:m0], costs.high),
            SnapshotSet(1, lf[:, :m0], lf[:, m0:], ids[:m1], costs.low),
        )
        return thetas, sets
    return thetas, (hf if m0 else lf,)


def _pilot_alpha(sets, metric: Metric) -> float:
    empty = Basis.empty(metric)
    return optimal_alpha(estimate_profile(empty, sets))[0]


@dataclass
class StudyReport:
    """In-memory study result; see write_study for the on-disk layout."""

    config: StudyConfig
    pipeline: str
    m0: int
    m1: int
    repeats: list
    aggregates: dict
    reference: dict
    failures: list
    timings: list

    def to_payload(self) -> dict:
        """Deterministic JSON payload (timings deliberately excluded)."""
        return _jsonable({
            "config": asdict(self.config),
            "pipeline": self.pipeline,
            "allocation": {"m0": self.m0, "m1": self.m1},
            "repeats": self.repeats,
            "aggregates": self.aggregates,
            "reference": self.reference,
            "failures": self.failures,
        })


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _nearest_rank(sorted_vals: np.ndarray, p: float) -> float:
    n = len(sorted_vals)
    if n == 0:
        return float("nan")
    k = max(1, math.ceil(p / 100.0 * n))
    return float(sorted_vals[k - 1])


def _percentile_rows(matrix: np.ndarray) -> dict:
    """Nearest-rank percentiles per column of a repeats x dims matrix."""
    out = {}
    for p in _PERCENTILES:
        row = []
        for j in range(matrix.shape[1]):
            col = np.sort(matrix[:, j])
            row.append(_nearest_rank(col, p))
        out[f"p{p}"] = row
    return out


def run_study(config: StudyConfig, reference: Reference | None = None) -> StudyReport:
    """Run the configured study and aggregate its repeats.

    A precomputed ``reference`` (from build_reference on the same model)
    can be shared across studies; otherwise one is built here.  Individual
    repeat failures are recorded and skipped, but more than half failing
    aborts the study.
    """
    model = config.model
    costs = ModelCosts.from_config(model)
    m0, m1 = allocate_budget(config.budget, costs, config.split)
    split_kind, _ = _parse_split(config.split)
    weight_kind, fixed_alpha = _parse_weight_mode(config.weight_mode)
    if reference is None:
        reference = build_reference(model, config.reference_size, max(config.report_dims, 40))
    metric = reference.metric
    pipeline = {"hf_only": "pod_hf", "lf_only": "pod_lf"}.get(split_kind, "mfpod")

    records, failures, timings = [], [], []
    for rep in range(config.repeats):
        seed = _repeat_seed(config.master_seed, rep)
        started = time.perf_counter()
        try:
            records.append(_run_repeat(
                rep, seed, model, costs, metric, m0, m1, pipeline,
                weight_kind, fixed_alpha, config, reference,
            ))
        except Exception as exc:  # noqa: BLE001 - a repeat may fail without sinking the study
            failures.append({"repeat": rep, "error": f"{type(exc).__name__}: {exc}"})
        timings.append(time.perf_counter() - started)
    if len(failures) > config.repeats / 2:
        raise RuntimeError(f"{len(failures)} of {config.repeats} repeats failed; aborting study")

    dims = config.report_dims
    energy = np.array([rec["captured_energy"] for rec in records]) if records else np.zeros((0, dims))
    eig = np.array([rec["eigvals"] for rec in records]) if records else np.zeros((0, dims))
    counts = np.array([rec["mode_count"] for rec in records]) if records else np.zeros(0)
    selected = np.array([rec["selected_r"] for rec in records]) if records else np.zeros(0)
    aggregates = {
        "captured_energy": _percentile_rows(energy) if len(records) else {},
        "eigvals": _percentile_rows(eig) if len(records) else {},
        "mode_count": {
            "min": int(counts.min()) if len(counts) else 0,
            "median": float(np.median(counts)) if len(counts) else float("nan"),
            "max": int(counts.max()) if len(counts) else 0,
        },
        "selected_r": {
            "min": int(selected.min()) if len(selected) else 0,
            "median": float(np.median(selected)) if len(selected) else float("nan"),
            "max": int(selected.max()) if len(selected) else 0,
        },
    }
    reference_info = {
        "size": reference.size,
        "eigvals": reference.eigvals,
        "energy_curve": reference.energy_curve(dims),
    }
    return StudyReport(
        config=config, pipeline=pipeline, m0=m0, m1=m1, repeats=records,
        aggregates=aggregates, reference=reference_info, failures=failures,
        timings=timings,
    )


def _run_repeat(rep, seed, model, costs, metric, m0, m1, pipeline,
                weight_kind, fixed_alpha, config, reference) -> dict:
    dims = config.report_dims
    record = {"repeat": rep, "seed": seed, "m0": m0, "m1": m1}
    if pipeline == "mfpod":
        _, sets = _draw_sets(model, costs, m0, m1, seed)
        if weight_kind == "adaptive":
            mf, trace = mfpod_adaptive(sets, config.kappa, metric)
            record["alphas"] = list(trace.alphas)
            record["termination"] = trace.termination
        else:
            alpha = fixed_alpha if weight_kind == "fixed" else _pilot_alpha(sets, metric)
            mf = mfpod_fixed(sets, (alpha,), config.kappa, metric)
            record["alphas"] = [float(alpha)]
        record.update({
            "mode_count": mf.mode_count,
            "selected_r": mf.selected_dim,
            "correction_count": mf.correction_count,
            "perp_zero_count": mf.perp_zero_count,
            "energy_fraction": mf.energy_fraction,
            "eigvals": _pad(mf.corrected_eigvals, dims),
            "raw_eigvals": _pad(mf.raw_eigvals, dims),
            "captured_energy": _energy_curve(mf.vectors[:, :dims], reference, dims),
        })
        return record
    count = m0 if pipeline == "pod_hf" else m1
    fidelity = "high" if pipeline == "pod_hf" else "low"
    thetas = sample_parameters(count, seed, model.theta_range)
    snaps = np.column_stack([snapshot(t, fidelity, model) for t in thetas])
    res = pod(snaps, metric)
    record.update({
        "alphas": [],
        "mode_count": res.basis.dim,
        "selected_r": select_dim(res.eigvals, config.kappa),
        "eigvals": _pad(res.eigvals, dims),
        "captured_energy": _energy_curve(res.basis.vectors[:, :dims], reference, dims),
    })
    return record


def _pad(values: np.ndarray, dims: int) -> list[float]:
    out = [0.0] * dims
    for i, v in enumerate(values[:dims]):
        out[i] = float(v)
    return out


# ---------------------------------------------------------------------------
# Snapshot files (MFP1): 24-byte header, then float64 column-major payload.
# Bytes 0-3 magic "MFPS", 4-7 u32 version, 8-15 u64 rows, 16-23 u64 columns,
# all little endian.


class MfpFileError(ValueError):
    """Raised for malformed snapshot files."""


def write_snapshots(path, matrix) -> None:
    """Write a snapshot matrix atomically in the MFP1 layout."""
    a = np.ascontiguousarray(_as_matrix(matrix).astype("<f8"))
    n, m = a.shape
    header = _MAGIC + struct.pack("<I", _VERSION) + struct.pack("<QQ", n, m)
    _atomic_write(path, header + a.tobytes(order="F"))


def read_snapshots(path) -> np.ndarray:
    """Read an MFP1 snapshot file back into an (n, m) array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 24 or blob[:4] != _MAGIC:
        raise MfpFileError(f"{path}: not a snapshot file (bad magic or truncated header)")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != _VERSION:
        raise MfpFileError(f"{path}: unsupported version {version}")
    n, m = struct.unpack("<QQ", blob[8:24])
    expected = 24 + 8 * n * m
    if len(blob) != expected:
        raise MfpFileError(f"{path}: payload has {len(blob) - 24} bytes, expected {8 * n * m}")
    data = np.frombuffer(blob, dtype="<f8", offset=24)
    return data.reshape((n, m), order="F").astype(float)


def _atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def generate_snapshot_files(config: StudyConfig, outdir) -> list:
    """One deterministic snapshot draw written as MFP1 files plus a manifest.

    Produces snapshots_high.mfp1 and/or snapshots_low.mfp1 according to
    the split, and manifest.json describing the draw.
    """
    model = config.model
    costs = ModelCosts.from_config(model)
    m0, m1 = allocate_budget(config.budget, costs, config.split)
    thetas = sample_parameters(max(m0, m1), config.master_seed, model.theta_range)
    os.makedirs(outdir, exist_ok=True)
    written = []
    manifest = {
        "model": asdict(model),
        "budget": config.budget,
        "split": config.split,
        "master_seed": config.master_seed,
        "m0": m0,
        "m1": m1,
        "costs": {"high": costs.high, "low": costs.low},
        "thetas": list(thetas),
        "format": "MFP1",
    }
    if m0:
        hf = np.column_stack([snapshot(t, "high", model) for t in thetas[:m0]])
        path = os.path.join(outdir, "snapshots_high.mfp1")
        write_snapshots(path, hf)
        written.append(path)
    if m1:
        lf = np.column_stack([snapshot(t, "low", model) for t in thetas[:m1]])
        path = os.path.join(outdir, "snapshots_low.mfp1")
        write_snapshots(path, lf)
        written.append(path)
    manifest_path = os.path.join(outdir, "manifest.json")
    _atomic_write(manifest_path, _dump_json(_jsonable(manifest)).encode())
    written.append(manifest_path)
    return written


def _dump_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_study(report: StudyReport, outdir) -> list:
    """Write report.json, the metric CSVs, and timings.csv.

    Everything except timings.csv is byte-deterministic for a fixed
    master seed.
    """
    os.makedirs(outdir, exist_ok=True)
    written = []

    def emit(name, text):
        path = os.path.join(outdir, name)
        _atomic_write(path, text.encode())
        written.append(path)

    emit("report.json", _dump_json(report.to_payload()))
    dims = report.config.report_dims
    header = "repeat," + ",".join(f"r{j}" for j in range(1, dims + 1))
    emit("captured_energy.csv", _csv(header, report.repeats, "captured_energy"))
    emit("eigenvalues.csv", _csv(header, report.repeats, "eigvals"))
    if report.pipeline == "mfpod":
        emit("raw_eigenvalues.csv", _csv(header, report.repeats, "raw_eigvals"))
    scalar_cols = ["seed", "m0", "m1", "mode_count", "selected_r"]
    lines = ["repeat," + ",".join(scalar_cols + ["alphas"])]
    for rec in report.repeats:
        cells = [str(rec["repeat"])] + [repr(rec[c]) if isinstance(rec[c], float) else str(rec[c])
                                        for c in scalar_cols]
        cells.append(";".join(repr(float(a)) for a in rec["alphas"]))
        lines.append(",".join(cells))
    emit("repeats.csv", "\n".join(lines) + "\n")
    emit("timings.csv", "\n".join(
        ["repeat,seconds"] + [f"{i},{t:.6f}" for i, t in enumerate(report.timings)]
    ) + "\n")
    return written


def _csv(header: str, records: list, key: str) -> str:
    lines = [header]
    for rec in records:
        lines.append(",".join([str(rec["repeat"])] + [repr(float(v)) for v in rec[key]]))
    return "\n".join(lines) + "\n"
