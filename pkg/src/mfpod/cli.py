"""Command-line front end.

Subcommands: generate (snapshot files), pod, mfpod, study, verify.  Every
command prints a JSON summary on stdout; failures print a machine-readable
JSON object on stderr and exit nonzero (2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .adaptive import mfpod_adaptive
from .core import Metric, SnapshotSet
from .estimator import estimate_profile, optimal_alpha
from .experiment import (
    StudyConfig,
    _pilot_alpha,
    generate_snapshot_files,
    read_snapshots,
    run_study,
    select_dim,
    write_snapshots,
    write_study,
)
from .mfpod import mfpod_fixed
from .models import AdvDiffConfig, ModelCosts, make_model_pair, mass_matrix
from .pod import pod
from .verify import convergence_study, eigenvalue_sum_mse

_SPLITS = {"even": "even_split", "hf-only": "hf_only", "lf-only": "lf_only"}
_MODELS = {"literal": "literal", "boundary-layer": "boundary_layer"}


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as JSON on stderr."""

    def error(self, message):
        _emit_error(message, "usage")
        raise SystemExit(2)


def _emit_error(message: str, kind: str) -> None:
    sys.stderr.write(json.dumps({"error": message, "kind": kind}) + "\n")


def _print(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _split_policy(text: str) -> str:
    if text in _SPLITS:
        return _SPLITS[text]
    if text.startswith("m0="):
        return "fixed_m0:" + text[3:]
    raise _CliError(f"unknown split {text!r}; expected even, m0=K, hf-only, or lf-only")


def _weight_mode(alpha: str) -> str:
    if alpha == "pilot":
        return "pilot_alpha"
    if alpha == "adaptive":
        return "adaptive"
    try:
        return f"fixed:{float(alpha)}"
    except ValueError:
        raise _CliError(f"bad --alpha {alpha!r}; expected a number, 'pilot', or 'adaptive'") from None


def _model_config(args) -> AdvDiffConfig:
    return AdvDiffConfig(n_hf=args.n_hf, n_lf=args.n_lf, advection_sign=_MODELS[args.model])


def _metric_for(n: int, kind: str) -> Metric:
    if kind == "euclidean":
        return Metric.euclidean(n)
    return Metric.from_weight(mass_matrix(n))


def _add_model_flags(p, n_hf=4097, n_lf=33):
    p.add_argument("--model", choices=sorted(_MODELS), default="boundary-layer")
    p.add_argument("--n-hf", type=int, default=n_hf)
    p.add_argument("--n-lf", type=int, default=n_lf)


def build_parser() -> _Parser:
    parser = _Parser(prog="mfpod", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw snapshots and write MFP1 files")
    g.add_argument("--budget", type=float, required=True)
    g.add_argument("--split", default="even")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    _add_model_flags(g)

    p = sub.add_parser("pod", help="POD of one snapshot file")
    p.add_argument("--input", required=True)
    p.add_argument("--kappa", type=float, default=0.9999)
    p.add_argument("--metric", choices=("mass", "euclidean"), default="mass")
    p.add_argument("--out", required=True)

    m = sub.add_parser("mfpod", help="multifidelity POD of two snapshot files")
    m.add_argument("--hf", required=True)
    m.add_argument("--lf", required=True)
    m.add_argument("--alpha", default="pilot")
    m.add_argument("--kappa", type=float, default=0.9999)
    m.add_argument("--metric", choices=("mass", "euclidean"), default="mass")
    m.add_argument("--cost-ratio", type=float, default=4097.0 / 33.0,
                   help="high-fidelity cost divided by surrogate cost")
    m.add_argument("--out", required=True)

    s = sub.add_parser("study", help="repeated budgeted comparison against a reference")
    s.add_argument("--budget", type=float, required=True)
    s.add_argument("--split", default="even")
    s.add_argument("--alpha", default="pilot")
    s.add_argument("--kappa", type=float, default=0.9999)
    s.add_argument("--repeats", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--reference-size", type=int, default=10_000)
    s.add_argument("--report-dims", type=int, default=30)
    s.add_argument("--out", required=True)
    _add_model_flags(s)

    v = sub.add_parser("verify", help="operator convergence and eigenvalue-sum checks")
    v.add_argument("--check", choices=("convergence", "eigsum", "both"), default="both")
    v.add_argument("--q1", type=int, default=4)
    v.add_argument("--m0-grid", default="2,4,8,16,32")
    v.add_argument("--repeats", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--alpha", type=float, default=1.0)
    v.add_argument("--r", type=int, default=3)
    v.add_argument("--reference-size", type=int, default=10_000)
    v.add_argument("--out", default=None)
    _add_model_flags(v, n_hf=129, n_lf=17)
    return parser


def _cmd_generate(args) -> dict:
    config = StudyConfig(
        budget=args.budget, split=_split_policy(args.split),
        master_seed=args.seed, model=_model_config(args),
    )
    written = generate_snapshot_files(config, args.out)
    return {"written": written}


def _cmd_pod(args) -> dict:
    snaps = read_snapshots(args.input)
    metric = _metric_for(snaps.shape[0], args.metric)
    result = pod(snaps, metric)
    os.makedirs(args.out, exist_ok=True)
    modes_path = os.path.join(args.out, "modes.mfp1")
    write_snapshots(modes_path, result.basis.vectors)
    eig_path = os.path.join(args.out, "eigenvalues.csv")
    with open(eig_path, "w") as fh:
        fh.write("index,eigval\n")
        for i, v in enumerate(result.eigvals):
            fh.write(f"{i},{v!r}\n")
    return {
        "written": [modes_path, eig_path],
        "mode_count": result.basis.dim,
        "selected_r": select_dim(result.eigvals, args.kappa),
        "leading_eigvals": [float(v) for v in result.eigvals[:10]],
    }


def _cmd_mfpod(args) -> dict:
    if args.alpha not in ("pilot", "adaptive"):
        _weight_mode(args.alpha)  # validate before any file I/O
    hf = read_snapshots(args.hf)
    lf = read_snapshots(args.lf)
    if hf.shape[0] != lf.shape[0]:
        raise _CliError("snapshot files have different state dimensions")
    m0, m1 = hf.shape[1], lf.shape[1]
    if m1 <= m0:
        raise _CliError(f"need more surrogate than high-fidelity snapshots (got {m0}, {m1})")
    metric = _metric_for(hf.shape[0], args.metric)
    ids = tuple(range(m1))
    sets = (
        SnapshotSet(0, hf, np.zeros((hf.shape[0], 0)), ids[:m0], 1.0),
        SnapshotSet(1, lf[:, :m0], lf[:, m0:], ids, 1.0 / args.cost_ratio),
    )
    summary = {}
    if args.alpha == "adaptive":
        mf, trace = mfpod_adaptive(sets, args.kappa, metric)
        summary["alphas"] = [float(a) for a in trace.alphas]
        summary["termination"] = trace.termination
    else:
        if args.alpha == "pilot":
            alpha = _pilot_alpha(sets, metric)
        else:
            alpha = float(_weight_mode(args.alpha).split(":", 1)[1])
        mf = mfpod_fixed(sets, (alpha,), args.kappa, metric)
        summary["alphas"] = [float(alpha)]
    os.makedirs(args.out, exist_ok=True)
    modes_path = os.path.join(args.out, "modes.mfp1")
    write_snapshots(modes_path, mf.vectors)
    eig_path = os.path.join(args.out, "eigenvalues.csv")
    with open(eig_path, "w") as fh:
        fh.write("index,raw,corrected\n")
        for i, (raw, cor) in enumerate(zip(mf.raw_eigvals, mf.corrected_eigvals)):
            fh.write(f"{i},{raw!r},{cor!r}\n")
    summary.update({
        "written": [modes_path, eig_path],
        "mode_count": mf.mode_count,
        "selected_r": mf.selected_dim,
        "correction_count": mf.correction_count,
    })
    return summary


def _cmd_study(args) -> dict:
    config = StudyConfig(
        budget=args.budget, split=_split_policy(args.split),
        weight_mode=_weight_mode(args.alpha), kappa=args.kappa,
        repeats=args.repeats, master_seed=args.seed, model=_model_config(args),
        reference_size=args.reference_size, report_dims=args.report_dims,
    )
    report = run_study(config)
    written = write_study(report, args.out)
    return {
        "written": written,
        "pipeline": report.pipeline,
        "m0": report.m0,
        "m1": report.m1,
        "failures": len(report.failures),
        "median_mode_count": report.aggregates["mode_count"]["median"],
    }


def _cmd_verify(args) -> dict:
    grid = tuple(int(x) for x in args.m0_grid.split(","))
    pair = make_model_pair(_model_config(args))
    out: dict = {"m0_grid": list(grid), "q1": args.q1, "alpha": args.alpha}
    conv = convergence_study(pair, args.q1, grid, args.repeats, args.seed,
                             alpha=args.alpha, reference_size=args.reference_size)
    out["convergence"] = {
        "mean_sq_errors": [float(v) for v in conv.mean_sq_errors],
        "slope": float(conv.slope),
        "gamma_hat": float(conv.gamma_hat),
        "exact": conv.exact,
    }
    if args.check in ("eigsum", "both"):
        study = eigenvalue_sum_mse(pair, args.r, grid, args.repeats, args.seed,
                                   alpha=args.alpha, q1=args.q1,
                                   reference_size=args.reference_size,
                                   gamma_hat=conv.gamma_hat)
        out["eigsum"] = {
            "r": args.r,
            "mse": [float(v) for v in study.mse],
            "bound": [float(v) for v in study.bound],
            "alignment_mean_sq": [float(v) for v in study.alignment_mean_sq],
            "alignment_bound": [float(v) for v in study.alignment_bound],
            "symmetry_max_dev": float(study.symmetry_max_dev),
            "spectral_gap": float(study.spectral_gap),
            "gap_degenerate": study.gap_degenerate,
        }
    if args.check == "eigsum":
        del out["convergence"]
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w") as fh:
            json.dump(out, fh, sort_keys=True, indent=2)
            fh.write("\n")
        out["written"] = [args.out]
    return out


_COMMANDS = {
    "generate": _cmd_generate,
    "pod": _cmd_pod,
    "mfpod": _cmd_mfpod,
    "study": _cmd_study,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _print(_COMMANDS[args.command](args))
    except _CliError as exc:
        _emit_error(str(exc), "usage")
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary: everything becomes an error report
        _emit_error(f"{type(exc).__name__}: {exc}", type(exc).__name__)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
