"""Command-line front end: simulate, reconstruct, wigner, report.

Each subcommand mirrors a library pipeline and reads/writes the CSV and
JSON formats from the formats module.  A JSON run configuration (with a
mandatory "version": 1 field) can override any flag; unknown keys are
rejected so typos fail loudly instead of being ignored.

Exit codes are a stable contract for scripting: 0 success, 1 usage error,
2 data or I/O error, 3 numerical failure.

Heavy imports happen inside the command handlers, after --threads has been
applied, so the BLAS worker cap set through the standard environment
variables actually takes effect.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .errors import DataError, NumericalError, UsageError


class RunConfig:
    """Parsed JSON run configuration: a flat key/value document."""

    def __init__(self, version: int, options: dict):
        self.version = version
        self.options = options

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from None
        if not isinstance(doc, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        version = doc.pop("version", None)
        if version != 1:
            raise UsageError(f"{path}: config 'version' must be 1, got {version!r}")
        return cls(version=1, options=doc)

    def apply(self, args: argparse.Namespace):
        unknown = sorted(set(self.options) - set(args._dests))
        if unknown:
            raise UsageError(
                f"unknown config keys: {', '.join(unknown)} "
                f"(allowed: {', '.join(sorted(args._dests))})"
            )
        for key, val in self.options.items():
            setattr(args, key, val)


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; usage problems are exit 1 here
    def error(self, message):
        raise UsageError(message)


def _set_thread_env(n: int):
    if n < 1:
        raise UsageError(f"--threads must be >= 1, got {n}")
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(n)


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", help="JSON run configuration; overrides flags")
    sub.add_argument("--threads", type=int, default=None,
                     help="cap numeric worker threads")
    sub.add_argument("--precision", choices=("single", "double"), default="double",
                     help="floating-point precision for pattern recursions")


def _collect_dests(sub: argparse.ArgumentParser):
    dests = {
        a.dest for a in sub._actions
        if a.dest not in ("help", "config") and not a.dest.startswith("_")
    }
    sub.set_defaults(_dests=frozenset(dests))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hdtomo",
                     description="homodyne tomography: simulate, reconstruct, "
                                 "and render Wigner functions")
    from . import __version__
    parser.add_argument("--version", action="version", version=f"hdtomo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="generate a synthetic homodyne dataset")
    p.add_argument("--state", default="vacuum",
                   choices=("vacuum", "coherent", "cat", "fock"),
                   help="pure state family")
    p.add_argument("--alpha", type=float, default=1.0,
                   help="amplitude for coherent and cat states")
    p.add_argument("--levels", default="0",
                   help="comma-separated Fock levels for --state fock")
    p.add_argument("--cutoff", "-M", dest="cutoff", type=int, required=True)
    p.add_argument("--n-phi", type=int, required=True, help="number of phases")
    p.add_argument("--nsamples", type=int, required=True, help="samples per block")
    p.add_argument("--nblks", type=int, default=1, help="statistical blocks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-points", type=int, default=4096,
                   help="x-grid resolution for the inverse-CDF sampler")
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)
    _collect_dests(p)

    p = sub.add_parser("reconstruct", help="estimate a density matrix from samples")
    p.add_argument("--samples", required=True, help="samples CSV path")
    p.add_argument("--cutoff", "-M", dest="cutoff", type=int, required=True)
    p.add_argument("--n-bin", type=int, default=400)
    p.add_argument("--max-diag", type=int, default=None,
                   help="estimate only diagonals 0..max_diag")
    p.add_argument("--beta", type=float, default=None,
                   help="scaling parameter; default chosen from the data")
    p.add_argument("--beta-policy", choices=("auto", "balanced"), default="auto",
                   help="rule for the default beta")
    p.add_argument("--estimator", choices=("auto", "binned", "unbinned", "block"),
                   default="auto")
    p.add_argument("--bin-correction", action="store_true",
                   help="remove the midpoint-rule bias of wide bins")
    p.add_argument("--symmetrize", action="store_true",
                   help="double half-circle data via X_{phi+pi} = -X_phi")
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_reconstruct)
    _collect_dests(p)

    p = sub.add_parser("wigner", help="synthesize a Wigner function grid")
    p.add_argument("--rho-re", required=True, help="real-part matrix CSV")
    p.add_argument("--rho-im", required=True, help="imaginary-part matrix CSV")
    p.add_argument("--method", choices=("direct", "recurrence1", "recurrence2"),
                   default="recurrence1")
    p.add_argument("--n-r", type=int, default=121)
    p.add_argument("--n-theta", type=int, default=64)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--out", required=True, help="output Wigner CSV")
    p.add_argument("--cartesian", default=None,
                   help="also write a Cartesian-resampled grid to this path")
    p.add_argument("--n-xy", type=int, default=201,
                   help="side length of the Cartesian grid")
    _add_common(p)
    p.set_defaults(func=cmd_wigner)
    _collect_dests(p)

    p = sub.add_parser("report", help="normalization report from matrix files")
    p.add_argument("--rho-re", required=True)
    p.add_argument("--err-re", required=True)
    p.add_argument("--out", default=None, help="write JSON here as well as stdout")
    _add_common(p)
    p.set_defaults(func=cmd_report)
    _collect_dests(p)
    return parser


def _parse_levels(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(tok) for tok in str(text).split(",") if tok.strip() != ""]
    except ValueError:
        raise UsageError(f"--levels must be comma-separated integers, got {text!r}") from None


def _build_state(args):
    from . import simulate

    if args.state == "vacuum":
        return simulate.make_state("fock_superposition", [0], args.cutoff), {"state": "vacuum"}
    if args.state == "coherent":
        return (simulate.make_state("coherent", args.alpha, args.cutoff),
                {"state": "coherent", "alpha": float(args.alpha)})
    if args.state == "cat":
        return (simulate.make_state("cat", args.alpha, args.cutoff),
                {"state": "cat", "alpha": float(args.alpha)})
    levels = _parse_levels(args.levels)
    return (simulate.make_state("fock_superposition", levels, args.cutoff),
            {"state": "fock", "levels": "+".join(str(v) for v in levels)})


def cmd_simulate(args) -> int:
    from . import formats, simulate

    state, desc = _build_state(args)
    plan = simulate.SimulationPlan(
        nsamples=args.nsamples, nblks=args.nblks, n_phi=args.n_phi,
        seed=args.seed, grid_points=args.grid_points,
    )
    x = simulate.quadrature_grid(args.cutoff, plan.grid_points)
    table = simulate.marginals(state, simulate.phase_grid(plan.n_phi), x)
    ds = simulate.sample(table, plan)
    os.makedirs(args.out_dir, exist_ok=True)
    meta = dict(desc)
    meta.update({"rng": "pcg64", "seed": args.seed})
    samples_path = os.path.join(args.out_dir, "samples.csv")
    state_path = os.path.join(args.out_dir, "state.csv")
    formats.write_samples(samples_path, ds, meta=meta)
    formats.write_state(state_path, state, meta=desc)
    run_meta = {
        "version": 1, "command": "simulate", "rng": "pcg64",
        "format": f"{formats.FORMAT_TAG} {formats.FORMAT_VERSION}",
        "M": args.cutoff, "n_phi": args.n_phi, "nsamples": args.nsamples,
        "nblks": args.nblks, "seed": args.seed, "grid_points": args.grid_points,
        "total_samples": plan.total_samples, "truncation_deficit": state.deficit,
    }
    run_meta.update(desc)
    formats.write_report(os.path.join(args.out_dir, "metadata.json"), run_meta)
    print(f"wrote {plan.total_samples} samples to {samples_path}")
    return 0


def cmd_reconstruct(args) -> int:
    from . import formats, patterns, reconstruct

    t0 = time.perf_counter()
    ds, _ = formats.read_samples(args.samples)
    if args.symmetrize:
        ds = reconstruct.double_by_symmetry(ds)
    if args.beta is not None:
        beta = float(args.beta)
    elif args.beta_policy == "balanced":
        beta = patterns.balanced_beta(ds.values)
    else:
        beta = patterns.choose_beta(ds.values)
    cfg = patterns.PatternConfig(cutoff=args.cutoff, beta=beta,
                                 precision=args.precision)
    kind = args.estimator
    if kind == "auto":
        kind = "block" if (ds.nblks or 0) >= 2 else "binned"
    if kind == "binned":
        sino = reconstruct.bin(ds, args.n_bin)
        est = reconstruct.estimate_binned(
            reconstruct.phase_dft(sino), cfg, max_diag=args.max_diag,
            bin_correction=args.bin_correction,
        )
    elif kind == "unbinned":
        est = reconstruct.estimate_unbinned(ds, cfg, max_diag=args.max_diag)
    else:
        est = reconstruct.block_statistics(
            ds, cfg, n_bin=args.n_bin, max_diag=args.max_diag,
            bin_correction=args.bin_correction,
        )
    norm = reconstruct.check_normalization(est)
    os.makedirs(args.out_dir, exist_ok=True)
    for fname, mat, part in (
        ("rho_re.csv", est.rho.real, "re"),
        ("rho_im.csv", est.rho.imag, "im"),
        ("err_re.csv", est.err_re, "re"),
        ("err_im.csv", est.err_im, "im"),
    ):
        name = fname.split("_")[0]
        formats.write_matrix(os.path.join(args.out_dir, fname), mat,
                             meta={"name": name, "part": part})
    report = {
        "version": 1, "command": "reconstruct", "M": args.cutoff,
        "estimator": est.meta["estimator"], "N": est.meta["N"],
        "n_phi": est.meta["n_phi"], "n_bin": est.meta["n_bin"],
        "max_diag": est.meta["max_diag"], "beta": beta,
        "precision": args.precision, "trace": norm["trace"],
        "trace_err": norm["trace_err"], "compatible": norm["compatible"],
        "elapsed_seconds": round(time.perf_counter() - t0, 3),
    }
    if "nblks" in est.meta:
        report["nblks"] = est.meta["nblks"]
    formats.write_report(os.path.join(args.out_dir, "report.json"), report)
    print(f"trace = {norm['trace']:.6f} +- {norm['trace_err']:.6f} "
          f"(compatible with 1: {norm['compatible']})")
    return 0


def cmd_wigner(args) -> int:
    from . import formats, wigner

    re_mat, _ = formats.read_matrix(args.rho_re)
    im_mat, _ = formats.read_matrix(args.rho_im)
    if re_mat.shape != im_mat.shape:
        raise DataError(
            f"matrix files disagree on size: {re_mat.shape} vs {im_mat.shape}"
        )
    dm = wigner.DiagonalDensityMatrix.from_matrix(re_mat + 1j * im_mat)
    r, theta = wigner.polar_grid(dm.M, n_r=args.n_r, n_theta=args.n_theta,
                                 r_max=args.r_max)
    grid = wigner.wigner_polar(dm, r, theta, method=args.method)
    formats.write_wigner(args.out, grid.r, grid.theta, grid.W,
                         meta={"M": dm.M, "method": args.method, "coords": "polar"})
    if args.cartesian:
        x, y, W_xy = wigner.cartesian_resample(grid, n=args.n_xy)
        formats.write_wigner(args.cartesian, y, x, W_xy.T,
                             meta={"M": dm.M, "method": args.method,
                                   "coords": "cartesian"})
    print(f"wrote Wigner grid ({grid.r.size} x {grid.theta.size}) to {args.out}")
    return 0


def cmd_report(args) -> int:
    import numpy as np

    from . import formats

    rho_re, _ = formats.read_matrix(args.rho_re)
    err_re, _ = formats.read_matrix(args.err_re)
    if rho_re.shape != err_re.shape:
        raise DataError(
            f"matrix files disagree on size: {rho_re.shape} vs {err_re.shape}"
        )
    trace = float(np.trace(rho_re))
    trace_err = float(np.sqrt(np.sum(np.diagonal(err_re) ** 2)))
    report = {
        "version": 1, "command": "report", "M": rho_re.shape[0],
        "trace": trace, "trace_err": trace_err,
        "compatible": bool(abs(trace - 1.0) <= 3.0 * trace_err),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        formats.write_report(args.out, report)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            RunConfig.load(args.config).apply(args)
        if getattr(args, "threads", None) is not None:
            _set_thread_env(int(args.threads))
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
