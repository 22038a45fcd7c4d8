"""Command-line interface.

Every subcommand that is given ``--out-dir`` writes its outputs there
together with ``manifest.json``; ``volmf replay`` reruns a manifest and
checks that the outputs hash identically.

Exit codes: 0 success, 1 replay mismatch, 2 invalid input or flags,
3 numerical failure.
"""

import argparse
import hashlib
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .bssmf import BssmfProblem, bssmf_fit, bssmf_multistart
from .core import SolverOptions
from .datagen import (
    SyntheticSpec, fixture, gen_completion_instance, gen_dirichlet_instance, gen_separable_instance,
)
from .errors import InputError, MaskResampleExhausted, NumericalError, ShapeMismatch, VolmfError
from .io import (
    RunManifest, file_sha256, read_matrix_csv, write_abundance_pgm, write_matrix_csv,
    write_trace_tsv, write_tsv,
)
from .maxvol import MaxvolModel, maxvol_fit
from .metrics import relative_error, rmse_unobserved
from .minvol import VARIANTS, MinvolModel, minvol_fit
from .projections import Bounds
from .separable import RandSpaConfig, randspa
from .ssc import check_ssc1_necessary

__all__ = ["main", "cli_dispatch", "build_parser"]

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3

ALGO_NAMES = {"adgrad": "adgrad2", "admm": "admm_adgrad", "admm-bregman": "admm_bregman"}
MANIFEST_NAME = "manifest.json"


class _Run:
    """Output bookkeeping of one invocation."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.outputs = []
        self.timing = []
        self.notes = {}
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)

    def path(self, name, timing=False):
        if not self.out_dir:
            raise InputError("--out-dir is required for this subcommand")
        self.outputs.append(name)
        if timing:
            self.timing.append(name)
        return os.path.join(self.out_dir, name)


# ---------------------------------------------------------------- helpers

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return v


def _maps(text):
    try:
        w, h = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected WIDTHxHEIGHT") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("map size must be positive")
    return [w, h]


def _load_data(args):
    if not args.input:
        raise InputError("--input is required")
    X, mask = read_matrix_csv(args.input, missing_as_nan=args.missing_nan)
    if getattr(args, "mask", None):
        M, hidden = read_matrix_csv(args.mask)
        if hidden is not None or M.shape != X.shape:
            raise InputError(f"mask must be a complete {X.shape[0]}x{X.shape[1]} matrix")
        if M.min() < 0 or M.max() > 1:
            raise InputError("mask entries must lie in [0, 1]")
        mask = M if mask is None else M * mask
    return X, mask


def _check_rank(X, r):
    if not 1 <= r <= min(X.shape):
        raise InputError(f"rank must be in [1, {min(X.shape)}], got {r}")


def _options(args, **extra):
    return SolverOptions(rank=args.rank, outer=args.outer, inner=args.inner, seed=args.seed, **extra)


def _flag_text(value):
    return json.dumps(value, sort_keys=True, default=str)


def _write_factors(run, args, X, mask, pair, trace, extra_metrics=()):
    write_matrix_csv(run.path("W.csv"), pair.W)
    write_matrix_csv(run.path("H.csv"), pair.H)
    rows = [("relative_error", relative_error(X, pair.W, pair.H, mask))]
    if trace is not None:
        rows += [("final_fit", trace.fit[-1]), ("final_objective", trace.final_objective),
                 ("iterations", trace.iters[-1])]
        rows += [(f"flag_{k}", _flag_text(v)) for k, v in sorted(trace.flags.items())]
    rows += list(extra_metrics)
    write_tsv(run.path("metrics.tsv"), ("name", "value"), rows)
    if trace is not None and args.trace:
        write_trace_tsv(trace, run.path("trace.tsv", timing=True))
    if getattr(args, "maps", None):
        w, h = args.maps
        if w * h != pair.H.shape[1]:
            raise ShapeMismatch(f"--maps {w}x{h} does not match n = {pair.H.shape[1]}")
        for k in range(pair.H.shape[0]):
            write_abundance_pgm(pair.H[k], w, h, run.path(f"abundance_{k}.pgm"))
        run.notes["map_scaling"] = "each map divided by its own maximum"


# ---------------------------------------------------------------- subcommands

def cmd_gen(args, run):
    if args.kind == "fixture":
        if not args.name:
            raise InputError("--name is required for --kind fixture")
        write_matrix_csv(run.path(f"{args.name}.csv"), fixture(args.name))
        return EXIT_OK
    if args.rank is None:
        raise InputError("--rank is required")
    if args.kind == "completion":
        spec = SyntheticSpec(m=args.m, n=args.n, r=args.rank, h_zero_fraction=args.h_zero_fraction,
                             missing_fraction=args.missing_fraction, noise_level=args.noise,
                             seed=args.seed)
        inst = gen_completion_instance(spec)
        write_matrix_csv(run.path("X.csv"), inst.X)
        write_matrix_csv(run.path("X_observed.csv"), inst.X, inst.mask)
        write_matrix_csv(run.path("X_clean.csv"), inst.X_clean)
        write_matrix_csv(run.path("mask.csv"), inst.mask)
        write_matrix_csv(run.path("W.csv"), inst.W)
        write_matrix_csv(run.path("H.csv"), inst.H)
        with open(run.path("spec.json"), "w", encoding="utf-8") as fh:
            json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif args.kind == "separable":
        X, idx, W, H = gen_separable_instance(args.m, args.n, args.rank, args.noise, args.seed)
        write_matrix_csv(run.path("X.csv"), X)
        write_matrix_csv(run.path("W.csv"), W)
        write_matrix_csv(run.path("H.csv"), H)
        write_tsv(run.path("indices.tsv"), ("k", "column"), list(enumerate(idx)))
    else:
        X, W, H = gen_dirichlet_instance(args.m, args.n, args.rank, args.concentration, args.seed)
        write_matrix_csv(run.path("X.csv"), X)
        write_matrix_csv(run.path("W.csv"), W)
        write_matrix_csv(run.path("H.csv"), H)
    return EXIT_OK


def cmd_spa(args, run):
    X, mask = _load_data(args)
    if mask is not None:
        raise InputError("spa needs a complete matrix")
    _check_rank(X, args.rank)
    nu = X.shape[0] if args.nu == 0 else args.nu
    cfg = RandSpaConfig(rank=args.rank, nu=nu, kappa=args.kappa, runs=args.runs, seed=args.seed)
    res = randspa(X, cfg)
    write_tsv(run.path("indices.tsv"), ("k", "column", "residual_norm"),
              [(k, j, float(v)) for k, (j, v) in enumerate(zip(res.indices, res.residual_norms))])
    write_matrix_csv(run.path("W.csv"), X[:, res.indices])
    write_matrix_csv(run.path("H.csv"), res.H)
    write_tsv(run.path("metrics.tsv"), ("name", "value"),
              [("relative_error", res.relative_error), ("best_run", res.run), ("nu", nu)])
    return EXIT_OK


def _parse_bounds(text, m):
    if text == "auto":
        return None
    parts = text.split(",")
    if len(parts) != 2:
        raise InputError('--bounds must be "auto", "a,b" or "aFile,bFile"')
    try:
        lo, hi = float(parts[0]), float(parts[1])
        return Bounds.scalar(lo, hi, m)
    except ValueError:
        pass
    a = read_matrix_csv(parts[0])[0].ravel()
    b = read_matrix_csv(parts[1])[0].ravel()
    return Bounds(a, b)


def cmd_bssmf(args, run):
    X, mask = _load_data(args)
    _check_rank(X, args.rank)
    bounds = _parse_bounds(args.bounds, X.shape[0])
    problem = BssmfProblem(X, args.rank, mask=mask, bounds=bounds, centering=args.centering)
    opts = _options(args)
    if args.starts > 1:
        pair, trace, seed = bssmf_multistart(problem, opts, args.starts)
    else:
        (pair, trace), seed = bssmf_fit(problem, opts), args.seed
    _write_factors(run, args, problem.X, problem.mask, pair, trace, [("best_seed", seed)])
    return EXIT_OK


def cmd_minvol(args, run):
    X, mask = _load_data(args)
    _check_rank(X, args.rank)
    model = MinvolModel(variant=args.variant, lam=args.lam, delta=args.delta, gamma=args.gamma,
                        autotune=args.autotune)
    pair, trace = minvol_fit(X, mask, model, _options(args), warm_start_iters=args.warm_start_iters)
    extra = [("lambda", trace.flags.get("final_lam", float("nan")))]
    if args.subcommand == "minvol-complete":
        write_matrix_csv(run.path("X_completed.csv"), pair.W @ pair.H)
        if args.truth:
            truth, hidden = read_matrix_csv(args.truth)
            if hidden is not None or truth.shape != X.shape:
                raise InputError("--truth must be a complete matrix of the input's shape")
            full = np.ones(X.shape) if mask is None else mask
            extra.append(("rmse_unobserved", rmse_unobserved(truth, pair.W, pair.H, full)))
    _write_factors(run, args, X, mask, pair, trace, extra)
    return EXIT_OK


def cmd_maxvol(args, run):
    X, mask = _load_data(args)
    if mask is not None:
        raise InputError(f"{args.subcommand} needs a complete matrix")
    _check_rank(X, args.rank)
    normalized = args.subcommand == "nmaxvol"
    model = MaxvolModel(lam=args.lam, delta=args.delta, normalized=normalized,
                        algorithm="adgrad2" if normalized else ALGO_NAMES[args.algo],
                        rho=getattr(args, "rho", 0.01))
    pair, trace = maxvol_fit(X, model, _options(args))
    _write_factors(run, args, X, None, pair, trace)
    return EXIT_OK


def cmd_ssc(args, run):
    H, mask = read_matrix_csv(args.input)
    report = check_ssc1_necessary(H, tol=args.tol)
    lines = report.to_rows()
    print("\n".join(lines))
    if run.out_dir:
        with open(run.path("ssc.tsv"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen, "spa": cmd_spa, "bssmf": cmd_bssmf, "minvol": cmd_minvol,
    "minvol-complete": cmd_minvol, "maxvol": cmd_maxvol, "nmaxvol": cmd_maxvol, "ssc-check": cmd_ssc,
}


# ---------------------------------------------------------------- parser

def _shared(p, rank_required=True, data=True):
    g = p.add_argument_group("shared options")
    if data:
        g.add_argument("--input", required=True, help="CSV data matrix")
        g.add_argument("--mask", help="CSV observation weights in [0, 1]")
        g.add_argument("--missing-nan", action="store_true", help="treat nan cells as missing")
    g.add_argument("--rank", type=_positive_int, required=rank_required, default=None)
    g.add_argument("--seed", type=_nonneg_int, default=0)
    g.add_argument("--out-dir", help="directory for outputs and manifest.json")


def _budgets(p, outer=500, inner=20):
    p.add_argument("--outer", type=_positive_int, default=outer, help="outer iterations")
    p.add_argument("--inner", type=_positive_int, default=inner, help="inner iterations per block")
    p.add_argument("--trace", action="store_true", help="write trace.tsv")
    p.add_argument("--maps", type=_maps, help="write one WxH PGM abundance map per row of H")


def build_parser():
    parser = argparse.ArgumentParser(prog="volmf", description="Volume-based matrix factorizations.")
    parser.add_argument("--version", action="version", version=f"volmf {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("gen", help="generate synthetic data or a literal fixture")
    _shared(p, rank_required=False, data=False)
    p.add_argument("--kind", choices=("completion", "separable", "dirichlet", "fixture"),
                   default="completion")
    p.add_argument("--name", help="fixture name (--kind fixture)")
    p.add_argument("--m", type=_positive_int, default=200)
    p.add_argument("--n", type=_positive_int, default=200)
    p.add_argument("--h-zero-fraction", type=float, default=0.8)
    p.add_argument("--missing-fraction", type=float, default=0.8)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--concentration", type=float, default=0.2)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("spa", help="separable column selection (SPA / RandSPA)")
    _shared(p)
    p.add_argument("--nu", type=_nonneg_int, default=0, help="columns of Q; 0 means m")
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--runs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_spa)

    p = sub.add_parser("bssmf", help="bounded simplex-structured factorization")
    _shared(p)
    _budgets(p)
    p.add_argument("--bounds", default="auto", help='"auto", "a,b" scalars or "aFile,bFile"')
    p.add_argument("--centering", choices=("none", "global", "row_wise"), default="none")
    p.add_argument("--starts", type=_positive_int, default=1, help="random starts (seeds seed..)")
    p.set_defaults(func=cmd_bssmf)

    for name, variant in (("minvol", "minvol"), ("minvol-complete", "minvol_complete")):
        p = sub.add_parser(name, help=f"minimum-volume NMF ({variant})")
        _shared(p)
        _budgets(p)
        p.add_argument("--variant", choices=VARIANTS, default=variant)
        p.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="volume weight; default balances it against the initial fit")
        p.add_argument("--delta", type=float, default=1.0)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--autotune", action="store_true")
        p.add_argument("--warm-start-iters", type=_nonneg_int, default=500)
        if name == "minvol-complete":
            p.add_argument("--truth", help="complete CSV used to report the hidden-entry RMSE")
        p.set_defaults(func=cmd_minvol)

    p = sub.add_parser("maxvol", help="maximum-volume NMF")
    _shared(p)
    _budgets(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--algo", choices=tuple(ALGO_NAMES), default="adgrad")
    p.add_argument("--rho", type=float, default=0.01)
    p.set_defaults(func=cmd_maxvol)

    p = sub.add_parser("nmaxvol", help="normalized maximum-volume NMF")
    _shared(p)
    _budgets(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=cmd_maxvol)

    p = sub.add_parser("ssc-check", help="necessary tests for the sufficiently scattered condition")
    p.add_argument("--input", required=True, help="CSV nonnegative matrix (r x n)")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_ssc)

    p = sub.add_parser("replay", help="rerun a manifest and compare output hashes")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True, help="fresh directory for the rerun")
    p.set_defaults(func=None)
    return parser


# ---------------------------------------------------------------- driver

def _strip_timing(path):
    """Digest of a TSV with its ``elapsed_s`` column removed."""
    h = hashlib.sha256()
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n").split("\t") for ln in fh]
    keep = [i for i, name in enumerate(lines[0]) if name != "elapsed_s"]
    for cells in lines:
        h.update(("\t".join(cells[i] for i in keep) + "\n").encode())
    return h.hexdigest()


def _execute(args, argv):
    run = _Run(args.out_dir)
    t0 = time.perf_counter()
    code = args.func(args, run)
    if not run.out_dir:
        return code
    options = {k: v for k, v in vars(args).items() if k != "func"}
    inputs = {}
    for key in ("input", "mask", "truth"):
        path = options.get(key)
        if path:
            options[key] = os.path.abspath(path)
            inputs[key] = {"path": options[key], "sha256": file_sha256(path)}
    if isinstance(options.get("bounds"), str) and options["bounds"] != "auto":
        parts = options["bounds"].split(",")
        if all(os.path.exists(p) for p in parts):
            options["bounds"] = ",".join(os.path.abspath(p) for p in parts)
    outputs = {}
    timing = {}
    for name in run.outputs:
        path = os.path.join(run.out_dir, name)
        outputs[name] = file_sha256(path)
        if name in run.timing:
            timing[name] = _strip_timing(path)
    manifest = RunManifest(
        subcommand=args.subcommand, argv=list(argv), options=options, inputs=inputs,
        outputs=outputs, timing_outputs=timing, seed=int(options.get("seed", 0)),
        version=__version__, wall_time_s=time.perf_counter() - t0, notes=run.notes,
    )
    manifest.save(os.path.join(run.out_dir, MANIFEST_NAME))
    return code


def replay(manifest_path, out_dir):
    """Rerun a manifest into ``out_dir``.

    Returns
    -------
    mismatches : list of str
        Output files whose content differs from the recorded run (files with
        a wall-clock column are compared with that column removed).
    """
    man = RunManifest.load(manifest_path)
    if os.path.abspath(out_dir) == os.path.abspath(os.path.dirname(manifest_path)):
        raise InputError("replay needs a different --out-dir than the recorded run")
    for key, rec in man.inputs.items():
        if file_sha256(rec["path"]) != rec["sha256"]:
            raise InputError(f"input {key} changed since the recorded run: {rec['path']}")
    if man.subcommand not in COMMANDS:
        raise InputError(f"manifest names an unknown subcommand {man.subcommand!r}")
    args = argparse.Namespace(**man.options)
    args.out_dir = out_dir
    args.func = COMMANDS[man.subcommand]
    _execute(args, ["replay", manifest_path])
    bad = []
    for name, digest in man.outputs.items():
        path = os.path.join(out_dir, name)
        if not os.path.exists(path):
            bad.append(name)
        elif name in man.timing_outputs:
            if _strip_timing(path) != man.timing_outputs[name]:
                bad.append(name)
        elif file_sha256(path) != digest:
            bad.append(name)
    return bad


def cli_dispatch(argv=None):
    """Parse ``argv``, run the subcommand and return the exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.subcommand == "replay":
                bad = replay(args.manifest, args.out_dir)
                if bad:
                    print(f"replay mismatch: {', '.join(sorted(bad))}", file=sys.stderr)
                    return EXIT_MISMATCH
                print("replay reproduced all outputs")
                return EXIT_OK
            return _execute(args, argv)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"volmf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, MaskResampleExhausted, VolmfError, OSError) as exc:
        print(f"volmf: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main():
    sys.exit(cli_dispatch())
