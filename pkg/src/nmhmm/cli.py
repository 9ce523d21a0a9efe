"""Command-line interface.

Exit codes: 0 success (or accepted discretization), 3 discretization
rejected by QC (outputs still written), 1 any error.
"""

import argparse
import json
import logging
import os
import sys
import time

from . import __version__
from .distributions import NBMixtureParams
from .errors import NMHMMError
from .manifest import Manifest, file_digest, read_manifest
from .nbmix import fit_nb_mixture
from .pipeline import FitConfig, fit
from .report import histogram_table, write_histogram
from .simulate import parse_scenario, simulate_dataset
from .trackio import (
    CountMatrix,
    apply_mask,
    binning_mismatch,
    read_count_table,
    read_mask,
    write_calls,
    write_count_table,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 3

logger = logging.getLogger("nmhmm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser():
    parser = _Parser(
        prog="nmhmm",
        description="Present/absent discretization of binned ChIP-seq profiles against a negative control.",
        epilog="exit codes: 0 success or accepted, 3 rejected by QC (outputs still written), 1 error",
    )
    parser.add_argument("--version", action="version", version=f"nmhmm {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("call", help="discretize profiles against a negative control")
    p.add_argument("--control", required=True, help="one-column Count Table of the control")
    p.add_argument("--profiles", required=True, help="Count Table of the ChIP profiles")
    p.add_argument("--window-size", required=True, type=_positive_int)
    p.add_argument("--mask", help="windows to exclude (chrom, start, end)")
    p.add_argument("--states", type=_positive_int, default=3)
    p.add_argument("--qc-threshold", type=float, default=0.09,
                   help="calibrated for 300 bp windows (default 0.09)")
    p.add_argument("--restarts", type=_positive_int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--max-iter", type=_positive_int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--control-fit", help="reuse a fit written by fit-control")
    p.add_argument("--figure", help="also render the first profile with calls to this image")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_call)

    p = sub.add_parser("fit-control", help="fit the NB mixture to a control track")
    p.add_argument("--control", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=_positive_int, default=500)
    p.set_defaults(func=cmd_fit_control)

    p = sub.add_parser("simulate", help="write a synthetic dataset with planted states")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("histogram", help="control count histogram with Poisson and NB-mixture fits")
    p.add_argument("--control", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-count", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=_positive_int, default=500)
    p.add_argument("--figure", help="also render the histogram to this image")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def _read_control(path):
    cm = read_count_table(path)
    if cm.r != 1:
        raise NMHMMError(f"{path}: control table must have exactly one count column, found {cm.r}")
    return cm


def write_control_fit(report, path, header=None):
    p = report.params
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write("# " + header + "\n")
        for key, val in (
            ("alpha", repr(p.alpha)), ("theta", repr(p.theta)), ("p", repr(p.p)), ("q", repr(p.q)),
            ("iterations", str(report.iterations)),
            ("log_likelihood", repr(report.log_likelihood)),
            ("converged", "true" if report.converged else "false"),
            ("degenerate", "true" if report.degenerate else "false"),
        ):
            fh.write(f"{key}={val}\n")


def read_control_fit(path):
    kv = read_manifest(path)
    try:
        return NBMixtureParams(float(kv["alpha"]), float(kv["theta"]), float(kv["p"]), float(kv["q"]))
    except KeyError as exc:
        raise NMHMMError(f"{path}: missing key {exc}") from None
    except ValueError as exc:
        raise NMHMMError(f"{path}: {exc}") from None


def cmd_call(args, argv):
    started = time.perf_counter()
    control = _read_control(args.control)
    profiles = read_count_table(args.profiles)
    for name, cm in (("control", control), ("profiles", profiles)):
        if cm.window_size != args.window_size:
            raise NMHMMError(
                f"{name} windows are {cm.window_size} bp but --window-size is {args.window_size}"
            )
    msg = binning_mismatch(control, profiles)
    if msg:
        raise NMHMMError(msg)
    man = Manifest("call", argv)
    man["input.control.sha256"] = file_digest(args.control)
    man["input.profiles.sha256"] = file_digest(args.profiles)
    if args.mask:
        intervals = read_mask(args.mask)
        man["input.mask.sha256"] = file_digest(args.mask)
        control = apply_mask(control, intervals)
        profiles = apply_mask(profiles, intervals)
    control_fit = None
    if args.control_fit:
        control_fit = read_control_fit(args.control_fit)
        man["input.control_fit.sha256"] = file_digest(args.control_fit)
    cfg = FitConfig(
        m=args.states, tol=args.tol, max_iter=args.max_iter, restarts=args.restarts,
        qc_threshold=args.qc_threshold, seed=args.seed, threads=args.threads,
    )
    result = fit(control, profiles, cfg, control_fit=control_fit)

    cparams = getattr(result.control_fit, "params", result.control_fit)
    for key in ("m", "tol", "max_iter", "restarts", "anneal_noise", "qc_threshold", "inner_iters", "stay"):
        man[f"config.{key}"] = getattr(cfg, key)
    man["window_size"] = args.window_size
    man["windows"] = profiles.n
    man["profiles"] = list(profiles.names)
    man["seed"] = cfg.seed
    man["control.alpha"] = cparams.alpha
    man["control.theta"] = cparams.theta
    man["control.p"] = cparams.p
    man["control.q"] = cparams.q
    man["log_likelihood"] = result.log_likelihood
    man["best_restart"] = result.best_restart + 1
    man["target_state"] = result.target_state + 1
    man["present_windows"] = int(result.present_mask.sum())
    man["qc_score"] = result.qc_score
    man["accepted"] = result.accepted
    man["threads"] = cfg.threads

    header = man.header(qc_score=round(result.qc_score, 6), accepted=result.accepted,
                        states=cfg.m, seed=cfg.seed)
    write_calls(result, profiles, f"{args.out}.calls.bed", f"{args.out}.windows.tsv", header)
    if args.figure:
        from .plotting import plot_track

        plot_track(profiles, result, args.figure)
    man["elapsed_seconds"] = round(time.perf_counter() - started, 3)
    man.write(f"{args.out}.manifest")
    status = "accepted" if result.accepted else "REJECTED"
    print(f"qc_score={result.qc_score:.6f} threshold={cfg.qc_threshold} {status}")
    return EXIT_OK if result.accepted else EXIT_REJECTED


def cmd_fit_control(args, argv):
    control = _read_control(args.control)
    report = fit_nb_mixture(control.counts[:, 0], tol=args.tol, max_iter=args.max_iter)
    man = Manifest("fit-control", argv)
    man["input.control.sha256"] = file_digest(args.control)
    p = report.params
    man.update((("alpha", p.alpha), ("theta", p.theta), ("p", p.p), ("q", p.q),
                ("iterations", report.iterations), ("degenerate", report.degenerate)))
    write_control_fit(report, args.out, man.header())
    man.write(f"{args.out}.manifest")
    if report.degenerate:
        print("warning: degenerate mixture (one component carries almost all mass)", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args, argv):
    started = time.perf_counter()
    scenario = parse_scenario(args.scenario, seed=args.seed)
    counts, planted = simulate_dataset(scenario)
    man = Manifest("simulate", argv)
    man["input.scenario.sha256"] = file_digest(args.scenario)
    man["seed"] = scenario.seed
    man["windows"] = scenario.n
    man["states"] = scenario.m
    man["profiles"] = scenario.r - 1
    man["planted_target"] = scenario.planted_target + 1
    header = man.header(seed=scenario.seed, planted_target=scenario.planted_target + 1)
    write_count_table(counts, f"{args.out}.counts.tsv", header)
    truth = CountMatrix(
        counts.chroms, counts.starts, counts.ends, planted.states[:, None] + 1, ["state"],
        counts.window_size,
    )
    write_count_table(truth, f"{args.out}.truth.tsv", header)
    man["elapsed_seconds"] = round(time.perf_counter() - started, 3)
    man.write(f"{args.out}.manifest")
    return EXIT_OK


def cmd_histogram(args, argv):
    control = _read_control(args.control)
    y = control.counts[:, 0]
    report = fit_nb_mixture(y, tol=args.tol, max_iter=args.max_iter)
    table = histogram_table(y, report.params, args.max_count)
    man = Manifest("histogram", argv)
    man["input.control.sha256"] = file_digest(args.control)
    p = report.params
    header = man.header(
        n=table.n, mean=table.mean, variance=table.variance,
        alpha=p.alpha, theta=p.theta, p=p.p, q=p.q,
        chi2_poisson=table.chi2_poisson, chi2_mixture=table.chi2_mixture,
    )
    man.update((("alpha", p.alpha), ("theta", p.theta), ("p", p.p), ("q", p.q),
                ("chi2_poisson", table.chi2_poisson), ("chi2_mixture", table.chi2_mixture)))
    write_histogram(table, args.out, header)
    man.write(f"{args.out}.manifest")
    if args.figure:
        from .plotting import plot_histogram

        plot_histogram(table, args.figure)
    return EXIT_OK


def cmd_replay(args, argv):
    recorded = read_manifest(args.manifest)
    if "argv" not in recorded:
        raise NMHMMError(f"{args.manifest}: no recorded command line")
    return main(json.loads(recorded["argv"]))


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    level = logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except (NMHMMError, OSError, ValueError) as exc:
        msg = str(exc)
        if not os.environ.get("NO_COLOR") and sys.stderr.isatty():
            msg = f"\033[31m{msg}\033[0m"
        print(f"nmhmm {args.command}: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
