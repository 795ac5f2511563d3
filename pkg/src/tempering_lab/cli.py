"""Command-line entry point: ``tempering-lab <command> [flags]``.

Exit codes: 0 success, 1 runtime or solver failure (or a failed gate),
2 usage or schema error.
"""
import argparse
import json
import math
import sys

import numpy as np

from . import rules as R
from .errors import ConfigError, ConvergenceError, DomainError, NoSolutionError, ShapeError
from .harness import (DEFAULT_SEED, THREADS_ENV, ExperimentConfig, RuleSpec, bound_audit,
                      equivalence_sweep, resolve_threads, run_sweep)
from .model import ErrorCounts, load_instance
from .tempering import default_grid, dump_curves_json, emit_tempering_grid, write_curves_csv
from .verify import SUITES, five_hypothesis_instance, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

CURVES_HELP = """\
columns of the CSV:
  lambda  regularization strength
  l_star  error of the best competitor posterior
  ell     worst-case limiting population error of the entropy-regularized
          rule at that lambda (always >= l_star; below 1/2 means tempered)
For lambda < 1 the L* at which ell reaches 1/2 is printed; it equals H^-1(lambda).
"""

SWEEP_HELP = """\
sweep.csv columns, one row per sample size:
  m, lambda            sample size and the schedule's regularization there
  trials               datasets drawn at this m
  mean_pop_error       Monte Carlo estimate of the expected population error of
                       the learned posterior (the limiting-error quantity)
  std_error            its standard error, sample std / sqrt(trials)
  mean_mass_h0         mean posterior weight on the good hypothesis h0
  std_error_mass       its standard error
  mean_tv, std_error_tv  mean total variation to compare_rule (when requested)
sweep.json holds the config hash, seed, runtimes and margins.
"""

AUDIT_HELP = """\
audit.csv adds to the sweep columns:
  rhs                   right side of the entropy-transformed PAC-Bayes bound
                        (competitor entropy plus complexity and concentration terms)
  mean_lhs, max_lhs     T_lambda of the learned posterior's population error
  violations            trials with lhs > rhs
  bound_violation_rate  violations / trials; the gate passes when <= delta
"""

EQUIV_HELP = """\
equivalence.csv columns: m, lambda, trials, mean_tv (mean total variation between
the two rules' posteriors on shared datasets), std_error_tv. The asymptotic
equivalence of the Bayes and profile posteriors predicts mean_tv shrinking in m.
Rule names: mdl, empirical_bayes, profile, bayes:uniform, bayes:p_lambda.
"""

POSTERIOR_HELP = """\
output columns, one row per hypothesis:
  index, prior   position in the class and normalized prior weight
  count          training errors of that hypothesis
  weight         posterior weight; log2_weight is its base-2 logarithm
followed by one JSON line with the provenance and, for empirical_bayes, the fixed-point
diagnostics (self-consistent inverse temperature, residual, degenerate flag).
"""

VERIFY_HELP = """\
suites: kernels (entropy/KL primitives), tempering (limiting-error calculus),
gibbs (posteriors vs. brute-force lattice search), equivalence (Bayesian
interpretation ladder and TV trends), regimes (overfitting/underfitting tags).
Prints one JSON object per check; exit 0 iff all pass.
"""


def _float_list(text):
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _int_list(text):
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from None


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer seed: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _rule(text):
    name, _, prior = text.partition(":")
    try:
        if name == "bayes":
            return RuleSpec("bayes", prior or "uniform")
        if prior:
            raise ConfigError(f"rule {name!r} takes no eta prior")
        return RuleSpec(name)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    fmt = argparse.RawDescriptionHelpFormatter
    p = argparse.ArgumentParser(prog="tempering-lab", description=__doc__, formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, threads=True):
        if seed:
            sp.add_argument("--seed", type=_seed, default=None,
                            help=f"master seed (default {DEFAULT_SEED:#x}; overrides the config)")
        if threads:
            sp.add_argument("--threads", type=int, default=None,
                            help=f"worker threads (default: all cores; {THREADS_ENV} overrides)")

    c = sub.add_parser("curves", help="emit limiting-error curves", epilog=CURVES_HELP, formatter_class=fmt)
    c.add_argument("--lambdas", type=_float_list, required=True, help="comma or space separated lambda values")
    c.add_argument("--grid-min", type=float, default=0.001)
    c.add_argument("--grid-max", type=float, default=0.499)
    c.add_argument("--points", type=int, default=512)
    c.add_argument("--out", help="CSV path (default: standard output)")
    c.add_argument("--json", dest="json_out", help="optional JSON envelope with the grid spec and crossings")

    s = sub.add_parser("sweep", help="Monte Carlo sweep over a sample-size grid", epilog=SWEEP_HELP,
                       formatter_class=fmt)
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", required=True)
    common(s)

    a = sub.add_parser("audit", help="bound-violation audit for the empirical-Bayes rule", epilog=AUDIT_HELP,
                       formatter_class=fmt)
    a.add_argument("--config", required=True)
    a.add_argument("--out-dir", required=True)
    a.add_argument("--delta", type=float, default=None, help="confidence level (default: config or 0.05)")
    common(a)

    e = sub.add_parser("equivalence", help="TV trajectory between two rules", epilog=EQUIV_HELP,
                       formatter_class=fmt)
    e.add_argument("--instance", help="instance JSON (default: the fixed five-hypothesis class)")
    e.add_argument("--m-grid", type=_int_list, default=[100, 1000, 10000])
    e.add_argument("--pair", type=_rule, nargs=2, metavar="RULE", default=None)
    e.add_argument("--lambda", dest="lam", type=float, default=1.0)
    e.add_argument("--trials", type=int, default=200)
    e.add_argument("--out-dir", required=True)
    e.add_argument("--expect-decreasing", action="store_true", help="exit 1 unless mean TV strictly decreases")
    common(e)

    q = sub.add_parser("posterior", help="posterior of one rule on one dataset", epilog=POSTERIOR_HELP,
                       formatter_class=fmt)
    q.add_argument("--instance", required=True)
    q.add_argument("--counts", type=_int_list, nargs="+", required=True,
                   help="error count of each hypothesis (space or comma separated)")
    q.add_argument("--m", type=int, required=True, help="sample size")
    q.add_argument("--rule", type=_rule, required=True)
    q.add_argument("--lambda", dest="lam", type=float, default=1.0)

    v = sub.add_parser("verify", help="run a property battery", epilog=VERIFY_HELP, formatter_class=fmt)
    v.add_argument("--suite", choices=SUITES, required=True)
    common(v, threads=False)
    return p


# ----------------------------------------------------------------- commands

def cmd_curves(args, out):
    if not args.lambdas:
        raise _Usage("--lambdas needs at least one value")
    for lam in args.lambdas:
        if lam == 0:
            raise DomainError("lambda = 0 is the unregularized limit, where the rule overfits "
                              "catastrophically and no limiting-error curve exists; use lambda > 0")
        if not (lam > 0 and math.isfinite(lam)):
            raise DomainError(f"lambda must be finite and > 0, got {lam}")
    grid = default_grid(args.grid_min, args.grid_max, args.points)
    curves = emit_tempering_grid(args.lambdas, grid)
    if args.out:
        with open(args.out, "w") as fh:
            write_curves_csv(curves, fh)
        note = out
    else:
        write_curves_csv(curves, out)
        note = sys.stderr
    for cv in curves:
        if cv.crossing is not None:
            print(f"crossing lambda={cv.lam:.12g} l_star={cv.crossing:.12g}", file=note)
    if args.json_out:
        spec = {"lo": args.grid_min, "hi": args.grid_max, "points": args.points}
        with open(args.json_out, "w") as fh:
            dump_curves_json(curves, fh, spec)
    return EXIT_OK


def _load_cfg(args):
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "master_seed": args.seed})
    return cfg


def cmd_sweep(args, out):
    cfg = _load_cfg(args)
    rep = run_sweep(cfg, threads=resolve_threads(args.threads))
    paths = rep.write(args.out_dir, "sweep")
    print(json.dumps({"csv": paths[0], "summary": paths[1], "config_hash": rep.config_hash}), file=out)
    return EXIT_OK


def cmd_audit(args, out):
    cfg = _load_cfg(args)
    rep = bound_audit(cfg, args.delta, threads=resolve_threads(args.threads))
    paths = rep.write(args.out_dir, "audit")
    status = "PASS" if rep.meta["passed"] else "FAIL"
    print(json.dumps({"status": status, "violation_rate": rep.meta["violation_rate"],
                      "delta": rep.meta["delta"], "csv": paths[0], "summary": paths[1]}), file=out)
    return EXIT_OK if rep.meta["passed"] else EXIT_FAIL


def cmd_equivalence(args, out):
    inst = load_instance(args.instance) if args.instance else five_hypothesis_instance()
    pair = args.pair or (RuleSpec("bayes", "uniform"), RuleSpec("profile"))
    if args.trials < 1:
        raise _Usage("--trials must be >= 1")
    grid = args.m_grid
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise _Usage("--m-grid must be non-empty and strictly increasing")
    rep = equivalence_sweep(inst, grid, tuple(pair), lam=args.lam, trials=args.trials,
                            seed=DEFAULT_SEED if args.seed is None else args.seed,
                            threads=resolve_threads(args.threads))
    paths = rep.write(args.out_dir, "equivalence")
    dec = rep.meta["strictly_decreasing"]
    print(json.dumps({"pair": rep.meta["pair"], "mean_tv": [r["mean_tv"] for r in rep.rows],
                      "strictly_decreasing": dec, "csv": paths[0]}), file=out)
    return EXIT_FAIL if args.expect_decreasing and not dec else EXIT_OK


def cmd_posterior(args, out):
    inst = load_instance(args.instance)
    hc = inst.hclass
    counts = [k for chunk in args.counts for k in chunk]
    if len(counts) != len(hc):
        raise _Usage(f"--counts has {len(counts)} entries but the instance has {len(hc)} hypotheses")
    ec = ErrorCounts(args.m, np.asarray(counts))
    diag = None
    rule = args.rule
    if rule.name == "empirical_bayes":
        q, diag = R.empirical_bayes_posterior(ec, hc, args.lam)
    else:
        q = rule.apply(ec, hc, args.lam)
    out.write(R.posterior_csv(q, ec, hc, diag))
    return EXIT_OK


def cmd_verify(args, out):
    seed = DEFAULT_SEED if args.seed is None else args.seed
    checks = run_suite(args.suite, seed)
    for c in checks:
        print(json.dumps(c.to_dict(), sort_keys=True), file=out)
    ok = all(c.passed for c in checks)
    print(json.dumps({"suite": args.suite, "status": "PASS" if ok else "FAIL"}), file=out)
    return EXIT_OK if ok else EXIT_FAIL


class _Usage(Exception):
    pass


COMMANDS = {"curves": cmd_curves, "sweep": cmd_sweep, "audit": cmd_audit, "equivalence": cmd_equivalence,
            "posterior": cmd_posterior, "verify": cmd_verify}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, out)
    except (_Usage, ConfigError) as exc:
        print(f"tempering-lab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ShapeError, NoSolutionError, ConvergenceError, OSError) as exc:
        print(f"tempering-lab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
