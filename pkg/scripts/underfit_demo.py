"""Two hypotheses, lambda = c*m: the posteriors stall near the prior mixture.

Compares the Monte Carlo error of the profile and empirical-Bayes rules with
their closed-form limits.
"""
import argparse

import numpy as np

from tempering_lab.harness import DEFAULT_SEED, RuleSpec
from tempering_lab.instances import (LowerBoundSpec, SeededRng, build_lb_instance, mixture_error,
                                     qstar_formula_pacbayes, qstar_formula_profile, sample_error_counts)
from tempering_lab.model import population_loss


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=10_000)
    ap.add_argument("--c", type=float, default=100.0, help="lambda = c * m")
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
    args = ap.parse_args()
    lstar, lprime, lam = 0.1, 0.3, args.c * args.m
    inst = build_lb_instance(LowerBoundSpec(lstar, lprime, "two_hypothesis", args.m, lam))
    rng = SeededRng(args.seed)
    for rule, formula in ((RuleSpec("profile"), qstar_formula_profile),
                          (RuleSpec("empirical_bayes"), qstar_formula_pacbayes)):
        errs = np.array([population_loss(rule.apply(sample_error_counts(inst, args.m, rng.stream(t)),
                                                    inst.hclass, lam), inst.hclass)
                         for t in range(args.trials)])
        q = formula(lstar, lprime, args.m, lam)
        se = errs.std(ddof=1) / np.sqrt(errs.size)
        print(f"{rule.label():<16} mean error {errs.mean():.6f} +- {se:.1e}   "
              f"predicted {mixture_error(q, lstar, lprime):.6f}  (q* = {q:.6f})")


if __name__ == "__main__":
    main()
