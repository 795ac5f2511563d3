"""Print the four-regime classification table (a few minutes on one core)."""
import argparse

from tempering_lab.harness import DEFAULT_SEED, default_regime_cases, regime_summary


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args()
    rep = regime_summary(default_regime_cases(), seed=args.seed, threads=args.threads)
    fmt = "{case:<14} {m:>6} {lambda:>10.4g} {terminal_error:>8.4f} {tag:<22} {expected:<22} {match}"
    for row in rep.rows:
        print(fmt.format(**row))
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(rep.to_csv())


if __name__ == "__main__":
    main()
