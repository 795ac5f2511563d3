"""Write the limiting-error curves for a handful of lambdas to a CSV."""
import argparse
import sys

from tempering_lab.tempering import default_grid, emit_tempering_grid, write_curves_csv

LAMBDAS = (0.25, 0.5, 1.0, 1.5, 2.0, 4.0, 8.0, 32.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="-")
    ap.add_argument("--points", type=int, default=200)
    args = ap.parse_args()
    curves = emit_tempering_grid(LAMBDAS, default_grid(0.001, 0.499, args.points))
    if args.out == "-":
        write_curves_csv(curves, sys.stdout)
    else:
        with open(args.out, "w") as fh:
            write_curves_csv(curves, fh)
    for cv in curves:
        if cv.crossing is not None:
            print(f"# lambda={cv.lam:g}: error reaches 1/2 at L*={cv.crossing:.6f}", file=sys.stderr)


if __name__ == "__main__":
    main()
