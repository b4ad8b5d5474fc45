"""Brownian interpolation gap in W_{eta,p} against n, with a power-law fit.

Usage: python3 scripts/brownian_gap.py --eta 0.1 --n 16 64 256 --reps 200
"""
import argparse
import math

from stein_queues.bounds import brownian_interpolation_gap
from stein_queues.harness import rate_fit


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eta", type=float, default=0.1)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--n", type=int, nargs="+", default=[16, 64, 256])
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--refinement", type=int, default=64)
    ap.add_argument("--seed", type=int, default=1212)
    args = ap.parse_args()
    points = []
    for n in args.n:
        est = brownian_interpolation_gap(args.eta, args.p, n, args.reps, args.seed,
                                         refinement=args.refinement)
        h = 1.0 / n
        # small-eta shape of the norm, which carries a log n factor at moderate n
        shape = math.sqrt(h * ((h ** (-2 * args.eta) - 1) / (2 * args.eta) + 1))
        print(f"n={n:>5}  E||pi_n B - B|| = {est.value:.5f} +- {est.se:.5f}  ratio to shape {est.value / shape:.3f}")
        points.append((n, est.value))
    fit = rate_fit(points, shape="power")
    print(f"fitted slope {fit.exponent:.3f} (asymptotic theory {-(0.5 - args.eta):.3f})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
