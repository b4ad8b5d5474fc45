"""Command line entry point: ``stein-queues {run,verify,fit}``.

The exit status is 0 exactly when every reported check passes.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from typing import Callable, List, Tuple

import numpy as np

from .errors import SteinQueuesError

Check = Tuple[str, bool, str]


# ------------------------------------------------------------ suites
def _suite_gram() -> List[Check]:
    from .queues import gamma_fn
    from .stein import MM1Variant, MMInftyVariant, build_family, gram_matrix

    out = []
    for lam, mu in [(1, 2), (1, 3), (2, 5)]:
        for n in (4, 16):
            g = gram_matrix(build_family(MM1Variant(lam, mu, 1.0), n=n))
            err = float(np.max(np.abs(g - np.eye(n))))
            out.append((f"mm1 identity lam={lam} mu={mu} n={n}", err <= 1e-13, f"err={err:.2e}"))
    for mu in (1, 2):
        fam = build_family(MMInftyVariant(1.0, mu), n=8)
        g = gram_matrix(fam)
        q = gram_matrix(fam, method="quadrature")
        off = float(np.max(np.abs(g - np.diag(np.diag(g)))))
        offq = float(np.max(np.abs(q - np.diag(np.diag(q)))))
        i = np.arange(8)
        diag = 8 * (gamma_fn((i + 1) / 8, 1.0, mu) - gamma_fn(i / 8, 1.0, mu))
        rel = float(np.max(np.abs(np.diag(g) / diag - 1)))
        out.append((f"mminf orthogonal mu={mu}", off <= 1e-13 and offq < 1e-8,
                    f"closed={off:.1e} quad={offq:.1e}"))
        out.append((f"mminf diagonal mu={mu}", rel <= 1e-12, f"rel={rel:.1e}"))
    return out


def _suite_appendix() -> List[Check]:
    from .stein import MMInftyVariant, appendix_b_quadrature, appendix_b_terms, build_family

    out = []
    for mu, n, i, j in [(1.0, 8, 1, 5), (2.0, 8, 0, 1), (3.0, 16, 4, 11), (0.5, 6, 2, 2)]:
        fam = build_family(MMInftyVariant(1.0, mu), n=n)
        closed = appendix_b_terms(i, j, fam)
        quad = appendix_b_quadrature(i, j, fam)
        worst = max(abs(closed[k] - quad[k]) / max(abs(quad[k]), 1e-12) for k in closed)
        out.append((f"Gram pieces mu={mu} n={n} ({i},{j})", worst <= 1e-6, f"rel={worst:.1e}"))
    return out


def _suite_bounds() -> List[Check]:
    from .bounds import chebyshev_tau_bound, lambert_w0, max_poisson_bound, max_poisson_objective

    out = []
    xs = np.array([-0.3, 0.1, 1.0, 10.0, 1e6])
    w = lambert_w0(xs)
    err = float(np.max(np.abs(w * np.exp(w) - xs) / np.abs(xs)))
    out.append(("lambert w0 inverse", err <= 1e-13, f"rel={err:.1e}"))
    for n in (1000, 5000):
        b = max_poisson_bound(n)
        u = np.linspace(1e-3, 10, 200001)
        grid = float(np.min(max_poisson_objective(u, n)))
        ok = b.value <= grid + 1e-9 and grid - b.value < 1e-6
        out.append((f"max-poisson W-form n={n}", ok, f"W={b.value:.6f} grid={grid:.6f}"))
    c = chebyshev_tau_bound(1.0, 100, 0.5)
    out.append(("chebyshev arithmetic", abs(c - 0.02) < 1e-15, f"{c}"))
    return out


def _suite_theta() -> List[Check]:
    from .paths import step_path, sup_distance
    from .queues import QueueParams, simulate_mminfty_trapeze
    from .rng import stream
    from .theta import theta_forward, theta_inverse

    gen = stream(7, 0)
    worst = 0.0
    for _ in range(20):
        k = int(gen.integers(1, 12))
        times = np.sort(gen.uniform(0, 1, k))
        f = step_path(1.0, gen.normal(), times, gen.normal(size=k))
        tau = float(gen.uniform(0.2, 3))
        worst = max(worst, sup_distance(theta_inverse(theta_forward(f, tau), tau), f))
    out = [("theta round trip", worst < 1e-10, f"sup={worst:.1e}")]
    params = QueueParams(1.0, 2.0, 50, 1.0)
    worst = 0.0
    for i in range(10):
        b = simulate_mminfty_trapeze(params, stream(11, i))
        worst = max(worst, sup_distance(b.Yn, theta_forward(b.Zn, 2.0).residual))
    out.append(("Y equals theta residual", worst < 1e-12, f"sup={worst:.1e}"))
    return out


def _suite_ppp() -> List[Check]:
    from .ppp import (CappedCount, ConstantFunctional, DivergenceFunctional, HomogeneousLine,
                      campbell_mecke_check, indicator_kernel)

    meas = HomogeneousLine(1.0, 5.0)
    u = indicator_kernel(0.2, 0.7)
    out = []
    for name, F in [("constant", ConstantFunctional(1.0)), ("capped count", CappedCount(4)),
                    ("divergence", DivergenceFunctional(u, meas))]:
        res = campbell_mecke_check(F, u, meas, 4000, 5)
        out.append((f"campbell-mecke {name}", res.agrees(3), f"gap={res.gap:.3g} se={res.combined_se:.3g}"))
    return out


SUITES = {"gram": _suite_gram, "appendixB": _suite_appendix, "bounds": _suite_bounds,
          "theta": _suite_theta, "ppp": _suite_ppp}


def _report(checks: List[Check]) -> int:
    for name, ok, detail in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return 0 if all(ok for _, ok, _ in checks) else 1


# ------------------------------------------------------------ commands
def cmd_run(args) -> int:
    from .harness import ExperimentConfig, run_experiment

    config = ExperimentConfig.from_json(args.config)
    if args.output:
        config = ExperimentConfig.from_dict({**config.to_dict(), "output": args.output})
    report = run_experiment(config)
    if config.output:
        path = report.write(config.output)
        print(f"report written to {path}")
    for r in report.rows:
        print(f"n={r['n']}: term1={r['term1']:.4g} term2={r['term2']:.4g}±{r['term2_se']:.2g} "
              f"term3={r['term3']:.4g} stein={r['stein_bound']:.4g}")
    checks = [(k, v["pass"], f"lhs={v['lhs']:.4g} rhs={v['rhs']:.4g}")
              for k, v in report.criteria.items()]
    return _report(checks)


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    checks: List[Check] = []
    for name in names:
        checks.extend(SUITES[name]())
    return _report(checks)


def _read_points(path: str, term: str):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SteinQueuesError(f"{path} has no rows")
    if "term" in rows[0]:
        rows = [r for r in rows if r["term"] == term]
        return [(float(r["n"]), float(r["value"])) for r in rows]
    key = "d" if "d" in rows[0] else "value"
    return [(float(r["n"]), float(r[key])) for r in rows]


def cmd_fit(args) -> int:
    from .harness import rate_fit

    fit = rate_fit(_read_points(args.input, args.term), args.shape)
    print(json.dumps({"exponent": fit.exponent, "c": fit.c, "shape": fit.shape,
                      "decaying": fit.decaying, "residuals": list(fit.residuals)}, indent=2))
    return 0 if fit.decaying else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stein-queues",
                                     description="Stein-method diffusion approximation toolkit for queues")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a rate experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--output", default=None, help="override the report path")
    run.set_defaults(func=cmd_run)
    ver = sub.add_parser("verify", help="run a closed-form verification suite")
    ver.add_argument("--suite", required=True, choices=sorted(SUITES) + ["all"])
    ver.set_defaults(func=cmd_verify)
    fit = sub.add_parser("fit", help="fit a decay rate to (n, d) points in a CSV file")
    fit.add_argument("--input", required=True)
    fit.add_argument("--term", default="total", help="term to fit for report CSVs")
    fit.add_argument("--shape", default="theorem", choices=["theorem", "power"])
    fit.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SteinQueuesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
