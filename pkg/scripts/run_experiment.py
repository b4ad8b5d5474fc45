"""Run one or more experiment configs and print a per-n summary.

Usage: python3 scripts/run_experiment.py scripts/configs/mm1_theorem.json [...]
"""
import argparse
import logging

from stein_queues.harness import ExperimentConfig, run_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+", help="JSON config files")
    ap.add_argument("--output", help="override the output stem (single config only)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    status = 0
    for path in args.configs:
        cfg = ExperimentConfig.from_json(path)
        report = run_experiment(cfg)
        print(f"== {path} ({cfg.model})")
        print(f"{'n':>6} {'stein':>9} {'term1':>9} {'term2':>9} {'se':>8} {'term3':>9}")
        for r in report.rows:
            print(f"{r['n']:>6} {r['stein_bound']:9.4f} {r['term1']:9.4f} {r['term2']:9.4f} "
                  f"{r['term2_se']:8.4f} {r['term3']:9.4f}")
        print("criteria:", ", ".join(f"{k}={'PASS' if v else 'FAIL'}"
                                     for k, v in sorted(report.criteria.items())))
        print(f"fit exponent {report.fit['exponent']:.3f}, envelope c {report.fit['envelope_c']:.3f}")
        out = args.output or cfg.output
        if out:
            print("wrote", report.write(out))
        status |= 0 if report.passed else 1
    return status


if __name__ == "__main__":
    raise SystemExit(main())
