"""Train a pool predictron (and optionally the plain deep network), then score shot selection.

Usage: python scripts/run_pool_decision.py --steps 3000 --baseline
"""
import argparse
import json
from pathlib import Path

from predictron import harness as H
from predictron.config import ExperimentSpec


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=3_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--positions", type=int, default=20)
    ap.add_argument("--baseline", action="store_true", help="also train and score the deep network")
    ap.add_argument("--out", default="runs/pool")
    args = ap.parse_args()
    spec = ExperimentSpec(name="pool", domain="pool", steps=args.steps, eval_every=max(args.steps // 10, 1))
    res = H.train_run(spec, args.seed, args.out)
    base = None
    if args.baseline:
        bspec = spec.replace(name="pool-deepnet").with_model(**H.BASELINE_CORNER)
        base = H.train_run(bspec, args.seed, args.out).net
    out = H.decision_eval(res.net, res.domain.scale, n_positions=args.positions, baseline_net=base)
    report = {k: v for k, v in vars(out).items() if k != "per_position"}
    Path(args.out, "decision.json").write_text(json.dumps(report, indent=1))
    print(json.dumps(report, indent=1))


if __name__ == "__main__":
    main()
