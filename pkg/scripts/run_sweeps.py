"""Depth sweep (predictron vs deep network over K) and capacity sweep (hidden width).

Usage: python scripts/run_sweeps.py depth --depths 2,4,8,16 --steps 5000
       python scripts/run_sweeps.py capacity --steps 5000
"""
import argparse
import json
from pathlib import Path

from predictron import harness as H
from predictron.config import ExperimentSpec
from predictron.plots import plot_emit


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("sweep", choices=("depth", "capacity"))
    ap.add_argument("--depths", default="2,4,8,16")
    ap.add_argument("--steps", type=int, default=5_000)
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    out = Path(args.out or f"runs/{args.sweep}")
    spec = ExperimentSpec(name=args.sweep, steps=args.steps, eval_every=max(args.steps // 20, 1),
                          seeds=[int(s) for s in args.seeds.split(",")])
    if args.sweep == "depth":
        depths = tuple(int(k) for k in args.depths.split(","))
        series = H.run_depth_sweep(spec, out, args.threads, depths)
    else:
        series = H.run_capacity_sweep(spec, out, args.threads)
    rows = {name: {"final_median_rmse": s.final_median(), "params": s.params} for name, s in series.items()}
    (out / "summary.json").write_text(json.dumps(rows, indent=1))
    plot_emit(series, out / "curves.svg", logy=True, title=f"{args.sweep} sweep")
    for name, r in rows.items():
        print(f"{r['final_median_rmse']:.4f}  {r['params']:>8}  {name}")


if __name__ == "__main__":
    main()
