"""Variant cube (8 corners of r/gamma, lambda, usage weighting) or architecture cube on 8x8 mazes.

Usage: python scripts/run_cube.py --kind variant --steps 10000 --out runs/cube
"""
import argparse
import json
from pathlib import Path

from predictron import harness as H
from predictron.config import ExperimentSpec
from predictron.plots import plot_emit


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--kind", choices=("variant", "architecture"), default="variant")
    ap.add_argument("--steps", type=int, default=10_000)
    ap.add_argument("--K", type=int, default=8)
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="runs/cube")
    args = ap.parse_args()
    spec = ExperimentSpec(name=args.kind, steps=args.steps, eval_every=max(args.steps // 20, 1),
                          seeds=[int(s) for s in args.seeds.split(",")]).with_model(K=args.K)
    run = H.run_variant_cube if args.kind == "variant" else H.run_architecture_cube
    series = run(spec, args.out, args.threads)
    out = Path(args.out)
    summary = {name: s.final_median() for name, s in series.items()}
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    plot_emit(series, out / "curves.svg", logy=True, title=f"{args.kind} cube")
    for name, v in sorted(summary.items(), key=lambda kv: kv[1]):
        print(f"{v:.4f}  {name}")


if __name__ == "__main__":
    main()
