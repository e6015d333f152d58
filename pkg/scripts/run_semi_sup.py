"""Semi-supervised runs: 0, 1 or 9 consistency updates per labelled batch.

Usage: python scripts/run_semi_sup.py --steps 1000 --K 4
"""
import argparse
import json
from pathlib import Path

from predictron import harness as H
from predictron.config import ExperimentSpec
from predictron.plots import plot_emit


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=1_000)
    ap.add_argument("--K", type=int, default=4)
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--eval-every", type=int, default=100)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="runs/semi")
    args = ap.parse_args()
    spec = ExperimentSpec(name="semi", steps=args.steps, eval_every=args.eval_every,
                          seeds=[int(s) for s in args.seeds.split(",")]).with_model(K=args.K)
    series = H.run_semi_supervised(spec, args.out, args.threads)
    out = Path(args.out)
    curves = {name: {"labelled": s.labelled().tolist(), "median": s.median().tolist(),
                     "final_per_seed": s.final_per_seed()} for name, s in series.items()}
    (out / "summary.json").write_text(json.dumps(curves, indent=1))
    plot_emit(series, out / "curves.svg", logy=True, title="consistency updates per label")
    for name, c in curves.items():
        print(name, " ".join(f"{v:.3f}" for v in c["median"]))


if __name__ == "__main__":
    main()
