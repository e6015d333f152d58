"""Command-line entry point: ``predictron <command> [options]``.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 a failed
``eval --assert`` check.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import ConfigError, ExperimentSpec, load_config, load_config_with_run, parse_config_text
from .envs import maze, pool
from .io import SampleSet, load_checkpoint, write_manifest, write_samples
from .losses import Trainer
from .model import Predictron

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ASSERT = 0, 1, 2, 3


def _spec(args) -> ExperimentSpec:
    spec = load_config(args.config) if args.config else ExperimentSpec()
    if args.set:
        # overrides reuse the config parser, so they get the same validation
        text = "\n".join(args.set)
        over, _ = parse_config_text(text, "--set")
        keys = [s.split("=", 1)[0].strip() for s in args.set]
        spec = _merge(spec, over, keys)
    if args.seed is not None:
        spec = spec.replace(seeds=[args.seed])
    return spec


def _merge(spec: ExperimentSpec, over: ExperimentSpec, keys: list[str]) -> ExperimentSpec:
    model_keys = set(spec.model.to_dict())
    phys_keys = set(spec.physics.to_dict())
    for k in keys:
        if k in model_keys:
            spec = spec.with_model(**{k: getattr(over.model, k)})
        elif k in phys_keys:
            import dataclasses

            spec = spec.replace(physics=dataclasses.replace(spec.physics, **{k: getattr(over.physics, k)}))
        else:
            spec = spec.replace(**{k: getattr(over, k)})
    return spec


def load_run(run_dir):
    """(spec, seed, trainer, domain) restored from a run directory."""
    run_dir = Path(run_dir)
    if not (run_dir / "manifest.txt").exists():
        raise FileNotFoundError(f"no run manifest in {run_dir}")
    spec, run = load_config_with_run(run_dir / "manifest.txt")
    seed = int(run.get("seed", spec.seeds[0]))
    domain = harness.make_domain(spec)
    net = Predictron(harness.model_config(spec, domain), seed=0)
    trainer = Trainer(net, lr=spec.lr)
    harness.restore_checkpoint(load_checkpoint(run_dir / "checkpoint.bin"), trainer)
    return spec, seed, trainer, domain


def _print(obj) -> None:
    print(json.dumps(obj, indent=1, default=float))


def _summarise(series: dict, out: Path, title: str) -> None:
    from .plots import plot_emit

    rows = {name: {"final_median_rmse": s.final_median(), "per_seed": s.final_per_seed(),
                   "params": s.params} for name, s in series.items()}
    _print(rows)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(rows, indent=1, default=float))
    plot_emit(series, out / "curves.svg", title=title)


# commands ----------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    spec = _spec(args)
    seed = spec.seeds[0]
    rng = np.random.default_rng([seed, 99])
    out = Path(args.out or Path(args.out_dir) / f"{spec.domain}_seed{seed}.bin")
    out.parent.mkdir(parents=True, exist_ok=True)
    if spec.domain == "pool":
        xs, raw = pool.generate_dataset(rng, args.n, spec.pool_size, spec.physics)
        stats = pool.normalization_stats(raw, floor=pool.NORM_FLOOR) if args.n >= 2 else None
        task, size = 3, spec.pool_size
        extra = {f"physics.{k}": v for k, v in spec.physics.to_dict().items()}
        if stats is not None:
            extra.update(norm_scale=stats.scale, norm_degenerate=stats.degenerate.astype(int).tolist())
    else:
        task = maze.TASK_TRAJECTORY if spec.domain == "maze1" else maze.TASK_CONNECTIVITY
        xs, raw = maze.sample_batch(task, rng, args.n, spec.maze_size, spec.n_walls or None)
        size = spec.maze_size
        extra = {"n_walls": spec.n_walls or (maze.calibrated_walls(size) if task == 2 else 0)}
    write_samples(out, SampleSet(task, size, xs, raw))
    manifest = {"file": out.name, "task_id": task, "size": size, "count": args.n,
                "seed": seed, "rng_key": f"{seed},99", **extra}
    write_manifest(out.with_suffix(".txt"), {"dataset": manifest})
    print(f"wrote {args.n} samples to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.from_manifest:
        res = harness.reproduce_run(args.from_manifest, args.out_dir)
        _print(res.rows[-1])
        return EXIT_OK
    spec = _spec(args)
    series = harness.run_specs([spec], args.out_dir, args.threads)
    _print({"final_median_rmse": series[spec.name].final_median(),
            "per_seed": series[spec.name].final_per_seed()})
    return EXIT_OK


def cmd_eval(args) -> int:
    spec, seed, trainer, domain = load_run(args.run_dir)
    value = harness.evaluate(trainer.net, domain.eval_x, domain.eval_y)
    zero = domain.zero_rmse()
    _print({"rmse": value, "zero_predictor_rmse": zero})
    if args.assert_:
        limit = zero if args.max_rmse is None else args.max_rmse
        if not value < limit:
            print(f"FAIL: rmse {value:.6f} is not below {limit:.6f}", file=sys.stderr)
            return EXIT_ASSERT
        print(f"PASS: rmse {value:.6f} < {limit:.6f}")
    return EXIT_OK


def cmd_cube(args) -> int:
    spec = _spec(args)
    if args.kind == "variant":
        series = harness.run_variant_cube(spec, args.out_dir, args.threads)
    else:
        series = harness.run_architecture_cube(spec, args.out_dir, args.threads)
    _summarise(series, Path(args.out_dir), f"{args.kind} cube")
    return EXIT_OK


def cmd_depth_sweep(args) -> int:
    spec = _spec(args)
    depths = tuple(int(k) for k in args.depths.split(","))
    series = harness.run_depth_sweep(spec, args.out_dir, args.threads, depths)
    _summarise(series, Path(args.out_dir), "depth sweep")
    return EXIT_OK


def cmd_capacity_sweep(args) -> int:
    series = harness.run_capacity_sweep(_spec(args), args.out_dir, args.threads)
    _summarise(series, Path(args.out_dir), "capacity sweep")
    return EXIT_OK


def cmd_semi_sup(args) -> int:
    series = harness.run_semi_supervised(_spec(args), args.out_dir, args.threads)
    _summarise(series, Path(args.out_dir), "consistency updates")
    return EXIT_OK


def cmd_depth_analysis(args) -> int:
    spec, _, trainer, domain = load_run(args.run_dir)
    if spec.domain != "pool":
        raise ValueError("depth analysis needs a pool run")
    rows = harness.depth_analysis(trainer.net, domain.eval_x)
    out = Path(args.run_dir) / "depth.csv"
    harness.write_depth_csv(out, rows)
    spread = sum(r["d90"] - r["d10"] > 0 for r in rows)
    print(f"wrote {len(rows)} rows to {out}; {spread} predictions with interdecile range > 0")
    return EXIT_OK


def cmd_plan_dump(args) -> int:
    from .plots import plot_plan

    spec, _, trainer, domain = load_run(args.run_dir)
    if spec.domain != "maze1":
        raise ValueError("plan dumps need a trajectory-maze run")
    n = min(args.n, domain.eval_x.shape[0])
    raw_targets = domain.eval_y[:n] * domain.scale
    dump = harness.plan_dump(trainer.net, domain.eval_x[:n], domain.scale, raw_targets)
    out = Path(args.run_dir) / "plans"
    out.mkdir(exist_ok=True)
    np.savez(out / "plans.npz", layers=dump.layers, g_lambda=dump.g_lambda, targets=dump.targets)
    for i in range(n):
        plot_plan(dump, out / f"plan{i}.svg", i)
    print(f"wrote {n} plan dumps to {out}")
    return EXIT_OK


def cmd_decide(args) -> int:
    spec, seed, trainer, domain = load_run(args.run_dir)
    if spec.domain != "pool":
        raise ValueError("decision evaluation needs a pool run")
    baseline = None
    bscale = None
    if args.baseline_run_dir:
        _, _, btrainer, bdomain = load_run(args.baseline_run_dir)
        baseline, bscale = btrainer.net, bdomain.scale
    res = harness.decision_eval(trainer.net, domain.scale, spec.decision_positions, spec.decision_angles,
                                spec.decision_speeds, spec.pool_size, spec.physics, seed, baseline, bscale)
    _print({"predictron": res.predictron, "random_sampled": res.random_sampled,
            "random_expected": res.random_expected, "oracle_best": res.oracle_best,
            "deepnet": res.deepnet})
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import plot_emit, series_from_dirs

    dirs = [Path(d) for d in args.runs] if args.runs else sorted(
        p.parent for p in Path(args.out_dir).glob("*/metrics.csv"))
    series = series_from_dirs(dirs)
    out = plot_emit(series, args.output or Path(args.out_dir) / "curves.svg", logy=args.logy)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    common.add_argument("--out-dir", default="runs", help="root directory for run outputs")
    common.add_argument("--threads", type=int, default=1, help="parallel runs (processes)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")

    p = argparse.ArgumentParser(prog="predictron", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write a binary sample file")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--out", help="output path (default: <out-dir>/<domain>_seed<k>.bin)")
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train the configured model on each seed")
    t.add_argument("--from-manifest", help="re-execute a run from its manifest.txt")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a trained run")
    e.add_argument("--run-dir", required=True)
    e.add_argument("--assert", dest="assert_", action="store_true",
                   help="exit 3 unless RMSE beats --max-rmse (default: the zero predictor)")
    e.add_argument("--max-rmse", type=float)
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("cube", parents=[common], help="variant or architecture cube")
    c.add_argument("--kind", choices=("variant", "architecture"), default="variant")
    c.set_defaults(fn=cmd_cube)

    d = sub.add_parser("depth-sweep", parents=[common], help="predictron vs baseline over K")
    d.add_argument("--depths", default="2,4,8,16")
    d.set_defaults(fn=cmd_depth_sweep)

    sub.add_parser("capacity-sweep", parents=[common],
                   help="hidden widths 32/128(/512)").set_defaults(fn=cmd_capacity_sweep)
    sub.add_parser("semi-sup", parents=[common],
                   help="0, 1 or 9 consistency updates per label").set_defaults(fn=cmd_semi_sup)

    a = sub.add_parser("depth-analysis", parents=[common], help="effective-depth deciles of a pool run")
    a.add_argument("--run-dir", required=True)
    a.set_defaults(fn=cmd_depth_analysis)

    pd = sub.add_parser("plan-dump", parents=[common], help="weighted preturns of a maze1 run")
    pd.add_argument("--run-dir", required=True)
    pd.add_argument("--n", type=int, default=6)
    pd.set_defaults(fn=cmd_plan_dump)

    de = sub.add_parser("decide", parents=[common], help="pool shot selection by predicted pocketing")
    de.add_argument("--run-dir", required=True)
    de.add_argument("--baseline-run-dir")
    de.set_defaults(fn=cmd_decide)

    pl = sub.add_parser("plot", parents=[common], help="SVG learning curves from run directories")
    pl.add_argument("runs", nargs="*", help="run directories (default: every run under --out-dir)")
    pl.add_argument("--output")
    pl.add_argument("--logy", action="store_true")
    pl.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - every other failure is a runtime error
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
