"""Desk-scale experiment grid: training runs, cubes, sweeps and analyses.

Data streams are keyed by ``(seed, stream, index)``, so two runs with the same
seed see the same batches regardless of their configuration, and a resumed
run regenerates exactly the batches it would have seen.
"""
from __future__ import annotations

import dataclasses
import datetime as _dt
import fcntl
import functools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import accumulators as acc
from .config import ExperimentSpec, dump_config, load_config_with_run
from .envs import maze, pool
from .io import (
    Checkpoint,
    MetricsWriter,
    load_checkpoint,
    read_metrics,
    save_checkpoint,
    truncate_metrics,
    write_manifest,
)
from .losses import Trainer
from .model import Predictron, PredictronConfig, parameter_count

STREAM_LABELLED = 1
STREAM_UNLABELLED = 2
STREAM_INIT = 3
EVAL_SEED = 7_919_000
NORM_SEED = 7_919_001
POOL_SEED = 7_919_002
DECISION_SEED = 7_919_003
EVAL_CHUNK = 128


# metrics -------------------------------------------------------------------

def rmse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} does not match targets {t.shape}")
    d = p - t
    return float(np.sqrt(np.mean(d * d)))


def median_envelope(values) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column median, min and max of a [seeds, points] array."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] == 0:
        raise ValueError("need a non-empty [seeds, points] array")
    return np.median(v, axis=0), v.min(axis=0), v.max(axis=0)


@dataclass
class MetricSeries:
    name: str
    curves: dict[int, list[dict]] = field(default_factory=dict)
    params: int = 0
    config: dict = field(default_factory=dict)

    def add(self, seed: int, rows: list[dict]) -> None:
        self.curves[seed] = rows

    @property
    def seeds(self) -> list[int]:
        return sorted(self.curves)

    def labelled(self) -> np.ndarray:
        return np.array([r["labelled_samples"] for r in self.curves[self.seeds[0]]])

    def rmse_matrix(self) -> np.ndarray:
        lengths = {len(self.curves[s]) for s in self.seeds}
        if len(lengths) != 1:
            raise ValueError(f"{self.name}: seeds have different eval points")
        return np.array([[r["rmse"] for r in self.curves[s]] for s in self.seeds])

    def median(self) -> np.ndarray:
        return median_envelope(self.rmse_matrix())[0]

    def envelope(self) -> tuple[np.ndarray, np.ndarray]:
        _, lo, hi = median_envelope(self.rmse_matrix())
        return lo, hi

    def final_median(self) -> float:
        return float(self.median()[-1])

    def final_per_seed(self) -> dict[int, float]:
        return {s: self.curves[s][-1]["rmse"] for s in self.seeds}


# domains ---------------------------------------------------------------------

class Domain:
    """Batches, a fixed eval set and target normalisation for one task."""

    name: str
    task_id: int
    in_channels: int
    height: int
    width: int
    output_dim: int
    scale: np.ndarray
    degenerate: np.ndarray
    eval_x: np.ndarray
    eval_y: np.ndarray  # normalised

    def raw_batch(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def batch(self, seed: int, stream: int, index: int, n: int) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.raw_batch(np.random.default_rng([seed, stream, index]), n)
        return x, self.normalise(y)

    def normalise(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) / self.scale).astype(np.float32)

    def zero_rmse(self) -> float:
        return rmse(np.zeros_like(self.eval_y), self.eval_y)

    def manifest(self) -> dict:
        return {
            "domain": self.name,
            "task_id": self.task_id,
            "input_shape": [self.in_channels, self.height, self.width],
            "output_dim": self.output_dim,
            "eval_seed": EVAL_SEED,
            "norm_seed": NORM_SEED,
            "eval_size": self.eval_x.shape[0],
            "norm_scale": self.scale,
            "norm_degenerate": self.degenerate.astype(int).tolist(),
        }


class MazeDomain(Domain):
    def __init__(self, task: int, size: int, n_walls: int = 0, eval_size: int = 512,
                 norm_samples: int = 2000):
        self.task = task
        self.name = "maze1" if task == maze.TASK_TRAJECTORY else "maze2"
        self.task_id = task
        self.size = size
        self.n_walls = n_walls or (maze.calibrated_walls(size) if task == maze.TASK_CONNECTIVITY else 0)
        self.in_channels = 2 if task == maze.TASK_TRAJECTORY else 1
        self.height = self.width = size
        self.output_dim = size * size if task == maze.TASK_TRAJECTORY else size
        _, ys = self.raw_batch(np.random.default_rng([NORM_SEED, task, size]), norm_samples)
        stats = pool.normalization_stats(ys)
        self.scale, self.degenerate = stats.scale, stats.degenerate
        x, y = self.raw_batch(np.random.default_rng([EVAL_SEED, task, size]), eval_size)
        self.eval_x, self.eval_y = x, self.normalise(y)

    def raw_batch(self, rng, n):
        return maze.sample_batch(self.task, rng, n, self.size, self.n_walls or None)

    def manifest(self) -> dict:
        out = super().manifest()
        out.update(maze_size=self.size, n_walls=self.n_walls)
        return out


class PoolDomain(Domain):
    """Training batches are drawn from a fixed pre-simulated episode pool."""

    def __init__(self, size: int = 16, physics: pool.Physics = pool.Physics(),
                 n_episodes: int = 4000, eval_size: int = 512, norm_samples: int = 2000):
        self.name = "pool"
        self.task_id = 3
        self.size = size
        self.physics = physics
        self.in_channels = 3 * pool.INPUT_FRAMES
        self.height = self.width = size
        self.output_dim = pool.N_TARGETS
        self.train_x, train_raw = pool.generate_dataset(
            np.random.default_rng([POOL_SEED, size]), n_episodes, size, physics)
        stats = pool.normalization_stats(train_raw[:max(norm_samples, 2)], floor=pool.NORM_FLOOR)
        self.scale, self.degenerate = stats.scale, stats.degenerate
        self.train_y = self.normalise(train_raw)
        ex, ey = pool.generate_dataset(np.random.default_rng([EVAL_SEED, size]), eval_size, size, physics)
        self.eval_x, self.eval_y = ex, self.normalise(ey)
        self.eval_raw = ey

    def batch(self, seed, stream, index, n):
        idx = np.random.default_rng([seed, stream, index]).integers(0, self.train_x.shape[0], n)
        return self.train_x[idx], self.train_y[idx]

    def raw_batch(self, rng, n):
        idx = rng.integers(0, self.train_x.shape[0], n)
        return self.train_x[idx], self.train_y[idx] * self.scale

    def manifest(self) -> dict:
        out = super().manifest()
        out.update(pool_seed=POOL_SEED, pool_episodes=self.train_x.shape[0], pool_size=self.size,
                   norm_floor=pool.NORM_FLOOR)
        out.update({f"physics.{k}": v for k, v in self.physics.to_dict().items()})
        return out


@functools.lru_cache(maxsize=8)
def _cached_domain(key: tuple) -> Domain:
    kind = key[0]
    if kind == "maze1":
        return MazeDomain(maze.TASK_TRAJECTORY, *key[1:])
    if kind == "maze2":
        return MazeDomain(maze.TASK_CONNECTIVITY, *key[1:])
    if kind == "pool":
        size, physics_items, n_episodes, eval_size, norm_samples = key[1:]
        return PoolDomain(size, pool.Physics(**dict(physics_items)), n_episodes, eval_size, norm_samples)
    raise ValueError(f"unknown domain {kind!r}")


def make_domain(spec: ExperimentSpec) -> Domain:
    if spec.domain == "pool":
        key = ("pool", spec.pool_size, tuple(sorted(spec.physics.to_dict().items())),
               spec.pool_episodes, spec.eval_size, spec.norm_samples)
    else:
        key = (spec.domain, spec.maze_size, spec.n_walls, spec.eval_size, spec.norm_samples)
    return _cached_domain(key)


def model_config(spec: ExperimentSpec, domain: Domain) -> PredictronConfig:
    return dataclasses.replace(spec.model, in_channels=domain.in_channels, height=domain.height,
                               width=domain.width, output_dim=domain.output_dim)


def evaluate(net: Predictron, x: np.ndarray, y: np.ndarray) -> float:
    return rmse(predict(net, x), y)


def predict(net: Predictron, x: np.ndarray) -> np.ndarray:
    out = [net.predict(x[i:i + EVAL_CHUNK]) for i in range(0, x.shape[0], EVAL_CHUNK)]
    return np.concatenate(out).astype(np.float64)


# checkpoints -----------------------------------------------------------------

def make_checkpoint(trainer: Trainer, counters: dict[str, int], extra: dict | None = None) -> Checkpoint:
    net = trainer.net
    tensors: dict[str, np.ndarray] = {}
    for name, t in net.params.items():
        tensors[f"param/{name}"] = t.data
    for group, st in trainer.adam.items():
        for name in st.m:
            tensors[f"adam.{group}.m/{name}"] = st.m[name]
            tensors[f"adam.{group}.v/{name}"] = st.v[name]
    for name, bn in net.bn.items():
        tensors[f"bn.mean/{name}"] = bn.mean
        tensors[f"bn.var/{name}"] = bn.var
    for name, arr in (extra or {}).items():
        tensors[f"extra/{name}"] = np.asarray(arr, dtype=np.float64)
    c = dict(counters)
    for group, st in trainer.adam.items():
        c[f"adam.{group}.step"] = st.step
    return Checkpoint(c, tensors)


def restore_checkpoint(ck: Checkpoint, trainer: Trainer) -> dict:
    """Validate every tensor against ``trainer.net`` first, then load; returns extras."""
    net = trainer.net
    expected = {}
    for name, t in net.params.items():
        expected[f"param/{name}"] = t.data
    for name, bn in net.bn.items():
        expected[f"bn.mean/{name}"] = bn.mean
        expected[f"bn.var/{name}"] = bn.var
    for key, ref in expected.items():
        if key not in ck.tensors:
            raise ValueError(f"checkpoint is missing tensor {key!r}")
        got = ck.tensors[key]
        if got.shape != ref.shape:
            raise ValueError(f"checkpoint tensor {key!r} has shape {got.shape}, network expects {ref.shape}")
    moments = {}
    for key, arr in ck.tensors.items():
        if key.startswith("adam."):
            head, name = key.split("/", 1)
            _, group, which = head.split(".")
            if name not in net.params:
                raise ValueError(f"checkpoint optimiser state for unknown parameter {name!r}")
            if arr.shape != net.params[name].shape:
                raise ValueError(f"checkpoint tensor {key!r} has shape {arr.shape}, "
                                 f"network expects {net.params[name].shape}")
            moments[(group, which, name)] = arr
    for key, ref in expected.items():
        ref[...] = ck.tensors[key]
    for st in trainer.adam.values():
        st.m.clear()
        st.v.clear()
    for (group, which, name), arr in moments.items():
        getattr(trainer.adam[group], which)[name] = arr.astype(net.params[name].dtype).copy()
    for group, st in trainer.adam.items():
        st.step = int(ck.counters.get(f"adam.{group}.step", 0))
    return {k[len("extra/"):]: v for k, v in ck.tensors.items() if k.startswith("extra/")}


# single runs -----------------------------------------------------------------

@dataclass
class RunResult:
    name: str
    seed: int
    rows: list[dict]
    run_dir: Path | None
    trainer: Trainer
    domain: Domain

    @property
    def net(self) -> Predictron:
        return self.trainer.net


def _register(out_root: Path, line: str) -> None:
    """Append to the run registry under an exclusive lock."""
    out_root.mkdir(parents=True, exist_ok=True)
    with open(out_root / "registry.txt", "a") as f:
        fcntl.flock(f, fcntl.LOCK_EX)
        f.write(line + "\n")
        f.flush()
        fcntl.flock(f, fcntl.LOCK_UN)


def run_dir_name(spec: ExperimentSpec, seed: int) -> str:
    return f"{spec.name}_seed{seed}"


def train_run(spec: ExperimentSpec, seed: int, out_root=None, resume: bool = False,
              stop_after: int | None = None, domain: Domain | None = None) -> RunResult:
    """Train one configuration on one seed.

    With ``out_root`` the run writes ``manifest.txt``, ``dataset.txt``,
    ``metrics.csv`` and ``checkpoint.bin`` into its own directory. ``resume``
    continues from that checkpoint; ``stop_after`` ends early (for resume tests).
    """
    domain = domain or make_domain(spec)
    cfg = model_config(spec, domain)
    net = Predictron(cfg, seed=int(np.random.default_rng([seed, STREAM_INIT]).integers(2**31)))
    trainer = Trainer(net, lr=spec.lr)
    step, labelled, unlabelled = 0, 0, 0
    loss_sum, loss_count = 0.0, 0
    rows: list[dict] = []
    run_dir = None
    writer = None
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    if out_root is not None:
        run_dir = Path(out_root) / run_dir_name(spec, seed)
        run_dir.mkdir(parents=True, exist_ok=True)
        ck_path = run_dir / "checkpoint.bin"
        if resume and ck_path.exists():
            ck = load_checkpoint(ck_path)
            extra = restore_checkpoint(ck, trainer)
            step = int(ck.counters["step"])
            labelled = int(ck.counters["labelled_samples"])
            unlabelled = int(ck.counters["unlabelled_samples"])
            loss_count = int(ck.counters["loss_count"])
            loss_sum = float(extra["loss_sum"])
            truncate_metrics(run_dir / "metrics.csv", step)
            rows = read_metrics(run_dir / "metrics.csv")
            writer = MetricsWriter(run_dir / "metrics.csv", append=True)
        else:
            writer = MetricsWriter(run_dir / "metrics.csv")
        write_manifest(run_dir / "dataset.txt", {"dataset": domain.manifest()})
        _write_run_manifest(run_dir, spec, seed, started, None)

    def checkpoint():
        ck = make_checkpoint(trainer, {"step": step, "labelled_samples": labelled,
                                       "unlabelled_samples": unlabelled, "loss_count": loss_count,
                                       "seed": seed}, {"loss_sum": loss_sum})
        save_checkpoint(run_dir / "checkpoint.bin", ck)

    c = spec.consistency_ratio
    t0 = time.perf_counter()
    try:
        while step < spec.steps:
            if stop_after is not None and step >= stop_after:
                break
            step += 1
            x, y = domain.batch(seed, STREAM_LABELLED, step, spec.batch_size)
            report = trainer.train_step(x, y, "supervised")
            labelled += spec.batch_size
            loss_sum += report.loss
            loss_count += 1
            for j in range(c):
                xu, _ = domain.batch(seed, STREAM_UNLABELLED, step * c + j, spec.batch_size)
                trainer.train_step(xu, mode="consistency")
                unlabelled += spec.batch_size
            if step % spec.eval_every == 0 or step == spec.steps:
                row = {
                    "step": step,
                    "labelled_samples": labelled,
                    "seed": seed,
                    "rmse": evaluate(net, domain.eval_x, domain.eval_y),
                    "loss": loss_sum / max(loss_count, 1),
                    "wall_ms": (time.perf_counter() - t0) * 1000.0 if spec.record_wall_time else 0.0,
                }
                loss_sum, loss_count = 0.0, 0
                rows.append(row)
                if writer is not None:
                    writer.write(row)
            if run_dir is not None and spec.checkpoint_every and step % spec.checkpoint_every == 0:
                checkpoint()
    finally:
        if writer is not None:
            writer.close()
    if run_dir is not None:
        checkpoint()
        ended = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        _write_run_manifest(run_dir, spec, seed, started, ended)
        _register(Path(out_root), f"{run_dir.name}\tsteps={step}\tfinal_rmse="
                  f"{rows[-1]['rmse'] if rows else float('nan')!r}")
    return RunResult(spec.name, seed, rows, run_dir, trainer, domain)


def _write_run_manifest(run_dir: Path, spec: ExperimentSpec, seed: int, started: str, ended) -> None:
    run = {"seed": seed, "version": __version__, "dataset_manifest": "dataset.txt",
           "started": started, "ended": ended or ""}
    text = dump_config(spec.replace(seeds=[seed]), run)
    (run_dir / "manifest.txt").write_text(text)


def reproduce_run(manifest_path, out_root) -> RunResult:
    """Re-execute a run from its manifest into ``out_root``."""
    spec, run = load_config_with_run(manifest_path)
    seed = int(run.get("seed", spec.seeds[0]))
    return train_run(spec, seed, out_root)


# grids -----------------------------------------------------------------------

def _run_job(args):
    spec, seed, out_root = args
    res = train_run(spec, seed, out_root)
    return spec.name, seed, res.rows


def run_specs(specs: list[ExperimentSpec], out_root=None, threads: int = 1) -> dict[str, MetricSeries]:
    """Every spec on every one of its seeds; parallel across processes if ``threads`` > 1."""
    jobs = [(s, seed, out_root) for s in specs for seed in s.seeds]
    series = {}
    for s in specs:
        domain = make_domain(s)
        cfg = model_config(s, domain)
        series[s.name] = MetricSeries(s.name, params=parameter_count(cfg), config=cfg.to_dict())
    if threads > 1:
        with ProcessPoolExecutor(threads) as ex:
            results = list(ex.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    for name, seed, rows in results:
        series[name].add(seed, rows)
    return series


def corner_name(use_rg: bool, use_lambda: bool, usage: bool) -> str:
    return f"{'rg' if use_rg else 'no-rg'}_{'lambda' if use_lambda else 'no-lambda'}_" \
           f"{'usage' if usage else 'uniform'}"


def variant_cube_specs(spec: ExperimentSpec) -> list[ExperimentSpec]:
    out = []
    for use_rg in (True, False):
        for use_lambda in (True, False):
            for usage in (True, False):
                name = f"{spec.name}-{corner_name(use_rg, use_lambda, usage)}"
                out.append(spec.replace(name=name).with_model(
                    use_rg=use_rg, use_lambda=use_lambda, usage_weighted=usage))
    return out


BEST_CORNER = dict(use_rg=True, use_lambda=True, usage_weighted=True)
BASELINE_CORNER = dict(use_rg=False, use_lambda=False, usage_weighted=True)


def architecture_cube_specs(spec: ExperimentSpec) -> list[ExperimentSpec]:
    out = []
    for kind, corner in (("predictron", BEST_CORNER), ("baseline", BASELINE_CORNER)):
        for shared in (True, False):
            for skip in (True, False):
                name = f"{spec.name}-{kind}_{'shared' if shared else 'unshared'}_{'skip' if skip else 'noskip'}"
                out.append(spec.replace(name=name).with_model(
                    shared_core=shared, skip_connections=skip, **corner))
    return out


def depth_sweep_specs(spec: ExperimentSpec, depths=(2, 4, 8, 16)) -> list[ExperimentSpec]:
    out = []
    for kind, corner in (("predictron", BEST_CORNER), ("baseline", BASELINE_CORNER)):
        for skip in (True, False):
            for K in depths:
                name = f"{spec.name}-{kind}_{'skip' if skip else 'noskip'}_K{K}"
                out.append(spec.replace(name=name).with_model(K=K, skip_connections=skip, **corner))
    return out


def capacity_sweep_specs(spec: ExperimentSpec) -> list[ExperimentSpec]:
    red = max(spec.model.channels // 4, 1)
    out = []
    for kind, corner, widths in (("predictron", BEST_CORNER, (32, 128)),
                                 ("baseline", BASELINE_CORNER, (32, 128, 512))):
        for hidden in widths:
            out.append(spec.replace(name=f"{spec.name}-{kind}_h{hidden}").with_model(
                hidden=hidden, head_reduction_channels=red, **corner))
    return out


def semi_supervised_specs(spec: ExperimentSpec, ratios=(0, 1, 9)) -> list[ExperimentSpec]:
    return [spec.replace(name=f"{spec.name}-c{c}", consistency_ratio=c)
            .with_model(use_lambda=True, shared_core=True, skip_connections=False)
            for c in ratios]


def run_variant_cube(spec, out_root=None, threads=1):
    return run_specs(variant_cube_specs(spec), out_root, threads)


def run_architecture_cube(spec, out_root=None, threads=1):
    return run_specs(architecture_cube_specs(spec), out_root, threads)


def run_depth_sweep(spec, out_root=None, threads=1, depths=(2, 4, 8, 16)):
    return run_specs(depth_sweep_specs(spec, depths), out_root, threads)


def run_capacity_sweep(spec, out_root=None, threads=1):
    return run_specs(capacity_sweep_specs(spec), out_root, threads)


def run_semi_supervised(spec, out_root=None, threads=1, ratios=(0, 1, 9)):
    return run_specs(semi_supervised_specs(spec, ratios), out_root, threads)


# analyses --------------------------------------------------------------------

DECILES = tuple(range(10, 100, 10))


def rollout_arrays(net: Predictron, x: np.ndarray):
    """Eval-mode rollout as plain arrays: (rewards, discounts, values, gates)."""
    prev = net.mode
    net.mode = "eval"
    try:
        roll = net.rollout(x)
    finally:
        net.mode = prev
    to = lambda ts: [t.data.astype(np.float64) for t in ts]
    return to(roll.rewards), to(roll.discounts), to(roll.values), to(roll.gates)


def prediction_depths(net: Predictron, x: np.ndarray) -> np.ndarray:
    chunks = []
    for i in range(0, x.shape[0], EVAL_CHUNK):
        _, discounts, _, gates = rollout_arrays(net, x[i:i + EVAL_CHUNK])
        chunks.append(acc.effective_depth(discounts, gates))
    return np.concatenate(chunks)


def depth_analysis(net: Predictron, x: np.ndarray) -> list[dict]:
    """One row per pool prediction: event, ball, discount and depth deciles."""
    depths = prediction_depths(net, x)
    if depths.shape[1] != pool.N_TARGETS:
        raise ValueError(f"expected {pool.N_TARGETS} predictions, got {depths.shape[1]}")
    rows = []
    nd = len(pool.DISCOUNTS)
    for idx in range(pool.N_TARGETS):
        channel, d = divmod(idx, nd)
        event, ball = divmod(channel, pool.N_BALLS)
        q = np.percentile(depths[:, idx], DECILES)
        row = {"index": idx, "event": pool.EVENT_NAMES[event], "ball": ball,
               "discount": pool.DISCOUNTS[d], "mean": float(depths[:, idx].mean())}
        row.update({f"d{p}": float(v) for p, v in zip(DECILES, q)})
        rows.append(row)
    return rows


def write_depth_csv(path, rows: list[dict]) -> None:
    import csv

    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


@dataclass
class PlanDump:
    layers: np.ndarray  # [N, K+1, n, n] weighted preturns w^k g^k
    g_lambda: np.ndarray  # [N, n, n]
    targets: np.ndarray | None = None


def plan_dump(net: Predictron, x: np.ndarray, scale=None, targets=None) -> PlanDump:
    """Per-step weighted preturns of a trajectory-task model (un-normalised when ``scale`` given)."""
    rewards, discounts, values, gates = rollout_arrays(net, x)
    g = acc.all_preturns(rewards, discounts, values)
    w = acc.lambda_weights(gates)
    layers = np.stack([wk * gk for wk, gk in zip(w, g)], axis=1)
    g_lambda = acc.lambda_preturn(rewards, discounts, values, gates)
    if scale is not None:
        layers = layers * scale
        g_lambda = g_lambda * scale
    n = int(round(math.sqrt(layers.shape[-1])))
    shape = (x.shape[0], layers.shape[1], n, n)
    t = None if targets is None else np.asarray(targets).reshape(x.shape[0], n, n)
    return PlanDump(layers.reshape(shape), g_lambda.reshape(x.shape[0], n, n), t)


# decision evaluation -----------------------------------------------------------

def pocket_score_indices() -> np.ndarray:
    """The 24 GVFs summed to score a shot: coloured balls x pockets x gamma in {0.98, 1}."""
    out = []
    for ball in range(1, pool.N_BALLS):
        for p in range(4):
            for d in (pool.DISCOUNTS.index(0.98), pool.DISCOUNTS.index(1.0)):
                out.append(pool.target_index(pool.EV_ENTER_POCKET + p, ball, d))
    return np.array(sorted(out))


def candidate_shots(n_angles: int, n_speeds: int) -> list[tuple[float, float]]:
    angles = 2 * math.pi * np.arange(n_angles) / n_angles
    speeds = np.linspace(7.0, 14.0, n_speeds) if n_speeds > 1 else np.array([10.5])
    return [(float(s), float(a)) for s in speeds for a in angles]


def coloured_pocketed(ep: pool.Episode) -> int:
    return int(ep.events[:, 1:, pool.EV_ENTER_POCKET:].sum())


def shot_inputs(pos: np.ndarray, shots, size: int, physics: pool.Physics) -> np.ndarray:
    xs = []
    for speed, angle in shots:
        st = pool.shot(pos, speed, angle, physics)
        frames = [st.copy()]
        cur = st.copy()
        for _ in range(pool.INPUT_FRAMES - 1):
            frames.append(pool.step_frame(cur, physics))
        xs.append(np.concatenate([pool.render_frame(f, size, physics) for f in frames]))
    return np.stack(xs)


@dataclass
class DecisionResult:
    predictron: int
    random_sampled: int
    random_expected: float
    oracle_best: int
    deepnet: int | None = None
    per_position: list = field(default_factory=list)


def decision_eval(net: Predictron, scale: np.ndarray, n_positions: int = 20, n_angles: int = 16,
                  n_speeds: int = 4, size: int | None = None, physics: pool.Physics = pool.Physics(),
                  seed: int = 0, baseline_net: Predictron | None = None,
                  baseline_scale: np.ndarray | None = None) -> DecisionResult:
    """Pick the shot whose predicted pocketing is highest; count coloured balls pocketed.

    Every candidate is also simulated, which gives the uniform-random
    selection's expected count exactly and the best achievable count.
    """
    size = size or net.cfg.height
    rng = np.random.default_rng([DECISION_SEED, seed])
    shots = candidate_shots(n_angles, n_speeds)
    idx = pocket_score_indices()
    totals = dict(predictron=0, random_sampled=0, random_expected=0.0, oracle_best=0, deepnet=0)
    per_position = []
    for _ in range(n_positions):
        pos = pool.place_balls(rng, physics)
        outcomes = np.array([
            coloured_pocketed(pool.simulate_episode(pool.shot(pos, s, a, physics), physics,
                                                    max_frames=10_000))
            for s, a in shots])
        x = shot_inputs(pos, shots, size, physics)
        scores = predict(net, x)[:, idx] @ np.asarray(scale)[idx]
        choice = int(np.argmax(scores))
        rand = int(rng.integers(len(shots)))
        rec = {"predictron": int(outcomes[choice]), "random_sampled": int(outcomes[rand]),
               "random_expected": float(outcomes.mean()), "oracle_best": int(outcomes.max())}
        if baseline_net is not None:
            bscale = np.asarray(baseline_scale if baseline_scale is not None else scale)
            bscores = predict(baseline_net, x)[:, idx] @ bscale[idx]
            rec["deepnet"] = int(outcomes[int(np.argmax(bscores))])
        for k, v in rec.items():
            totals[k] += v
        per_position.append(rec)
    return DecisionResult(totals["predictron"], totals["random_sampled"], totals["random_expected"],
                          totals["oracle_best"], totals["deepnet"] if baseline_net is not None else None,
                          per_position)
