"""The predictron network: encoder, repeatable core, value head, accumulators."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import accumulators as acc
from .engine import (
    BatchNormState,
    ParameterSet,
    Tensor,
    activation,
    batchnorm,
    conv2d_nhwc,
    dense,
    flatten,
    relu,
)

GATE_BIAS = 2.0


@dataclass
class PredictronConfig:
    K: int = 4
    channels: int = 16
    hidden: int = 64
    use_rg: bool = True
    use_lambda: bool = True
    usage_weighted: bool = True
    shared_core: bool = True
    skip_connections: bool = False
    output_dim: int = 1
    head_reduction_channels: int = 0  # 0 disables the 1x1 reduction
    in_channels: int = 1
    height: int = 8
    width: int = 8
    encoder_kernel: int = 3
    encoder_layers: int = 2
    encoder_padding: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.output_dim < 1:
            raise ValueError("output_dim must be >= 1")
        if self.encoder_layers < 1:
            raise ValueError("encoder needs at least one layer")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def state_hw(self) -> tuple[int, int]:
        if self.encoder_padding:
            return self.height, self.width
        shrink = self.encoder_layers * (self.encoder_kernel - 1)
        return self.height - shrink, self.width - shrink

    @property
    def is_baseline(self) -> bool:
        return not self.use_rg and not self.use_lambda

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Rollout:
    states: list
    values: list
    rewards: list
    discounts: list
    gates: list


@dataclass
class Preturns:
    g: list
    w: list
    g_lambda: object
    extra: dict = field(default_factory=dict)


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def parameter_count(cfg: PredictronConfig) -> int:
    """Closed-form parameter count for ``cfg``, independent of construction."""
    ch, hid, out = cfg.channels, cfg.hidden, cfg.output_dim
    ke = cfg.encoder_kernel
    h, w = cfg.state_hw
    encoder = (ch * cfg.in_channels * ke * ke + 2 * ch) + (cfg.encoder_layers - 1) * (ch * ch * ke * ke + 2 * ch)
    core_convs = 3 * (ch * ch * 9 + 2 * ch)
    red = cfg.head_reduction_channels

    def head() -> int:
        n = 0
        width_in = ch
        if red:
            n += red * ch + 2 * red
            width_in = red
        n += width_in * h * w * hid + 2 * hid
        n += hid * out + out
        return n

    per_core = core_convs + (2 * head() if cfg.use_rg else 0) + (head() if cfg.use_lambda else 0)
    cores = 1 if cfg.shared_core else cfg.K
    return encoder + cores * per_core + head()


class Predictron:
    def __init__(self, cfg: PredictronConfig, seed: int = 0):
        self.cfg = cfg
        self.params = ParameterSet()
        self.bn: dict[str, BatchNormState] = {}
        self.mode = "train"
        rng = np.random.default_rng(seed)
        self._build(rng)

    # construction ---------------------------------------------------------
    def _conv(self, rng, name, cin, cout, k, group="theta", steps=None):
        dt = self.cfg.np_dtype
        self.params.add(f"{name}.w", _he_uniform(rng, (cout, cin, k, k), cin * k * k, dt), group)
        self._bn(f"{name}.bn", cout, group, steps)

    def _bn(self, name, c, group, steps=None):
        # a layer applied at several rollout steps shares gain and bias but
        # keeps running statistics per step, matching the per-call batch stats
        dt = self.cfg.np_dtype
        self.params.add(f"{name}.gain", np.ones(c, dtype=dt), group)
        self.params.add(f"{name}.bias", np.zeros(c, dtype=dt), group)
        if steps is None:
            self.bn[name] = BatchNormState(c, dtype=dt)
        else:
            for k in steps:
                self.bn[f"{name}@{k}"] = BatchNormState(c, dtype=dt)

    def _head(self, rng, name, cin, final_bias, group="theta", steps=None):
        cfg, dt = self.cfg, self.cfg.np_dtype
        h, w = cfg.state_hw
        if cfg.head_reduction_channels:
            self._conv(rng, f"{name}.reduce", cin, cfg.head_reduction_channels, 1, group, steps)
            cin = cfg.head_reduction_channels
        flat = cin * h * w
        self.params.add(f"{name}.fc1.w", _he_uniform(rng, (flat, cfg.hidden), flat, dt), group)
        self._bn(f"{name}.fc1.bn", cfg.hidden, group, steps)
        self.params.add(f"{name}.fc2.w", np.zeros((cfg.hidden, cfg.output_dim), dtype=dt), group)
        self.params.add(f"{name}.fc2.b", np.full(cfg.output_dim, final_bias, dtype=dt), group)

    def _build(self, rng):
        cfg = self.cfg
        ch, ke = cfg.channels, cfg.encoder_kernel
        cin = cfg.in_channels
        for i in range(cfg.encoder_layers):
            self._conv(rng, f"encoder.conv{i}", cin, ch, ke)
            cin = ch
        steps = range(cfg.K) if cfg.shared_core else None
        for prefix in self.core_names():
            self._conv(rng, f"{prefix}.hidden", ch, ch, 3, steps=steps)
            self._conv(rng, f"{prefix}.state1", ch, ch, 3, steps=steps)
            self._conv(rng, f"{prefix}.state2", ch, ch, 3, steps=steps)
            if cfg.use_rg:
                self._head(rng, f"{prefix}.reward", ch, 0.0, steps=steps)
                self._head(rng, f"{prefix}.discount", ch, GATE_BIAS, steps=steps)
            if cfg.use_lambda:
                self._head(rng, f"{prefix}.lambda", ch, GATE_BIAS, group="eta", steps=steps)
        self._head(rng, "value", ch, 0.0, steps=range(cfg.K + 1))

    def core_names(self) -> list[str]:
        if self.cfg.shared_core:
            return ["core"]
        return [f"core{k}" for k in range(self.cfg.K)]

    def core_prefix(self, k: int) -> str:
        return "core" if self.cfg.shared_core else f"core{k}"

    # building blocks ------------------------------------------------------
    def _norm(self, x, name, step=None):
        p = self.params
        stats = self.bn[name] if name in self.bn else self.bn[f"{name}@{step}"]
        return batchnorm(x, p[f"{name}.gain"], p[f"{name}.bias"], self.mode, stats, channels_last=True)

    def _conv_bn(self, x, name, padding=None, step=None):
        return self._norm(conv2d_nhwc(x, self.params[f"{name}.w"], padding), f"{name}.bn", step)

    def _head_forward(self, x, name, kind=None, step=None):
        p = self.params
        if self.cfg.head_reduction_channels:
            x = relu(self._conv_bn(x, f"{name}.reduce", step=step))
        x = flatten(x)
        x = relu(self._norm(dense(x, p[f"{name}.fc1.w"]), f"{name}.fc1.bn", step))
        x = dense(x, p[f"{name}.fc2.w"], p[f"{name}.fc2.b"])
        return activation(x, kind) if kind else x

    def encode(self, x) -> Tensor:
        """Input planes [N,C,H,W] -> abstract state s^0, stored channels-last."""
        cfg = self.cfg
        arr = x.data if isinstance(x, Tensor) else np.asarray(x)
        if arr.ndim != 4 or arr.shape[1:] != (cfg.in_channels, cfg.height, cfg.width):
            raise ValueError(f"input shape {arr.shape} does not match "
                             f"[N,{cfg.in_channels},{cfg.height},{cfg.width}]")
        x = Tensor(np.ascontiguousarray(arr.transpose(0, 2, 3, 1), dtype=cfg.np_dtype))
        pad = None if cfg.encoder_padding else 0
        for i in range(cfg.encoder_layers):
            x = relu(self._conv_bn(x, f"encoder.conv{i}", pad))
        return x

    def transition(self, s: Tensor, k: int) -> tuple[Tensor, Tensor]:
        """State path of core step ``k``: returns (s_next, hidden)."""
        prefix = self.core_prefix(k)
        hidden = relu(self._conv_bn(s, f"{prefix}.hidden", step=k))
        a = relu(self._conv_bn(hidden, f"{prefix}.state1", step=k))
        delta = self._conv_bn(a, f"{prefix}.state2", step=k)
        s_next = relu(s + delta) if self.cfg.skip_connections else relu(delta)
        return s_next, hidden

    def core_step(self, s: Tensor, k: int):
        cfg = self.cfg
        if not 0 <= k < cfg.K:
            raise IndexError(f"core step {k} outside 0..{cfg.K - 1}")
        s_next, hidden = self.transition(s, k)
        prefix = self.core_prefix(k)
        n = s.shape[0]
        dt = cfg.np_dtype
        if cfg.use_rg:
            r = self._head_forward(hidden, f"{prefix}.reward", step=k)
            gamma = self._head_forward(hidden, f"{prefix}.discount", "sigmoid", k)
        else:
            r = Tensor(np.zeros((n, cfg.output_dim), dtype=dt))
            gamma = Tensor(np.ones((n, cfg.output_dim), dtype=dt))
        if cfg.use_lambda:
            lam = self._head_forward(hidden, f"{prefix}.lambda", "sigmoid", k)
        else:
            lam = Tensor(np.ones((n, cfg.output_dim), dtype=dt))
        return s_next, r, gamma, lam

    def value_head(self, s: Tensor, step: int = 0) -> Tensor:
        return self._head_forward(s, "value", step=step)

    # full passes ----------------------------------------------------------
    def rollout(self, x) -> Rollout:
        cfg = self.cfg
        s = self.encode(x)
        states, values, rewards, discounts, gates = [s], [], [], [], []
        for k in range(cfg.K):
            values.append(self.value_head(s, k))
            s, r, gamma, lam = self.core_step(s, k)
            states.append(s)
            rewards.append(r)
            discounts.append(gamma)
            gates.append(lam)
        values.append(self.value_head(s, cfg.K))
        gates.append(Tensor(np.zeros((s.shape[0], cfg.output_dim), dtype=cfg.np_dtype)))
        return Rollout(states, values, rewards, discounts, gates)

    def preturns(self, roll: Rollout) -> Preturns:
        g = acc.all_preturns(roll.rewards, roll.discounts, roll.values)
        w = acc.lambda_weights(roll.gates)
        g_lambda = acc.lambda_preturn(roll.rewards, roll.discounts, roll.values, roll.gates)
        return Preturns(g=g, w=w, g_lambda=g_lambda)

    def forward(self, x) -> tuple[Rollout, Preturns]:
        roll = self.rollout(x)
        return roll, self.preturns(roll)

    def predict(self, x) -> np.ndarray:
        """g^lambda in eval mode, as a plain array."""
        prev = self.mode
        self.mode = "eval"
        try:
            _, pre = self.forward(x)
        finally:
            self.mode = prev
        return pre.g_lambda.data

    def parameter_count(self, scope: str = "both") -> int:
        return self.params.count(scope)

    def zero_grad(self) -> None:
        self.params.zero_grad()


class DeepNetwork:
    """Plain stack encoder -> K state transitions -> value head.

    Shares the parameters of a (baseline-configured) :class:`Predictron`;
    no rewards, discounts, gates or intermediate values are computed.
    """

    def __init__(self, net: Predictron):
        self.net = net

    def forward(self, x) -> Tensor:
        s = self.net.encode(x)
        for k in range(self.net.cfg.K):
            s, _ = self.net.transition(s, k)
        return self.net.value_head(s, self.net.cfg.K)
