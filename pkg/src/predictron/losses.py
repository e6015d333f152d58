"""Learning updates: k-step, uniform, usage-weighted, lambda and consistency losses.

All losses average over the batch and sum over prediction dimensions, so a
constant-zero predictor on unit-variance targets scores about 1/2 per
dimension.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import accumulators as acc
from .engine import AdamState, Tensor, adam_step, backward, square, stop_gradient, sum_all
from .model import Predictron, Preturns


@dataclass
class LossReport:
    loss: float
    per_k: list[float]
    groups: tuple[str, ...]
    lambda_loss: float | None = None
    extra: dict = field(default_factory=dict)


def _target(g, like: Tensor) -> Tensor:
    arr = g.data if isinstance(g, Tensor) else np.asarray(g)
    if not np.all(np.isfinite(arr)):
        raise ValueError("target contains non-finite values")
    if arr.shape != like.shape:
        raise ValueError(f"target shape {arr.shape} does not match predictions {like.shape}")
    return Tensor(arr.astype(like.dtype, copy=False))


def _half_sq(diff: Tensor, n: int) -> Tensor:
    return sum_all(square(diff)) * (0.5 / n)


def k_step_loss(pre: Preturns, g, k: int) -> Tensor:
    """l^k = 1/2 |g - g^k|^2."""
    t = _target(g, pre.g[k])
    return _half_sq(t - pre.g[k], t.shape[0])


def preturn_loss_uniform(pre: Preturns, g) -> Tensor:
    """1/(2K) sum_{k=0..K} |g - g^k|^2."""
    K = len(pre.g) - 1
    t = _target(g, pre.g[0])
    total = None
    for gk in pre.g:
        term = sum_all(square(t - gk))
        total = term if total is None else total + term
    return total * (1.0 / (2 * K * t.shape[0]))


def preturn_loss_usage(pre: Preturns, g, weights=None) -> Tensor:
    """1/2 sum_k w^k |g - g^k|^2 with the usage weights held constant."""
    t = _target(g, pre.g[0])
    if weights is None:
        weights = [w.data if isinstance(w, Tensor) else w for w in pre.w]
    total = None
    for w, gk in zip(weights, pre.g):
        wk = Tensor(np.broadcast_to(np.asarray(w, dtype=gk.dtype), gk.shape).copy())
        term = sum_all(wk * square(t - gk))
        total = term if total is None else total + term
    return total * (0.5 / t.shape[0])


def lambda_loss(pre: Preturns, g, use_lambda: bool = True) -> Tensor:
    """1/2 |g - g^lambda|^2, differentiable only through the gates."""
    if not use_lambda:
        raise ValueError("lambda loss needs the lambda accumulator")
    t = _target(g, pre.g[0])
    fixed = [stop_gradient(gk) for gk in pre.g]
    g_lambda = acc.mixture(pre.w, fixed)
    return _half_sq(t - g_lambda, t.shape[0])


def backward_lambda(loss: Tensor, params) -> None:
    """The lambda loss trains only the gate heads; the trunk gets nothing from it."""
    backward(loss, params, "eta")


def consistency_loss(pre: Preturns, target_lambda=None) -> Tensor:
    """1/2 sum_k |g^lambda - g^k|^2 with g^lambda held fixed."""
    if target_lambda is None:
        fixed = stop_gradient(pre.g_lambda)
    else:
        fixed = _target(target_lambda, pre.g[0])
    n = pre.g[0].shape[0]
    total = None
    for gk in pre.g:
        term = sum_all(square(fixed - gk))
        total = term if total is None else total + term
    return total * (0.5 / n)


def preturn_disagreement(pre: Preturns) -> float:
    """Mean over samples of sum_k |g^lambda - g^k|^2 (no graph)."""
    gl = pre.g_lambda.data
    return float(sum(((gl - gk.data) ** 2).sum() for gk in pre.g) / gl.shape[0])


class Trainer:
    """Owns the Adam states of one network and applies train steps."""

    def __init__(self, net: Predictron, lr: float = 1e-3):
        self.net = net
        self.adam = {"theta": AdamState(lr=lr), "eta": AdamState(lr=lr)}

    def train_step(self, inputs, targets=None, mode: str = "supervised") -> LossReport:
        net, cfg = self.net, self.net.cfg
        net.mode = "train"
        if mode == "supervised":
            if targets is None:
                raise ValueError("supervised step needs targets")
            _, pre = net.forward(inputs)
            if cfg.usage_weighted:
                theta_loss = preturn_loss_usage(pre, targets)
            else:
                theta_loss = preturn_loss_uniform(pre, targets)
            groups = ["theta"]
            lam_value = None
            backward(theta_loss, net.params, "theta")
            if cfg.use_lambda:
                lam = lambda_loss(pre, targets)
                lam_value = float(lam.data)
                backward_lambda(lam, net.params)
                groups.append("eta")
            for group in groups:
                adam_step(net.params, self.adam[group], group)
            t = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
            per_k = [float(((t - gk.data) ** 2).sum() / (2 * t.shape[0])) for gk in pre.g]
            return LossReport(float(theta_loss.data), per_k, tuple(groups), lam_value)
        if mode == "consistency":
            if not cfg.use_lambda:
                raise ValueError("consistency updates need the lambda accumulator")
            _, pre = net.forward(inputs)
            loss = consistency_loss(pre)
            backward(loss, net.params, "theta")
            adam_step(net.params, self.adam["theta"], "theta")
            gl = pre.g_lambda.data
            per_k = [float(((gl - gk.data) ** 2).sum() / (2 * gl.shape[0])) for gk in pre.g]
            return LossReport(float(loss.data), per_k, ("theta",))
        raise ValueError(f"unknown train mode {mode!r}")
