import numpy as np
import pytest

from predictron import accumulators as acc
from predictron.engine import Tensor, finite_diff_check, grad_graph, sigmoid
from predictron.losses import (
    Trainer,
    backward_lambda,
    consistency_loss,
    k_step_loss,
    lambda_loss,
    preturn_disagreement,
    preturn_loss_uniform,
    preturn_loss_usage,
)
from predictron.model import Predictron, PredictronConfig, Preturns


def scalar_preturns(values, gates=None):
    g = [Tensor(np.array([[v]], dtype=np.float64), requires_grad=True) for v in values]
    if gates is None:
        gates = [Tensor(np.array([[0.5]]))] * (len(values) - 1) + [Tensor(np.array([[0.0]]))]
    w = acc.lambda_weights(gates)
    return Preturns(g=g, w=w, g_lambda=acc.mixture(w, g))


def tiny_net(seed=0, **kw):
    cfg = dict(K=2, channels=3, hidden=4, output_dim=2, in_channels=1, height=4, width=4, dtype="float64")
    cfg.update(kw)
    net = Predictron(PredictronConfig(**cfg), seed=seed)
    rng = np.random.default_rng(seed + 100)
    for name, t in net.params.items():
        if name.endswith("fc2.w"):
            t.data[...] = rng.normal(size=t.shape) * 0.3
    return net


def batch(net, n=3, seed=1):
    rng = np.random.default_rng(seed)
    c = net.cfg
    return rng.normal(size=(n, c.in_channels, c.height, c.width)), rng.normal(size=(n, c.output_dim))


# examples ------------------------------------------------------------------------

def test_uniform_loss_zero_when_all_preturns_hit_target():
    pre = scalar_preturns([1.5, 1.5, 1.5])
    assert float(preturn_loss_uniform(pre, [[1.5]]).data) == 0.0


def test_uniform_loss_direct_evaluation():
    pre = scalar_preturns([1.0, 1.0])
    assert float(preturn_loss_uniform(pre, [[0.0]]).data) == pytest.approx(1.0)


def test_uniform_loss_quadratic():
    a = float(preturn_loss_uniform(scalar_preturns([0.3, -0.2, 0.9]), [[0.1]]).data)
    b = float(preturn_loss_uniform(scalar_preturns([0.5, -0.5, 1.7]), [[0.1]]).data)
    assert b == pytest.approx(4 * a)


def test_k_step_loss_is_half_squared_error():
    pre = scalar_preturns([0.0, 3.0])
    assert float(k_step_loss(pre, [[1.0]], 1).data) == pytest.approx(2.0)
    assert float(k_step_loss(pre, [[1.0]], 0).data) == pytest.approx(0.5)


def test_usage_loss_final_weight_equals_final_preturn_loss():
    pre = scalar_preturns([0.3, -0.2, 0.9])
    target = [[0.4]]
    ga = grad_graph(preturn_loss_usage(pre, target, weights=[0.0, 0.0, 1.0]), pre.g)
    gb = grad_graph(k_step_loss(pre, target, 2), pre.g)
    for t in pre.g:
        np.testing.assert_array_equal(ga.get(id(t), 0), gb.get(id(t), 0))


def test_usage_loss_zero_gradient_at_target():
    pre = scalar_preturns([0.7, 0.7])
    grads = grad_graph(preturn_loss_usage(pre, [[0.7]]), pre.g)
    assert all(not g.any() for g in grads.values())


def test_usage_uniform_weights_proportional_to_uniform_loss():
    net = tiny_net()
    x, y = batch(net)
    net.mode = "eval"
    K = net.cfg.K
    params = net.params.group("theta")
    _, pre = net.forward(x)
    gu = grad_graph(preturn_loss_uniform(pre, y), params)
    _, pre = net.forward(x)
    gw = grad_graph(preturn_loss_usage(pre, y, weights=[1.0 / (K + 1)] * (K + 1)), params)
    for t in params:
        np.testing.assert_allclose(gw[id(t)], K / (K + 1) * gu[id(t)], rtol=1e-10, atol=1e-14)


def test_lambda_loss_zero_gradient_at_target():
    pre = scalar_preturns([1.0, 1.0])
    grads = grad_graph(lambda_loss(pre, [[1.0]]), pre.g)
    assert all(not g.any() for g in grads.values())


def test_lambda_loss_scalar_gate_gradient():
    eta = Tensor(np.array([[0.3]]), requires_grad=True)

    def f():
        pre = scalar_preturns([0.0, 2.0], gates=[sigmoid(eta), Tensor(np.array([[0.0]]))])
        return lambda_loss(pre, [[1.0]])

    assert finite_diff_check(f, [eta]) < 1e-8


def test_lambda_loss_needs_lambda():
    with pytest.raises(ValueError):
        lambda_loss(scalar_preturns([0.0, 1.0]), [[0.0]], use_lambda=False)


def test_lambda_loss_value_head_weight_gets_nothing():
    net = tiny_net()
    x, y = batch(net)
    net.mode = "eval"
    w = net.params["value.fc2.w"]
    _, pre = net.forward(x)
    before = float(lambda_loss(pre, y).data)
    net.zero_grad()
    backward_lambda(lambda_loss(pre, y), net.params)
    assert w.grad is None
    w.data[0, 0] += 0.5
    _, pre = net.forward(x)
    assert float(lambda_loss(pre, y).data) != before


def test_consistency_loss_zero_when_preturns_agree():
    pre = scalar_preturns([0.4, 0.4, 0.4])
    assert float(consistency_loss(pre).data) == 0.0


def test_consistency_loss_direct_evaluation():
    pre = scalar_preturns([0.0, 2.0])  # w = [0.5, 0.5] -> g_lambda = 1
    assert pre.g_lambda.data.item() == 1.0
    assert float(consistency_loss(pre).data) == pytest.approx(1.0)


def test_consistency_gradient_ignores_lambda_branch():
    net = tiny_net()
    x, _ = batch(net)
    net.mode = "eval"
    params = net.params.group()
    _, pre = net.forward(x)
    a = grad_graph(consistency_loss(pre), params)
    _, pre = net.forward(x)
    b = grad_graph(consistency_loss(pre, target_lambda=pre.g_lambda.data.copy()), params)
    assert a.keys() == b.keys()
    for k in a:
        assert a[k].tobytes() == b[k].tobytes()
    assert not any(id(t) in a for t in net.params.group("eta"))


def test_target_validation():
    pre = scalar_preturns([0.0, 1.0])
    with pytest.raises(ValueError):
        preturn_loss_uniform(pre, [[np.nan]])
    with pytest.raises(ValueError):
        preturn_loss_uniform(pre, [[0.0, 1.0]])


# gradient checks per loss ---------------------------------------------------------------

def _fd(net, loss_fn, scope):
    net.mode = "eval"
    return finite_diff_check(lambda: loss_fn(net.forward(X)[1]), net.params.group(scope), per_tensor=True)


NET = tiny_net(seed=3)
X, Y = batch(NET, n=2, seed=4)


@pytest.mark.parametrize("name", ["k_step", "uniform", "usage", "lambda", "consistency"])
def test_loss_gradients_match_finite_differences(name):
    NET.mode = "eval"
    _, pre0 = NET.forward(X)
    fixed_w = [w.data.copy() for w in pre0.w]
    fixed_gl = pre0.g_lambda.data.copy()
    fns = {
        "k_step": (lambda pre: k_step_loss(pre, Y, 1), "both"),
        "uniform": (lambda pre: preturn_loss_uniform(pre, Y), "both"),
        "usage": (lambda pre: preturn_loss_usage(pre, Y, weights=fixed_w), "both"),
        "lambda": (lambda pre: lambda_loss(pre, Y), "eta"),
        "consistency": (lambda pre: consistency_loss(pre, target_lambda=fixed_gl), "both"),
    }
    fn, scope = fns[name]
    errs = _fd(NET, fn, scope)
    assert max(errs.values()) < 1e-6, errs


# train step -------------------------------------------------------------------------

def test_train_step_zero_targets_zero_heads_is_stationary():
    cfg = PredictronConfig(K=2, channels=3, hidden=4, output_dim=2, height=4, width=4)
    net = Predictron(cfg, seed=0)
    tr = Trainer(net)
    x = np.random.default_rng(0).normal(size=(4, 1, 4, 4)).astype(np.float32)
    y = np.zeros((4, 2), dtype=np.float32)
    a = tr.train_step(x, y)
    b = tr.train_step(x, y)
    assert a.loss == b.loss == 0.0


def test_supervised_loss_decreases():
    net = tiny_net(seed=5, dtype="float32")
    tr = Trainer(net, lr=3e-3)
    x, y = batch(net, n=8, seed=6)
    x, y = x.astype(np.float32), y.astype(np.float32)
    losses = [tr.train_step(x, y).loss for _ in range(50)]
    assert losses[-1] < losses[0]
    assert tr.adam["eta"].step == 50


def test_consistency_steps_reduce_disagreement():
    net = tiny_net(seed=7, dtype="float32")
    tr = Trainer(net)
    rng = np.random.default_rng(8)
    held_out = rng.normal(size=(16, 1, 4, 4)).astype(np.float32)
    # batch statistics: the running averages lag far behind 100 steps
    net.mode = "train"
    before = preturn_disagreement(net.forward(held_out)[1])
    for i in range(100):
        tr.train_step(rng.normal(size=(8, 1, 4, 4)).astype(np.float32), mode="consistency")
    net.mode = "train"
    after = preturn_disagreement(net.forward(held_out)[1])
    assert after < before
    assert tr.adam["eta"].step == 0


def test_consistency_needs_lambda():
    net = tiny_net(use_lambda=False)
    with pytest.raises(ValueError):
        Trainer(net).train_step(np.zeros((2, 1, 4, 4)), mode="consistency")


def test_supervised_step_needs_targets():
    with pytest.raises(ValueError):
        Trainer(tiny_net()).train_step(np.zeros((2, 1, 4, 4)))


def test_lambda_step_touches_only_eta():
    net = tiny_net()
    x, y = batch(net)
    _, pre = net.forward(x)
    net.zero_grad()
    backward_lambda(lambda_loss(pre, y), net.params)
    assert all(t.grad is None for t in net.params.group("theta"))
    assert all(t.grad is not None and t.grad.any() for t in net.params.group("eta")
               if t.name.endswith(".w"))
