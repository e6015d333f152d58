"""k-step and lambda accumulators over an unrolled internal model.

Index conventions, shared by every function here:

* ``values``    -- v^0 .. v^K      (K+1 entries)
* ``rewards``   -- r^1 .. r^K      (K entries, ``rewards[k-1]`` is r^k)
* ``discounts`` -- gamma^1 .. gamma^K
* ``gates``     -- lambda^0 .. lambda^K, with lambda^K expected to be 0

Entries may be floats, numpy arrays or graph tensors; only ``+``, ``-`` and
``*`` are used, elementwise (vector rewards, diagonal discounts).
"""
from __future__ import annotations


def k_preturn(rewards, discounts, values, k: int):
    """g^k = r^1 + gamma^1 (r^2 + ... + gamma^{k-1}(r^k + gamma^k v^k))."""
    K = len(values) - 1
    if not 0 <= k <= K:
        raise IndexError(f"preturn depth {k} outside 0..{K}")
    g = values[k]
    for j in range(k, 0, -1):
        g = rewards[j - 1] + discounts[j - 1] * g
    return g


def all_preturns(rewards, discounts, values) -> list:
    """Every k-step preturn in O(K) via running discount products."""
    K = len(values) - 1
    out = [values[0]]
    acc = None  # sum_{j<=k} (gamma^1..gamma^{j-1}) r^j
    prod = None  # gamma^1 .. gamma^k
    for k in range(1, K + 1):
        r, d = rewards[k - 1], discounts[k - 1]
        term = r if prod is None else prod * r
        acc = term if acc is None else acc + term
        prod = d if prod is None else prod * d
        out.append(acc + prod * values[k])
    return out


def lambda_weights(gates) -> list:
    """w^k = (1 - lambda^k) prod_{j<k} lambda^j for k < K, w^K = prod_{j<K} lambda^j."""
    K = len(gates) - 1
    weights = []
    carry = None
    for k in range(K):
        lam = gates[k]
        weights.append(1 - lam if carry is None else (1 - lam) * carry)
        carry = lam if carry is None else carry * lam
    weights.append(1.0 + 0 * gates[K] if carry is None else carry)
    return weights


def mixture(weights, preturns):
    """sum_k w^k g^k."""
    total = None
    for w, g in zip(weights, preturns):
        total = w * g if total is None else total + w * g
    return total


def lambda_preturn(rewards, discounts, values, gates):
    """Backward accumulation g^{k,l} = (1-l^k) v^k + l^k (r^{k+1} + gamma^{k+1} g^{k+1,l})."""
    K = len(values) - 1
    g = values[K]
    for k in range(K - 1, -1, -1):
        lam = gates[k]
        g = (1 - lam) * values[k] + lam * (rewards[k] + discounts[k] * g)
    return g


def effective_depth(discounts, gates):
    """d^K = 0, d^k = lambda^k (1 + gamma^{k+1} d^{k+1}); returns d^0."""
    K = len(gates) - 1
    d = None
    for k in range(K - 1, -1, -1):
        inner = 1 if d is None else 1 + discounts[k] * d
        d = gates[k] * inner
    if d is None:
        return 0 * gates[0]
    return d
