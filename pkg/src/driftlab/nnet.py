"""Feedforward network with inverted dropout, Adam training and MC-dropout sampling."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

HEADS = ("linear", "softmax")


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple[int, ...]
    dropout_rates: tuple[float, ...]
    output_head: str = "linear"
    hidden_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        object.__setattr__(self, "dropout_rates", tuple(float(r) for r in self.dropout_rates))
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"invalid layer sizes {self.layer_sizes}")
        if len(self.dropout_rates) != self.n_hidden:
            raise ValueError(
                f"need one dropout rate per hidden layer ({self.n_hidden}), got {len(self.dropout_rates)}"
            )
        if any(not 0.0 <= r < 1.0 for r in self.dropout_rates):
            raise ValueError(f"dropout rates must lie in [0, 1): {self.dropout_rates}")
        if self.output_head not in HEADS:
            raise ValueError(f"unknown output head {self.output_head!r}")
        if self.hidden_activation != "relu":
            raise ValueError("only relu hidden activations are supported")

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def check_depth(self, lo: int = 3, hi: int = 5) -> None:
        if not lo <= self.n_hidden <= hi:
            raise ValueError(f"expected {lo}-{hi} hidden layers, got {self.n_hidden}")


@dataclass(frozen=True)
class Network:
    """Parameters plus the affine output scaling used for regression targets.

    ``weights[i]`` has shape ``(layer_sizes[i], layer_sizes[i + 1])``.
    """

    spec: NetworkSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    seed: int = 0
    target_shift: float = 0.0
    target_scale: float = 1.0

    def __post_init__(self):
        sizes = self.spec.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("parameter count does not match layer sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ValueError(f"layer {i}: bad shapes {w.shape}, {b.shape}")

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    dropout_in_training: bool = True
    weight_decay: float = 0.0
    # group lasso on the input layer, one group per feature; 0 disables it
    input_group_l1: float = 0.0
    input_group_reweight: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class PredictiveSample:
    """Outputs of ``T`` dropout-active passes, one row per pass."""

    passes: np.ndarray
    head: str = "linear"

    def __post_init__(self):
        self.passes = np.atleast_2d(np.asarray(self.passes, dtype=float))
        if self.passes.shape[0] < 1:
            raise ValueError("empty predictive sample")

    @property
    def T(self) -> int:
        return self.passes.shape[0]


def init_network(spec: NetworkSpec, seed: int) -> Network:
    """He-uniform weights (fan-in scaled), zero biases."""
    spec.check_depth()
    return _init(spec, seed)


def _init(spec: NetworkSpec, seed: int) -> Network:
    rng = np.random.default_rng(seed)
    sizes = spec.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(spec, tuple(weights), tuple(biases), seed=seed)


def _draw_masks(spec: NetworkSpec, rng: np.random.Generator, n: int) -> list[np.ndarray]:
    """Inverted-dropout masks (kept units scaled by 1/(1-rate)) for ``n`` rows."""
    widths = spec.layer_sizes[1:-1]
    rates = np.repeat(spec.dropout_rates, widths)
    u = rng.random((n, rates.size))
    masks = (u >= rates) * (1.0 / (1.0 - rates))
    bounds = np.cumsum((0,) + widths)
    return [masks[:, a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_raw(net: Network, X: np.ndarray, masks=None, cache: list | None = None) -> np.ndarray:
    """Pre-head outputs for a batch; fills ``cache`` with (input, preactivation) pairs."""
    a = X
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W + b
        if cache is not None:
            cache.append((a, z))
        if i == last:
            return z
        a = np.maximum(z, 0.0)
        if masks is not None:
            a = a * masks[i]
    raise AssertionError("unreachable")


def _head(net: Network, z: np.ndarray) -> np.ndarray:
    if net.spec.output_head == "softmax":
        return _softmax(z)
    return z * net.target_scale + net.target_shift


def _check_input(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.spec.n_inputs:
        raise ValueError(f"expected {net.spec.n_inputs} features, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    return x


def forward(net: Network, x, dropout_active: bool = False, mask_seed: int = 0) -> np.ndarray:
    """One pass for a single instance; ``mask_seed`` fixes the dropout masks."""
    x = _check_input(net, x).reshape(1, -1)
    masks = _draw_masks(net.spec, np.random.default_rng(mask_seed), 1) if dropout_active else None
    return _head(net, _forward_raw(net, x, masks))[0]


def predict(net: Network, X) -> np.ndarray:
    """Deterministic (dropout off) outputs for a batch."""
    X = _check_input(net, np.atleast_2d(X))
    return _head(net, _forward_raw(net, X))


def mc_predict(net: Network, x, T: int, seed: int) -> PredictiveSample:
    """``T`` dropout-active passes for one instance, all masks drawn from ``seed``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    x = _check_input(net, x).reshape(1, -1)
    masks = _draw_masks(net.spec, np.random.default_rng(seed), T)
    # every pass sees the same input, so the first affine map is shared
    z0 = x @ net.weights[0] + net.biases[0]
    a = np.maximum(z0, 0.0) * masks[0]
    last = len(net.weights) - 1
    for i in range(1, last):
        a = np.maximum(a @ net.weights[i] + net.biases[i], 0.0) * masks[i]
    z = a @ net.weights[last] + net.biases[last]
    return PredictiveSample(_head(net, z), net.spec.output_head)


def _loss_and_grad(net: Network, X, y, masks=None, scaled_targets=None):
    """Mean loss over the batch and gradients w.r.t. every parameter.

    Regression loss is the per-instance squared error summed over outputs; it is
    taken on the scaled output ``z`` when ``scaled_targets`` is given (training),
    otherwise on the head output.
    """
    cache: list = []
    z = _forward_raw(net, X, masks, cache)
    n = X.shape[0]
    if net.spec.output_head == "softmax":
        p = _softmax(z)
        idx = np.asarray(y, dtype=int)
        loss = -np.mean(np.log(np.maximum(p[np.arange(n), idx], 1e-300)))
        dz = p.copy()
        dz[np.arange(n), idx] -= 1.0
        dz /= n
    else:
        t = np.asarray(y, dtype=float).reshape(n, -1)
        if scaled_targets is not None:
            diff = z - scaled_targets.reshape(n, -1)
            dz = 2.0 * diff / n
        else:
            diff = z * net.target_scale + net.target_shift - t
            dz = 2.0 * diff * net.target_scale / n
        loss = np.sum(diff**2) / n
    gW = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        a_prev, _ = cache[i]
        gW[i] = a_prev.T @ dz
        gb[i] = dz.sum(axis=0)
        if i == 0:
            break
        da = dz @ net.weights[i].T
        if masks is not None:
            da = da * masks[i - 1]
        dz = da * (cache[i - 1][1] > 0)
    return loss, gW, gb


def loss(net: Network, inputs, targets) -> float:
    X = _check_input(net, np.atleast_2d(inputs))
    return float(_loss_and_grad(net, X, targets)[0])


def train(net: Network, inputs, targets, cfg: TrainConfig = TrainConfig()) -> Network:
    """Minibatch Adam from the parameters of ``net``; returns a new Network.

    Regression targets are standardized internally; the returned network maps
    back to the original target units.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets)
    if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("inputs and targets must be nonempty and equally long")
    if X.shape[0] < cfg.batch_size:
        raise ValueError("fewer samples than batch_size")
    X = _check_input(net, X)
    if not np.all(np.isfinite(y.astype(float))):
        raise ValueError("non-finite targets")

    regression = net.spec.output_head == "linear"
    if regression:
        y = y.astype(float).reshape(len(y), -1)
        shift = float(y.mean())
        scale = float(y.std()) or 1.0
        scaled = (y - shift) / scale
        net = replace(net, target_shift=shift, target_scale=scale)
    else:
        y = y.astype(int)
        if y.min() < 0 or y.max() >= net.spec.n_outputs:
            raise ValueError("class index out of range")
        scaled = None

    rng = np.random.default_rng(cfg.seed)
    W = [w.copy() for w in net.weights]
    B = [b.copy() for b in net.biases]
    params = W + B
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    n = X.shape[0]
    work = replace(net, weights=tuple(W), biases=tuple(B))
    group_w = np.ones((W[0].shape[0], 1))
    for epoch in range(cfg.epochs):
        if cfg.input_group_reweight and epoch:
            # reweighted lasso: small groups get a larger penalty next epoch
            norms = np.sqrt(np.sum(W[0] * W[0], axis=1, keepdims=True))
            ref = float(norms.mean())
            group_w = ref / (norms + 0.1 * ref) if ref > 0 else np.ones_like(norms)
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            masks = _draw_masks(net.spec, rng, len(idx)) if cfg.dropout_in_training else None
            tgt = scaled[idx] if regression else y[idx]
            _, gW, gb = _loss_and_grad(work, X[idx], tgt, masks, tgt if regression else None)
            step += 1
            c1 = 1.0 - cfg.beta1**step
            c2 = 1.0 - cfg.beta2**step
            if cfg.weight_decay:
                gW = [g + cfg.weight_decay * w for g, w in zip(gW, W)]
            for p, g, mi, vi in zip(params, gW + gb, m, v):
                mi *= cfg.beta1
                mi += (1.0 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1.0 - cfg.beta2) * g * g
                p -= cfg.learning_rate * (mi / c1) / (np.sqrt(vi / c2) + cfg.eps)
            if cfg.input_group_l1:
                # group soft-threshold: one group per input feature (a row of W[0])
                shrink = cfg.learning_rate * cfg.input_group_l1
                norms = np.sqrt(np.sum(W[0] * W[0], axis=1, keepdims=True))
                W[0] *= np.maximum(1.0 - shrink * group_w / np.maximum(norms, 1e-300), 0.0)
    out = replace(net, weights=tuple(W), biases=tuple(B))
    if not all(np.all(np.isfinite(p)) for p in params):
        raise FloatingPointError("training diverged")
    return out


def gradient_check(net: Network, x, target, step: float = 1e-5) -> float:
    """Max relative error between backprop and central differences (dropout off)."""
    X = _check_input(net, x).reshape(1, -1)
    y = np.atleast_1d(np.asarray(target))
    _, gW, gb = _loss_and_grad(net, X, y)
    analytic = gW + gb
    params = [w.copy() for w in net.weights] + [b.copy() for b in net.biases]
    k = len(net.weights)

    def loss_at(ps):
        trial = replace(net, weights=tuple(ps[:k]), biases=tuple(ps[k:]))
        return _loss_and_grad(trial, X, y)[0]

    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + step
            up = loss_at(params)
            flat[j] = old - step
            down = loss_at(params)
            flat[j] = old
            fd = (up - down) / (2 * step)
            err = abs(gflat[j] - fd) / (abs(gflat[j]) + abs(fd) + 1e-12)
            worst = max(worst, err)
    return worst


def network_from_arrays(weights: Sequence, biases: Sequence, output_head: str = "linear",
                        dropout_rates: Sequence[float] | None = None) -> Network:
    """Wrap explicit parameter arrays (any depth); used for diagnostics."""
    weights = tuple(np.atleast_2d(np.asarray(w, dtype=float)) for w in weights)
    biases = tuple(np.atleast_1d(np.asarray(b, dtype=float)) for b in biases)
    sizes = [weights[0].shape[0]] + [w.shape[1] for w in weights]
    rates = tuple(dropout_rates) if dropout_rates is not None else (0.0,) * (len(sizes) - 2)
    return Network(NetworkSpec(tuple(sizes), rates, output_head), weights, biases)


def random_network(layer_sizes: Sequence[int], output_head: str, seed: int,
                   dropout_rates: Sequence[float] | None = None, bias_scale: float = 0.1) -> Network:
    """Randomly initialised network of any depth (no 3-5 hidden layer rule).

    Biases are drawn from U(-bias_scale, bias_scale) rather than zero so that
    a dead layer does not feed exact zeros, i.e. ReLU kinks, to the next one;
    finite differences are meaningless there.
    """
    rates = tuple(dropout_rates) if dropout_rates is not None else (0.0,) * (len(layer_sizes) - 2)
    net = _init(NetworkSpec(tuple(layer_sizes), rates, output_head), seed)
    rng = np.random.default_rng([seed, 1])
    biases = tuple(rng.uniform(-bias_scale, bias_scale, size=b.shape) for b in net.biases)
    return replace(net, biases=biases)
