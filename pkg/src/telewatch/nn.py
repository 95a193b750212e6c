"""Small float64 neural-network core: dense layers, a forget-gate LSTM cell,
MSE loss, backpropagation (including through time), Adam and a
central-difference gradient checker.

Every forward/backward function accepts either a single vector ``(n,)`` or
a batch ``(batch, n)``; parameter gradients are summed over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeMismatch

ACTIVATIONS = ("tanh", "relu", "identity")
GATES = ("i", "f", "o", "g")


def sigmoid(x):
    # tanh form avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _activate(pre, activation):
    if activation == "tanh":
        return np.tanh(pre)
    if activation == "relu":
        return np.maximum(pre, 0.0)
    return pre.copy()


def _activation_grad(pre, activation):
    if activation == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    if activation == "relu":
        return (pre > 0.0).astype(np.float64)
    return np.ones_like(pre)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    s = np.sqrt(1.0 / fan_in)
    return rng.uniform(-s, s, size=shape)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatch(
                f"weights {self.weights.shape} and bias {self.bias.shape} are inconsistent"
            )

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.weights, self.bias]

    @classmethod
    def init(cls, n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> "DenseLayer":
        return cls(
            uniform_init(rng, (n_out, n_in), n_in),
            uniform_init(rng, (n_out,), n_in),
            activation,
        )


def dense_forward(layer: DenseLayer, x):
    """Return ``act(W x + b)`` and the cache needed by :func:`dense_backward`."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != layer.n_in:
        raise ShapeMismatch(f"input shape {x.shape} does not match layer input width {layer.n_in}")
    pre = x @ layer.weights.T + layer.bias
    return _activate(pre, layer.activation), (x, pre)


def dense_backward(layer: DenseLayer, cache, dy):
    x, pre = cache
    dy = np.asarray(dy, dtype=np.float64)
    if dy.shape != pre.shape:
        raise ShapeMismatch(f"upstream gradient {dy.shape} does not match output {pre.shape}")
    dpre = dy * _activation_grad(pre, layer.activation)
    dx = dpre @ layer.weights
    if x.ndim == 1:
        dW = np.outer(dpre, x)
        db = dpre.copy()
    else:
        dW = dpre.T @ x
        db = dpre.sum(axis=0)
    return dx, dW, db


@dataclass
class LSTMCell:
    """Forget-gate LSTM cell; each gate acts on the concatenation ``[x; h]``."""

    w_i: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    w_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray

    def __post_init__(self):
        for name in ("w_i", "w_f", "w_o", "w_g"):
            setattr(self, name, np.array(getattr(self, name), dtype=np.float64, ndmin=2))
        for name in ("b_i", "b_f", "b_o", "b_g"):
            setattr(self, name, np.array(getattr(self, name), dtype=np.float64).reshape(-1))
        shape = self.w_i.shape
        hidden = shape[0]
        if hidden < 1 or shape[1] <= hidden:
            raise ShapeMismatch(f"gate matrix shape {shape} leaves no input columns")
        for gate in GATES:
            if getattr(self, "w_" + gate).shape != shape:
                raise ShapeMismatch("all gate weight matrices must share one shape")
            if getattr(self, "b_" + gate).shape != (hidden,):
                raise ShapeMismatch(f"gate bias b_{gate} must have length {hidden}")

    @property
    def n_hidden(self) -> int:
        return self.w_i.shape[0]

    @property
    def n_input(self) -> int:
        return self.w_i.shape[1] - self.w_i.shape[0]

    PARAM_NAMES = ("w_i", "w_f", "w_o", "w_g", "b_i", "b_f", "b_o", "b_g")

    def params(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in self.PARAM_NAMES]

    @classmethod
    def init(cls, n_input: int, n_hidden: int, rng: np.random.Generator) -> "LSTMCell":
        fan_in = n_input + n_hidden
        ws = {f"w_{g}": uniform_init(rng, (n_hidden, fan_in), fan_in) for g in GATES}
        bs = {f"b_{g}": uniform_init(rng, (n_hidden,), fan_in) for g in GATES}
        return cls(**ws, **bs)

    @classmethod
    def zeros(cls, n_input: int, n_hidden: int) -> "LSTMCell":
        z = np.zeros((n_hidden, n_input + n_hidden))
        b = np.zeros(n_hidden)
        return cls(z, z.copy(), z.copy(), z.copy(), b, b.copy(), b.copy(), b.copy())


@dataclass
class LSTMStepCache:
    xh: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray


def lstm_step_forward(cell: LSTMCell, x, h, c):
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    H = cell.n_hidden
    if x.shape[-1] != cell.n_input or h.shape[-1] != H or c.shape != h.shape:
        raise ShapeMismatch(
            f"x {x.shape}, h {h.shape}, c {c.shape} do not fit a cell with "
            f"input {cell.n_input} and hidden {H}"
        )
    if x.shape[:-1] != h.shape[:-1]:
        raise ShapeMismatch(f"batch shapes of x {x.shape} and h {h.shape} differ")
    xh = np.concatenate([x, h], axis=-1)
    i = sigmoid(xh @ cell.w_i.T + cell.b_i)
    f = sigmoid(xh @ cell.w_f.T + cell.b_f)
    o = sigmoid(xh @ cell.w_o.T + cell.b_o)
    g = np.tanh(xh @ cell.w_g.T + cell.b_g)
    c_new = f * c + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    return h_new, c_new, LSTMStepCache(xh, c, i, f, o, g, tanh_c)


def _outer_sum(d, xh):
    return np.outer(d, xh) if d.ndim == 1 else d.T @ xh


def _bias_sum(d):
    return d.copy() if d.ndim == 1 else d.sum(axis=0)


def lstm_step_backward(cell: LSTMCell, cache: LSTMStepCache, dh_new, dc_new):
    """Backward pass through one step.

    Returns ``(dx, dh_prev, dc_prev, grads)`` where ``grads`` maps each name
    in ``LSTMCell.PARAM_NAMES`` to its gradient.
    """
    dh_new = np.asarray(dh_new, dtype=np.float64)
    dc_new = np.asarray(dc_new, dtype=np.float64)
    if dh_new.shape != cache.o.shape or dc_new.shape != cache.o.shape:
        raise ShapeMismatch(f"gradient shapes {dh_new.shape}/{dc_new.shape} vs state {cache.o.shape}")
    do = dh_new * cache.tanh_c
    dc = dc_new + dh_new * cache.o * (1.0 - cache.tanh_c**2)
    di = dc * cache.g
    dg = dc * cache.i
    df = dc * cache.c_prev
    dc_prev = dc * cache.f

    da = {
        "i": di * cache.i * (1.0 - cache.i),
        "f": df * cache.f * (1.0 - cache.f),
        "o": do * cache.o * (1.0 - cache.o),
        "g": dg * (1.0 - cache.g**2),
    }
    grads = {}
    dxh = 0.0
    for gate in GATES:
        grads["w_" + gate] = _outer_sum(da[gate], cache.xh)
        grads["b_" + gate] = _bias_sum(da[gate])
        dxh = dxh + da[gate] @ getattr(cell, "w_" + gate)
    n_in = cell.n_input
    return dxh[..., :n_in], dxh[..., n_in:], dc_prev, grads


def lstm_forward(cell: LSTMCell, xs, h0=None, c0=None):
    """Run the cell over ``xs`` of shape ``(T, [batch,] input)``.

    Returns hidden states ``(T, [batch,] hidden)``, the final cell state and
    the per-step caches.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim not in (2, 3) or len(xs) == 0:
        raise ShapeMismatch(f"sequence must have shape (T, [batch,] input), got {xs.shape}")
    state_shape = xs.shape[1:-1] + (cell.n_hidden,)
    h = np.zeros(state_shape) if h0 is None else np.asarray(h0, dtype=np.float64)
    c = np.zeros(state_shape) if c0 is None else np.asarray(c0, dtype=np.float64)
    hs, caches = [], []
    for x in xs:
        h, c, cache = lstm_step_forward(cell, x, h, c)
        hs.append(h)
        caches.append(cache)
    return np.stack(hs), c, caches


@dataclass
class LSTMGrads:
    params: dict
    dxs: np.ndarray
    dh0: np.ndarray
    dc0: np.ndarray


def lstm_backward_through_time(cell: LSTMCell, xs, caches: Sequence[LSTMStepCache], d_hs, dc_last=None) -> LSTMGrads:
    """Backpropagate through an unrolled sequence.

    ``d_hs`` holds the loss gradient with respect to every emitted hidden
    state (zeros where a step's output is unused). Parameter gradients are
    summed over time steps.
    """
    xs = np.asarray(xs, dtype=np.float64)
    d_hs = np.asarray(d_hs, dtype=np.float64)
    if len(caches) != len(xs) or d_hs.shape[0] != len(xs):
        raise ShapeMismatch(
            f"sequence length {len(xs)}, caches {len(caches)}, output grads {d_hs.shape[0]} disagree"
        )
    if d_hs.shape[1:] != caches[-1].o.shape:
        raise ShapeMismatch(f"output gradient shape {d_hs.shape[1:]} vs hidden {caches[-1].o.shape}")
    totals = {name: np.zeros_like(getattr(cell, name)) for name in LSTMCell.PARAM_NAMES}
    dxs = np.zeros_like(xs)
    dh_next = np.zeros_like(d_hs[0])
    dc_next = np.zeros_like(d_hs[0]) if dc_last is None else np.asarray(dc_last, dtype=np.float64)
    for t in range(len(xs) - 1, -1, -1):
        dx, dh_next, dc_next, step_grads = lstm_step_backward(cell, caches[t], d_hs[t] + dh_next, dc_next)
        dxs[t] = dx
        for name, g in step_grads.items():
            totals[name] += g
    return LSTMGrads(totals, dxs, dh_next, dc_next)


def mse_loss(pred, target):
    """Mean squared error over all elements and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **hyper,
        )


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if not (len(params) == len(grads) == len(state.m)):
        raise ShapeMismatch(f"{len(params)} params, {len(grads)} grads, {len(state.m)} accumulators")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise ShapeMismatch(f"parameter {p.shape} vs gradient {np.shape(g)} vs state {m.shape}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)
    return params, state


def grad_check(
    f: Callable[[Sequence[np.ndarray]], tuple],
    params: Sequence[np.ndarray],
    h: float = 1e-5,
    abs_floor: float = 1e-8,
) -> float:
    """Largest elementwise error between analytic and central-difference gradients.

    ``f(params)`` must return ``(loss, grads)`` with one gradient array per
    parameter. The error is relative, except where both gradients are below
    ``abs_floor`` in magnitude, where the absolute difference is used.
    Parameters are perturbed in place and restored.
    """
    _, analytic = f(params)
    worst = 0.0
    for p, g in zip(params, analytic):
        g = np.asarray(g, dtype=np.float64)
        flat = p.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = f(params)[0]
            flat[k] = orig - h
            down = f(params)[0]
            flat[k] = orig
            numeric = (up - down) / (2.0 * h)
            a = g.reshape(-1)[k]
            scale = max(abs(a), abs(numeric))
            err = abs(a - numeric) if scale < abs_floor else abs(a - numeric) / scale
            worst = max(worst, err)
    return worst
