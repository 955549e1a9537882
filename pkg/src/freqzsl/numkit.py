"""Small dense-network kernels: MLPs with hand-derived backprop, Adam,
seeded RNG streams, and a central-difference gradient checker.

Everything runs on float64 numpy arrays and is intentionally small enough
that every analytic gradient in the repository can be cross-checked against
finite differences. Networks are stacks of affine layers with tanh between
them; the output layer is always a bare affine map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray

ACTIVATIONS = ("tanh", "linear")


def check_finite(name: str, arr: Array) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")


# ---- seeded rng streams ----


@dataclass(frozen=True)
class RngSeed:
    """A 64-bit master seed plus a stream id for independent substreams."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.default_rng(ss)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return RngSeed(seed, stream).generator()


# ---- mlp parameters ----


@dataclass
class MlpParams:
    """Affine stack: y = W_L(...act(W_1 x + b_1)...) + b_L.

    weights[l] has shape (out_l, in_l); biases[l] has shape (out_l,).
    `activation` applies between layers, never after the last one.
    """

    weights: list[Array]
    biases: list[Array]
    activation: str = "tanh"

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be parallel, non-empty lists")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {l}: shapes {w.shape} / {b.shape} do not agree")
            if l > 0 and w.shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"layer {l}: input dim {w.shape[1]} breaks the chain")
            check_finite(f"weights[{l}]", w)
            check_finite(f"biases[{l}]", b)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def param_arrays(self) -> list[Array]:
        """Flat list of parameter arrays; order is stable (weights then bias per layer)."""
        out: list[Array] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_arrays(self, arrays: list[Array]) -> "MlpParams":
        """Rebuild params from a flat array list in param_arrays() order."""
        n = len(self.weights)
        if len(arrays) != 2 * n:
            raise ValueError("array count mismatch")
        ws = [np.asarray(arrays[2 * l], dtype=np.float64) for l in range(n)]
        bs = [np.asarray(arrays[2 * l + 1], dtype=np.float64) for l in range(n)]
        return MlpParams(ws, bs, self.activation)


def init_mlp(sizes: tuple[int, ...] | list[int], rng: np.random.Generator,
             activation: str = "tanh") -> MlpParams:
    """Gaussian init scaled by 1/sqrt(fan_in); biases zero. Deterministic under rng."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    ws, bs = [], []
    for nin, nout in zip(sizes[:-1], sizes[1:]):
        ws.append(rng.standard_normal((nout, nin)) / math.sqrt(nin))
        bs.append(np.zeros(nout))
    return MlpParams(ws, bs, activation)


def zero_mlp(sizes: tuple[int, ...] | list[int], activation: str = "tanh") -> MlpParams:
    ws = [np.zeros((nout, nin)) for nin, nout in zip(sizes[:-1], sizes[1:])]
    bs = [np.zeros(nout) for nout in sizes[1:]]
    return MlpParams(ws, bs, activation)


# ---- forward / backward ----


@dataclass
class MlpCache:
    """Per-layer inputs captured on the forward pass; inputs[l] feeds layer l."""

    inputs: list[Array]
    squeeze: bool


def mlp_forward(params: MlpParams, x: Array) -> tuple[Array, MlpCache]:
    """x (d,) or (B, d) -> output of the affine stack, plus a backprop cache."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != params.in_dim:
        raise ValueError(f"input dim {h.shape} does not match {params.in_dim}")
    check_finite("input", h)
    inputs = []
    n = len(params.weights)
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        h = h @ w.T + b
        if l < n - 1 and params.activation == "tanh":
            h = np.tanh(h)
    y = h[0] if squeeze else h
    return y, MlpCache(inputs, squeeze)


def mlp_backward(params: MlpParams, cache: MlpCache,
                 grad_out: Array) -> tuple[list[Array], Array]:
    """Backprop grad_out (same shape as the forward output) through the stack.

    Returns (grads, grad_in): grads matches param_arrays() order, grad_in is
    d(loss)/d(input). Batched rows are summed into the parameter grads.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :]
    n = len(params.weights)
    gw: list[Array | None] = [None] * n
    gb: list[Array | None] = [None] * n
    for l in range(n - 1, -1, -1):
        h_in = cache.inputs[l]
        gw[l] = g.T @ h_in
        gb[l] = g.sum(axis=0)
        g = g @ params.weights[l]
        if l > 0 and params.activation == "tanh":
            # h_in at layer l is tanh(pre-activation of layer l-1)
            g = g * (1.0 - h_in * h_in)
    grads: list[Array] = []
    for w_g, b_g in zip(gw, gb):
        grads.extend((w_g, b_g))
    grad_in = g[0] if cache.squeeze else g
    return grads, grad_in


def zero_grads_like(arrays: list[Array]) -> list[Array]:
    return [np.zeros_like(a) for a in arrays]


def add_grads(acc: list[Array], extra: list[Array]) -> list[Array]:
    """Elementwise in-place accumulation; returns acc."""
    for a, e in zip(acc, extra):
        a += e
    return acc


# ---- adam ----


@dataclass
class AdamState:
    """Adam with bias correction. Moment buffers are lazily sized on first step.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
    p <- p - lr * m_hat / (sqrt(v_hat) + eps)
    """

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[Array] = field(default_factory=list)
    v: list[Array] = field(default_factory=list)


def adam_step(state: AdamState, params: list[Array], grads: list[Array]) -> None:
    """One update, mutating params and state in place."""
    if len(params) != len(grads):
        raise ValueError("params/grads length mismatch")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match parameter list")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient entries")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---- gradient checker ----


@dataclass(frozen=True)
class GradCheckReport:
    """Worst relative error between analytic and central-difference gradients."""

    max_rel_error: float
    per_param: tuple[float, ...]
    step: float

    def ok(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def grad_check(loss_fn, params: list[Array], step: float = 1e-5,
               floor: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    loss_fn(params) must return (loss, grads) with grads in params order and
    must be deterministic; a second evaluation at the base point verifies
    that. Relative error per entry is |a - n| / max(|a|, |n|, floor).
    """
    base = [p.copy() for p in params]
    loss0, grads0 = loss_fn(base)
    loss1, _ = loss_fn([p.copy() for p in base])
    if loss0 != loss1:
        raise ValueError("loss_fn is not deterministic across calls")
    worst_per: list[float] = []
    for k, p in enumerate(base):
        analytic = np.asarray(grads0[k], dtype=np.float64)
        worst = 0.0
        flat = p.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            lo_plus, _ = loss_fn(base)
            flat[idx] = orig - step
            lo_minus, _ = loss_fn(base)
            flat[idx] = orig
            numeric = (lo_plus - lo_minus) / (2.0 * step)
            a = analytic.reshape(-1)[idx]
            denom = max(abs(a), abs(numeric), floor)
            worst = max(worst, abs(a - numeric) / denom)
        worst_per.append(worst)
    return GradCheckReport(max(worst_per), tuple(worst_per), step)
