"""Dense float64 layers with explicit forward/backward passes.

There is no autodiff graph here: every layer's forward returns whatever the
matching backward needs as a cache, and backward accumulates parameter
gradients in place while returning the gradient w.r.t. the layer input.
All math is float64 and all reductions run through numpy, so results are
reproducible run-to-run on a given platform (the compressor relies on this:
encoder and decoder must walk bit-identical parameter trajectories).
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels

Array = np.ndarray


class Parameter:
    """Learnable tensor plus gradient accumulator and Adam moment state."""

    __slots__ = ("name", "value", "grad", "m", "v", "step_count")

    def __init__(self, name: str, value: Array):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step_count = 0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:  # pragma: no cover
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; same seed gives the same draw sequence."""
    return np.random.Generator(np.random.PCG64(seed))


def uniform_param(name: str, rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Parameter:
    """Weight init: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / math.sqrt(fan_in)
    return Parameter(name, rng.uniform(-bound, bound, size=shape))


def zeros_param(name: str, shape: tuple[int, ...]) -> Parameter:
    return Parameter(name, np.zeros(shape))


def ones_param(name: str, shape: tuple[int, ...]) -> Parameter:
    return Parameter(name, np.ones(shape))


def _check_2d(x: Array, what: str) -> None:
    if x.ndim != 2:
        raise ValueError(f"{what} must be 2-D, got shape {x.shape}")


# ---------------------------------------------------------------------------
# linear
# ---------------------------------------------------------------------------

def linear_forward(x: Array, w: Parameter, b: Parameter) -> Array:
    """out = x @ w + b, with b broadcast over rows."""
    _check_2d(x, "linear input")
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"linear shape mismatch: x {x.shape} vs w {w.shape}")
    if b.shape != (1, w.shape[1]):
        raise ValueError(f"bias shape {b.shape} does not match w {w.shape}")
    out = x @ w.value
    out += b.value
    return out


def linear_backward(x: Array, w: Parameter, b: Parameter, upstream: Array) -> Array:
    """Accumulates w.grad += x^T @ upstream, b.grad += column sums; returns grad_x."""
    if upstream.shape != (x.shape[0], w.shape[1]):
        raise ValueError(f"upstream shape {upstream.shape} mismatches ({x.shape[0]}, {w.shape[1]})")
    w.grad += x.T @ upstream
    b.grad += upstream.sum(axis=0, keepdims=True)
    return upstream @ w.value.T


# ---------------------------------------------------------------------------
# layer norm
# ---------------------------------------------------------------------------

def layer_norm_forward(x: Array, gain: Parameter, bias: Parameter, eps: float = 1e-5):
    """Per-row standardization (population variance, eps under the sqrt) then affine."""
    _check_2d(x, "layer_norm input")
    if gain.shape != (1, x.shape[1]) or bias.shape != (1, x.shape[1]):
        raise ValueError("layer_norm gain/bias shape mismatch")
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    out = x_hat * gain.value + bias.value
    return out, (x_hat, inv_std)


def layer_norm_backward(cache, gain: Parameter, bias: Parameter, upstream: Array) -> Array:
    x_hat, inv_std = cache
    gain.grad += (upstream * x_hat).sum(axis=0, keepdims=True)
    bias.grad += upstream.sum(axis=0, keepdims=True)
    g = upstream * gain.value
    # d/dx of (x - mean)/sqrt(var + eps): remove the row mean and the
    # component along x_hat before rescaling.
    g_mean = g.mean(axis=1, keepdims=True)
    gx_mean = (g * x_hat).mean(axis=1, keepdims=True)
    return (g - g_mean - x_hat * gx_mean) * inv_std


# ---------------------------------------------------------------------------
# GeLU (exact, erf-based)
# ---------------------------------------------------------------------------

def gelu_forward(x: Array):
    x = np.ascontiguousarray(x)
    out = np.empty_like(x)
    cdf = np.empty_like(x)
    _kernels.gelu_fwd(x.reshape(-1), out.reshape(-1), cdf.reshape(-1))
    return out, (x, cdf)


def gelu_backward(cache, upstream: Array) -> Array:
    x, cdf = cache
    upstream = np.ascontiguousarray(upstream)
    out = np.empty_like(x)
    _kernels.gelu_bwd(x.reshape(-1), cdf.reshape(-1), upstream.reshape(-1),
                      out.reshape(-1))
    return out


# ---------------------------------------------------------------------------
# elementwise product
# ---------------------------------------------------------------------------

def hadamard_forward(a: Array, b: Array):
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b, (a, b)


def hadamard_backward(cache, upstream: Array):
    a, b = cache
    return upstream * b, upstream * a


# ---------------------------------------------------------------------------
# per-row (lane-indexed) matrix transform
# ---------------------------------------------------------------------------

def per_row_matmul_forward(x: Array, u: Parameter) -> Array:
    """Row i of the output is x[i] @ u.value[i]; u holds one square matrix per row."""
    _check_2d(x, "per_row_matmul input")
    b, f = x.shape
    if u.value.shape != (b, f, f):
        raise ValueError(f"per-row matrices {u.value.shape} do not match input {x.shape}")
    return np.matmul(x[:, None, :], u.value)[:, 0, :]


def per_row_matmul_backward(x: Array, u: Parameter, upstream: Array) -> Array:
    u.grad += x[:, :, None] * upstream[:, None, :]
    return np.matmul(upstream[:, None, :], np.swapaxes(u.value, 1, 2))[:, 0, :]


# ---------------------------------------------------------------------------
# softmax / cross-entropy
# ---------------------------------------------------------------------------

def softmax(logits: Array) -> Array:
    """Row-wise stable softmax."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Array, targets: Array):
    """Mean NLL in nats over rows, plus probs and d loss / d logits.

    grad_logits = (probs - onehot(targets)) / batch.
    """
    _check_2d(logits, "logits")
    targets = np.asarray(targets)
    if targets.shape != (logits.shape[0],):
        raise ValueError(f"targets shape {targets.shape} mismatches batch {logits.shape[0]}")
    if targets.min() < 0 or targets.max() >= logits.shape[1]:
        raise ValueError("target symbol out of range")
    probs = softmax(logits)
    rows = np.arange(logits.shape[0])
    loss = float(-np.log(probs[rows, targets]).mean())
    grad = probs.copy()
    grad[rows, targets] -= 1.0
    grad /= logits.shape[0]
    return loss, probs, grad


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def adam_step(p: Parameter, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Standard bias-corrected Adam update; consumes and zeroes p.grad."""
    p.step_count += 1
    t = p.step_count
    g = p.grad
    np.multiply(p.m, beta1, out=p.m)
    p.m += (1.0 - beta1) * g
    np.multiply(p.v, beta2, out=p.v)
    p.v += (1.0 - beta2) * (g * g)
    m_hat = p.m / (1.0 - beta1 ** t)
    v_hat = p.v / (1.0 - beta2 ** t)
    p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    p.zero_grad()
