"""Fused elementwise kernels for the inner training loop.

These exist purely for speed: the straightforward numpy formulations spend
most of their time streaming large arrays through memory once per
sub-expression. Each kernel makes a single pass. Results must match the
composed-op reference formulations in nn.py to float64 rounding; the test
suite checks that equivalence directly.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def adam_update(value, grad, m, v, t, lr, beta1, beta2, eps):
    """Bias-corrected Adam over flat buffers; zeroes grad in place."""
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    k1 = 1.0 - beta1
    k2 = 1.0 - beta2
    for i in range(value.shape[0]):
        g = grad[i]
        mi = beta1 * m[i] + k1 * g
        vi = beta2 * v[i] + k2 * (g * g)
        m[i] = mi
        v[i] = vi
        value[i] -= (lr * (mi / bc1)) / (math.sqrt(vi / bc2) + eps)
        grad[i] = 0.0


@njit(cache=True)
def gelu_fwd(x, out, cdf):
    """out = x * Phi(x) with the exact normal CDF; cdf kept for backward."""
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for i in range(x.shape[0]):
        c = 0.5 * (1.0 + math.erf(x[i] * inv_sqrt2))
        cdf[i] = c
        out[i] = x[i] * c


@njit(cache=True)
def gelu_bwd(x, cdf, upstream, out):
    """out = upstream * (Phi(x) + x * phi(x))."""
    inv_sqrt_2pi = 1.0 / math.sqrt(2.0 * math.pi)
    for i in range(x.shape[0]):
        pdf = inv_sqrt_2pi * math.exp(-0.5 * x[i] * x[i])
        out[i] = upstream[i] * (cdf[i] + x[i] * pdf)
