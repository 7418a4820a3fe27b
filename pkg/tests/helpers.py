"""Shared oracles: central finite differences and gradient comparison."""

import numpy as np

from edpc.nn import Parameter


def finite_diff(loss_fn, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of loss_fn w.r.t. every element of arr.

    loss_fn takes no arguments and reads arr; arr is restored afterwards.
    """
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


def check_param_grad(loss_fn, p: Parameter, analytic: np.ndarray,
                     h: float = 1e-5, floor: float = 1e-8) -> float:
    return rel_err(analytic, finite_diff(loss_fn, p.value, h), floor)


def scalar_adam_trajectory(w0: float, lr: float, steps: int,
                           beta1: float = 0.9, beta2: float = 0.999,
                           eps: float = 1e-8):
    """Independent plain-float Adam on f(w) = (w - 3)^2."""
    import math
    w, m, v = w0, 0.0, 0.0
    traj = []
    for t in range(1, steps + 1):
        g = 2.0 * (w - 3.0)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * (g * g)
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        w -= lr * m_hat / (math.sqrt(v_hat) + eps)
        traj.append(w)
    return traj
