"""NumPy implementation of the dense kernels.

This is the fallback backend used when the compiled extension is not
available. Results are deterministic run-to-run on a given machine, but the
internal accumulation order is whatever NumPy/BLAS uses, so the last few ulps
may differ from the compiled backend. Cross-backend tests compare with a
relative tolerance; within one backend everything is bit-reproducible.
"""

from __future__ import annotations

import numpy as np


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: float) -> float:
    # Branch on sign so exp() never sees a large positive argument.
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return float(e / (1.0 + e))


def sigmoid_array(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def conv2d_valid(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Valid cross-correlation, stride 1.

    x: (C, H, W) input grid; kernels: (O, C, k, k) bank.
    Returns (O, H-k+1, W-k+1).
    """
    k = kernels.shape[2]
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    # windows: (C, Ho, Wo, k, k)
    return np.einsum("chwij,ocij->ohw", windows, kernels)


def conv2d_grad_kernels(x: np.ndarray, grad_out: np.ndarray, k: int) -> np.ndarray:
    """Gradient of conv2d_valid w.r.t. the kernel bank.

    x: (C, H, W); grad_out: (O, Ho, Wo). Returns (O, C, k, k).
    """
    ho, wo = grad_out.shape[1], grad_out.shape[2]
    windows = np.lib.stride_tricks.sliding_window_view(x, (ho, wo), axis=(1, 2))
    # windows: (C, k, k, Ho, Wo)
    return np.einsum("cijhw,ohw->ocij", windows, grad_out)


def conv2d_grad_input(kernels: np.ndarray, grad_out: np.ndarray,
                      height: int, width: int) -> np.ndarray:
    """Gradient of conv2d_valid w.r.t. the input grid.

    kernels: (O, C, k, k); grad_out: (O, Ho, Wo). Returns (C, height, width).
    Implemented as a full correlation of the padded output gradient with the
    180-degree-rotated kernels.
    """
    k = kernels.shape[2]
    padded = np.pad(grad_out, ((0, 0), (k - 1, k - 1), (k - 1, k - 1)))
    flipped = kernels[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # (C, O, k, k)
    out = conv2d_valid(padded, np.ascontiguousarray(flipped))
    assert out.shape == (kernels.shape[1], height, width)
    return out
