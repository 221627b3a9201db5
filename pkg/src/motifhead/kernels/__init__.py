"""Dense float64 kernels used by every numeric module.

Two interchangeable backends implement the same operations:

* ``_core`` - compiled Cython extension with an explicit, fixed left-to-right
  accumulation order (preferred when built);
* ``numpy_backend`` - pure NumPy fallback.

Selection happens once at import. The MOTIFHEAD_KERNELS environment variable
forces a backend: ``cython`` (error if the extension is missing), ``numpy``,
or ``auto`` (default). ``motifhead.kernels.BACKEND`` reports the choice;
``benchmarks/bench_kernels.py`` compares the two.

Array conventions: a matrix is a 2-D C-order float64 ndarray (rows, cols); a
feature grid is a 3-D C-order float64 ndarray (channels, height, width);
a kernel bank is 4-D (out_channels, in_channels, k, k). Finiteness is
enforced where data enters from files (see motifhead.store), not per call.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import ConfigError, ShapeError
from . import numpy_backend as _np_impl

try:
    from . import _core as _cy_impl
except ImportError:
    _cy_impl = None


def _select_backend():
    requested = os.environ.get("MOTIFHEAD_KERNELS", "auto").strip().lower()
    if requested in ("auto", ""):
        return (_cy_impl, "cython") if _cy_impl is not None else (_np_impl, "numpy")
    if requested in ("cython", "compiled"):
        if _cy_impl is None:
            raise ConfigError(
                "MOTIFHEAD_KERNELS=cython but the compiled extension is not "
                "available; reinstall with the extension or use numpy")
        return _cy_impl, "cython"
    if requested in ("numpy", "python"):
        return _np_impl, "numpy"
    raise ConfigError(f"unknown kernel backend {requested!r}")


_impl, BACKEND = _select_backend()


def backends() -> dict[str, object]:
    """All importable backend modules, keyed by name."""
    out: dict[str, object] = {"numpy": _np_impl}
    if _cy_impl is not None:
        out["cython"] = _cy_impl
    return out


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce to a C-order float64 matrix, optionally checking its shape."""
    m = np.ascontiguousarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeError(f"expected {cols} cols, got {m.shape[1]}")
    return m


def as_grid(data, shape: tuple[int, int, int] | None = None) -> np.ndarray:
    """Coerce to a C-order float64 (channels, height, width) grid."""
    g = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        g = g.reshape(shape)
    if g.ndim != 3:
        raise ShapeError(f"expected a 3-D grid, got ndim={g.ndim}")
    return g


def check_finite(arr: np.ndarray, what: str = "array") -> np.ndarray:
    from ..errors import NumericError

    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with deterministic accumulation.

    Raises ShapeError when inner dimensions disagree.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    if a.shape[0] == 0 or b.shape[1] == 0:
        return np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    return _impl.matmul(a, b)


def relu(x) -> np.ndarray:
    return _impl.relu(np.asarray(x, dtype=np.float64))


def sigmoid(x: float) -> float:
    return float(_impl.sigmoid(float(x)))


def sigmoid_array(x) -> np.ndarray:
    return _impl.sigmoid_array(np.asarray(x, dtype=np.float64))


def conv2d_valid(grid: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Valid (no padding, stride 1) cross-correlation of a grid with a bank.

    grid: (C, H, W); kernels: (O, C, k, k) with k <= min(H, W).
    Output spatial dims are (H - k + 1, W - k + 1).
    """
    grid = as_grid(grid)
    kernels = np.ascontiguousarray(kernels, dtype=np.float64)
    if kernels.ndim != 4 or kernels.shape[2] != kernels.shape[3]:
        raise ShapeError(f"kernel bank must be (O, C, k, k), got {kernels.shape}")
    k = kernels.shape[2]
    if kernels.shape[1] != grid.shape[0]:
        raise ShapeError(
            f"kernel bank expects {kernels.shape[1]} channels, grid has {grid.shape[0]}")
    if k < 1 or k > min(grid.shape[1], grid.shape[2]):
        raise ShapeError(
            f"kernel size {k} does not fit grid {grid.shape[1]}x{grid.shape[2]}")
    return _impl.conv2d_valid(grid, kernels)


def conv2d_grad_kernels(grid: np.ndarray, grad_out: np.ndarray, k: int) -> np.ndarray:
    grid = as_grid(grid)
    grad_out = as_grid(grad_out)
    if grad_out.shape[1] != grid.shape[1] - k + 1 or grad_out.shape[2] != grid.shape[2] - k + 1:
        raise ShapeError("grad_out spatial dims inconsistent with grid and kernel size")
    return _impl.conv2d_grad_kernels(grid, grad_out, k)


def conv2d_grad_input(kernels: np.ndarray, grad_out: np.ndarray,
                      height: int, width: int) -> np.ndarray:
    kernels = np.ascontiguousarray(kernels, dtype=np.float64)
    grad_out = as_grid(grad_out)
    if grad_out.shape[0] != kernels.shape[0]:
        raise ShapeError("grad_out channels disagree with kernel bank")
    return _impl.conv2d_grad_input(kernels, grad_out, height, width)
