"""Classification heads over frozen embeddings, with hand-derived gradients.

Two kinds of head:

* ``mlp`` - 1 to 4 linear layers with ReLU between them (none after the
  last). The reference configuration is 1024 -> 256 -> 20, which carries
  exactly 267,540 parameters.
* ``conv`` - two convolution layers (valid, stride 1, no bias) with ReLU,
  then flatten, then the same linear stack. Used for channel-major feature
  grids such as 256x13x20 object-detector maps.

Heads output logits; the sigmoid lives in the loss and metrics layers so
losses can use numerically stable log-sigmoid forms. Gradients are exact
analytic backprop, checked against central finite differences in the tests.

Checkpoint format (little-endian): magic b"MHCK", version u32, config JSON
(u32 byte length + UTF-8 payload), then every parameter tensor as raw
float64 in canonical order: conv kernel banks in layer order, then weight
matrix and bias vector per linear layer.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, ShapeError


@dataclass(frozen=True)
class HeadConfig:
    input_dim: int = 1024
    hidden_dims: tuple[int, ...] = (256,)
    output_dim: int = 20
    head_kind: str = "mlp"  # "mlp" | "conv"
    conv_kernel: int = 3
    conv_channels: tuple[int, int] = (64, 32)
    grid_shape: tuple[int, int, int] | None = None  # (channels, height, width)

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if self.grid_shape is not None:
            object.__setattr__(self, "grid_shape", tuple(int(g) for g in self.grid_shape))

    def validate(self) -> "HeadConfig":
        if self.head_kind not in ("mlp", "conv"):
            raise ConfigError(f"unknown head_kind {self.head_kind!r}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("input_dim and output_dim must be >= 1")
        if len(self.hidden_dims) > 3:
            raise ConfigError("at most 3 hidden layers (4 linear layers) supported")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError("hidden_dims entries must be >= 1")
        if self.head_kind == "conv":
            if self.grid_shape is None:
                raise ConfigError("conv head requires grid_shape (channels, height, width)")
            c, h, w = self.grid_shape
            if self.input_dim != c * h * w:
                raise ConfigError(
                    f"input_dim {self.input_dim} != grid volume {c}*{h}*{w}")
            if self.conv_kernel < 1:
                raise ConfigError("conv_kernel must be >= 1")
            if len(self.conv_channels) != 2:
                raise ConfigError("conv head uses exactly two conv layers")
            h2, w2 = self.conv_output_hw()
            if h2 < 1 or w2 < 1:
                raise ConfigError(
                    f"kernel {self.conv_kernel} too large for grid {h}x{w} "
                    "after two conv layers")
        return self

    def conv_output_hw(self) -> tuple[int, int]:
        """Spatial dims after both conv layers (each shrinks by k - 1)."""
        _, h, w = self.grid_shape
        k = self.conv_kernel
        return h - 2 * (k - 1), w - 2 * (k - 1)

    def linear_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) for every linear layer, in order."""
        if self.head_kind == "conv":
            h2, w2 = self.conv_output_hw()
            first = self.conv_channels[1] * h2 * w2
        else:
            first = self.input_dim
        dims = [first, *self.hidden_dims, self.output_dim]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def to_json_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "head_kind": self.head_kind,
            "conv_kernel": self.conv_kernel,
            "conv_channels": list(self.conv_channels),
            "grid_shape": None if self.grid_shape is None else list(self.grid_shape),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "HeadConfig":
        grid = data.get("grid_shape")
        return cls(
            input_dim=data["input_dim"],
            hidden_dims=tuple(data["hidden_dims"]),
            output_dim=data["output_dim"],
            head_kind=data["head_kind"],
            conv_kernel=data["conv_kernel"],
            conv_channels=tuple(data["conv_channels"]),
            grid_shape=None if grid is None else tuple(grid),
        ).validate()


def parameter_count(config: HeadConfig) -> int:
    """Closed-form count: sum of fan_in*fan_out + fan_out over linear layers,
    plus the conv kernel bank sizes (conv layers carry no bias)."""
    config.validate()
    n = sum(fi * fo + fo for fi, fo in config.linear_dims())
    if config.head_kind == "conv":
        c0 = config.grid_shape[0]
        c1, c2 = config.conv_channels
        k2 = config.conv_kernel ** 2
        n += c1 * c0 * k2 + c2 * c1 * k2
    return n


@dataclass
class HeadParams:
    config: HeadConfig
    conv_kernels: list[np.ndarray] = field(default_factory=list)  # (O, C, k, k) each
    weights: list[np.ndarray] = field(default_factory=list)       # (fan_in, fan_out) each
    biases: list[np.ndarray] = field(default_factory=list)        # (fan_out,) each

    def tensors(self) -> list[np.ndarray]:
        """Canonical tensor order shared by checkpoints, grads, and Adam."""
        out = list(self.conv_kernels)
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def count(self) -> int:
        return sum(t.size for t in self.tensors())

    def copy(self) -> "HeadParams":
        return HeadParams(self.config,
                          [k.copy() for k in self.conv_kernels],
                          [w.copy() for w in self.weights],
                          [b.copy() for b in self.biases])


@dataclass
class HeadGrads:
    conv_kernels: list[np.ndarray]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def tensors(self) -> list[np.ndarray]:
        out = list(self.conv_kernels)
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


@dataclass
class ForwardTrace:
    """Intermediates retained for backprop, batch-major everywhere."""

    conv_inputs: list[np.ndarray]       # per conv layer: (B, C, H, W)
    conv_pre: list[np.ndarray]          # per conv layer: (B, O, Ho, Wo)
    activations: list[np.ndarray]       # input to each linear layer: (B, fan_in)
    pre_activations: list[np.ndarray]   # output of each linear layer: (B, fan_out)


def init_params(config: HeadConfig, seed: int) -> HeadParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, deterministic in seed."""
    config.validate()
    rng = np.random.default_rng(seed)
    params = HeadParams(config)
    if config.head_kind == "conv":
        k = config.conv_kernel
        c_in = config.grid_shape[0]
        for c_out in config.conv_channels:
            bound = 1.0 / np.sqrt(c_in * k * k)
            params.conv_kernels.append(
                rng.uniform(-bound, bound, size=(c_out, c_in, k, k)))
            c_in = c_out
    for fan_in, fan_out in config.linear_dims():
        bound = 1.0 / np.sqrt(fan_in)
        params.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.biases.append(np.zeros(fan_out, dtype=np.float64))
    return params


def _linear_stack_forward(params: HeadParams, x: np.ndarray, trace: ForwardTrace,
                          ) -> np.ndarray:
    n_layers = len(params.weights)
    a = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        trace.activations.append(a)
        z = kernels.matmul(a, w) + b
        trace.pre_activations.append(z)
        if i < n_layers - 1:
            a = kernels.relu(z)
        else:
            a = z
    return a


def forward_batch(params: HeadParams, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Batch forward pass over flat feature vectors.

    x: (B, input_dim) float64. Conv heads reshape each row to the configured
    grid internally. Returns (logits (B, N), trace).
    """
    config = params.config
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise ShapeError(
            f"expected features of shape (B, {config.input_dim}), got {x.shape}")
    trace = ForwardTrace([], [], [], [])
    if config.head_kind == "conv":
        grids = x.reshape((x.shape[0], *config.grid_shape))
        a = grids
        for bank in params.conv_kernels:
            trace.conv_inputs.append(a)
            pre = np.stack([kernels.conv2d_valid(g, bank) for g in a])
            trace.conv_pre.append(pre)
            a = kernels.relu(pre)
        x = a.reshape(x.shape[0], -1)
    logits = _linear_stack_forward(params, x, trace)
    return logits, trace


def forward(params: HeadParams, features: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Single-example forward: features (input_dim,) -> logits (output_dim,)."""
    features = np.asarray(features, dtype=np.float64).reshape(-1)
    logits, trace = forward_batch(params, features[None, :])
    return logits[0], trace


def forward_conv(params: HeadParams, grid: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Single-example forward over a (channels, height, width) grid."""
    if params.config.head_kind != "conv":
        raise ConfigError("forward_conv requires a conv head")
    grid = kernels.as_grid(grid, params.config.grid_shape)
    return forward(params, grid.reshape(-1))


def backward(params: HeadParams, trace: ForwardTrace,
             logit_grad: np.ndarray) -> HeadGrads:
    """Exact gradients of a scalar loss w.r.t. every parameter.

    logit_grad is d(loss)/d(logits), shape (B, N) (or (N,) for a
    single-example trace). Gradients are summed over the batch; any 1/B
    normalization belongs to the loss that produced logit_grad.
    """
    config = params.config
    logit_grad = np.ascontiguousarray(logit_grad, dtype=np.float64)
    if logit_grad.ndim == 1:
        logit_grad = logit_grad[None, :]
    if len(trace.pre_activations) != len(params.weights):
        raise ShapeError("trace does not match head config (linear layer count)")
    if logit_grad.shape != trace.pre_activations[-1].shape:
        raise ShapeError(
            f"logit_grad shape {logit_grad.shape} != logits shape "
            f"{trace.pre_activations[-1].shape}")

    grads = HeadGrads(conv_kernels=[], weights=[], biases=[])
    delta = logit_grad
    for i in range(len(params.weights) - 1, -1, -1):
        a = trace.activations[i]
        grads.weights.insert(0, kernels.matmul(a.T, delta))
        grads.biases.insert(0, delta.sum(axis=0))
        if i > 0:
            delta = kernels.matmul(delta, params.weights[i].T)
            delta = delta * (trace.pre_activations[i - 1] > 0)
    if config.head_kind == "conv":
        # delta is dL/d(pre-activation of linear layer 0); push it through W0
        # and the ReLU that fed the flatten to reach the last conv layer.
        d_flat = kernels.matmul(delta, params.weights[0].T)
        b = d_flat.shape[0]
        h2, w2 = config.conv_output_hw()
        delta_grid = d_flat.reshape(b, config.conv_channels[1], h2, w2)
        delta_grid = delta_grid * (trace.conv_pre[-1] > 0)
        for layer in range(len(params.conv_kernels) - 1, -1, -1):
            bank = params.conv_kernels[layer]
            k = bank.shape[2]
            inputs = trace.conv_inputs[layer]
            gbank = np.zeros_like(bank)
            need_input_grad = layer > 0
            next_delta = None
            if need_input_grad:
                next_delta = np.zeros_like(inputs)
            for n in range(b):
                gbank += kernels.conv2d_grad_kernels(inputs[n], delta_grid[n], k)
                if need_input_grad:
                    next_delta[n] = kernels.conv2d_grad_input(
                        bank, delta_grid[n], inputs.shape[2], inputs.shape[3])
            grads.conv_kernels.insert(0, gbank)
            if need_input_grad:
                delta_grid = next_delta * (trace.conv_pre[layer - 1] > 0)
    return grads


def save_checkpoint(params: HeadParams, path: str | Path) -> None:
    config_blob = json.dumps(params.config.to_json_dict(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(b"MHCK")
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)
        for tensor in params.tensors():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> HeadParams:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != b"MHCK":
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != 1:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack_from("<I", blob, 8)
    config = HeadConfig.from_json_dict(json.loads(blob[12:12 + cfg_len].decode("utf-8")))
    pos = 12 + cfg_len
    params = init_params(config, seed=0)  # shapes only; values overwritten below
    for tensor in params.tensors():
        nbytes = tensor.size * 8
        if pos + nbytes > len(blob):
            raise DataError(f"{path}: truncated checkpoint")
        tensor[...] = np.frombuffer(blob, dtype="<f8", count=tensor.size,
                                    offset=pos).reshape(tensor.shape)
        pos += nbytes
    if pos != len(blob):
        raise DataError(f"{path}: trailing bytes after parameters")
    return params
