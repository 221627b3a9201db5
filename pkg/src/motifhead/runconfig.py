"""Run-config files: TOML in, canonical TOML snapshot out.

Sections and keys mirror the dataclasses they populate; unknown keys are
rejected rather than ignored so typos fail loudly. Every omitted key falls
back to the method defaults (200 epochs, lr 0.001, batch 256, smt 0.5,
rfw 0.5, cw 2.0, 1024 -> 256 -> 20 head, threshold 0.5).
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .heads import HeadConfig
from .losses import LossConfig
from .training import TrainConfig

_DATA_KEYS = {"manifest", "store", "test_fraction", "split_seed"}
_TRAIN_KEYS = {"seed", "epochs", "batch_size", "lr", "eval_every", "threshold"}
_LOSS_KEYS = {"smt", "rfw", "cw"}
_HEAD_KEYS = {"input_dim", "hidden_dims", "output_dim", "kind", "conv_kernel",
              "conv_channels", "grid_shape"}
_SECTIONS = {"data": _DATA_KEYS, "train": _TRAIN_KEYS, "loss": _LOSS_KEYS,
             "head": _HEAD_KEYS}


def _check_keys(doc: dict, path: str) -> None:
    unknown_sections = set(doc) - set(_SECTIONS)
    if unknown_sections:
        raise ConfigError(f"{path}: unknown config sections: "
                          + ", ".join(sorted(unknown_sections)))
    for section, allowed in _SECTIONS.items():
        body = doc.get(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: [{section}] must be a table")
        unknown = set(body) - allowed
        if unknown:
            raise ConfigError(f"{path}: unknown keys in [{section}]: "
                              + ", ".join(sorted(unknown)))


def load_config_doc(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    _check_keys(doc, str(path))
    return doc


def build_train_config(doc: dict, overrides: dict[str, Any] | None = None) -> TrainConfig:
    """Assemble a TrainConfig from a parsed doc plus flat flag overrides.

    Override keys use dotted section paths ("train.lr", "loss.smt", ...);
    flags win over the file.
    """
    merged = {s: dict(doc.get(s, {})) for s in _SECTIONS}
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if section not in _SECTIONS or key not in _SECTIONS[section]:
            raise ConfigError(f"unknown config field {dotted!r}")
        merged[section][key] = value
    train = merged["train"]
    if "seed" not in train:
        raise ConfigError("config is missing train.seed (runs must be seeded)")
    loss = LossConfig(
        smt=float(merged["loss"].get("smt", 0.5)),
        rfw=float(merged["loss"].get("rfw", 0.5)),
        cw=float(merged["loss"].get("cw", 2.0)),
    )
    head_doc = merged["head"]
    head = HeadConfig(
        input_dim=int(head_doc.get("input_dim", 1024)),
        hidden_dims=tuple(head_doc.get("hidden_dims", [256])),
        output_dim=int(head_doc.get("output_dim", 20)),
        head_kind=str(head_doc.get("kind", "mlp")),
        conv_kernel=int(head_doc.get("conv_kernel", 3)),
        conv_channels=tuple(head_doc.get("conv_channels", (64, 32))),
        grid_shape=tuple(head_doc["grid_shape"]) if "grid_shape" in head_doc else None,
    )
    return TrainConfig(
        seed=int(train["seed"]),
        epochs=int(train.get("epochs", 200)),
        batch_size=int(train.get("batch_size", 256)),
        lr=float(train.get("lr", 0.001)),
        loss=loss,
        head=head,
        eval_every=int(train.get("eval_every", 0)),
        threshold=float(train.get("threshold", 0.5)),
    ).validate()


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot render config value {value!r}")


def render_train_config(config: TrainConfig) -> str:
    """Canonical snapshot; parsing it back yields an identical TrainConfig."""
    head = config.head
    lines = [
        "[train]",
        f"seed = {_toml_value(config.seed)}",
        f"epochs = {_toml_value(config.epochs)}",
        f"batch_size = {_toml_value(config.batch_size)}",
        f"lr = {_toml_value(config.lr)}",
        f"eval_every = {_toml_value(config.eval_every)}",
        f"threshold = {_toml_value(config.threshold)}",
        "",
        "[loss]",
        f"smt = {_toml_value(config.loss.smt)}",
        f"rfw = {_toml_value(config.loss.rfw)}",
        f"cw = {_toml_value(config.loss.cw)}",
        "",
        "[head]",
        f"input_dim = {_toml_value(head.input_dim)}",
        f"hidden_dims = {_toml_value(list(head.hidden_dims))}",
        f"output_dim = {_toml_value(head.output_dim)}",
        f"kind = {_toml_value(head.head_kind)}",
        f"conv_kernel = {_toml_value(head.conv_kernel)}",
        f"conv_channels = {_toml_value(list(head.conv_channels))}",
    ]
    if head.grid_shape is not None:
        lines.append(f"grid_shape = {_toml_value(list(head.grid_shape))}")
    return "\n".join(lines) + "\n"
