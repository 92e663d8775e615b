"""Context-dependent multimodal classification toolkit (native core)."""

from __future__ import annotations

import json
from os import PathLike
from typing import Any, Mapping, Optional, Sequence, Union

# libtorch is loaded from the torch wheel; importing it first makes its shared
# libraries available to the extension.
import torch  # noqa: F401

from . import _core
from ._core import (
    ConfigError,
    CuciError,
    DataError,
    LoadError,
    NumericalError,
    PreconditionError,
    SchemaError,
    gradcheck,
    variant_ids,
)

__all__ = [
    "ConfigError",
    "CuciError",
    "DataError",
    "LoadError",
    "NumericalError",
    "PreconditionError",
    "SchemaError",
    "ablate",
    "config",
    "embeddings",
    "evaluate",
    "generate",
    "gradcheck",
    "load_data",
    "predict",
    "routing",
    "sweep_depth",
    "train",
    "variant_ids",
]

Config = Union[str, Mapping[str, Any]]
Path = Union[str, PathLike]


def _config_text(cfg: Config) -> str:
    return cfg if isinstance(cfg, str) else json.dumps(cfg)


def _opt(path: Optional[Path]) -> Optional[str]:
    return None if path is None else str(path)


def config(cfg: Optional[Config] = None, preset: Optional[str] = None) -> dict:
    """Full validated configuration as a dict.

    With `preset` only, returns that preset; otherwise `cfg` (dict or JSON text)
    is parsed with missing keys filled from its preset.
    """
    if cfg is None:
        return json.loads(_core.preset_config(preset or "desk"))
    return json.loads(_core.normalize_config(_config_text(cfg)))


def generate(out_dir: Path, n: int, seed: int, snr: float = 4.0, **kwargs: Any) -> dict:
    return _core.generate(str(out_dir), n, seed, snr, **kwargs)


def load_data(path: Path) -> dict:
    return _core.load_data(str(path))


def train(cfg: Config, data: Path, out_dir: Optional[Path] = None) -> dict:
    return _core.train(_config_text(cfg), str(data), _opt(out_dir))


def evaluate(checkpoint: Path, data: Path, scope: str = "all") -> list:
    return _core.evaluate(str(checkpoint), str(data), scope)


def predict(checkpoint: Path, data: Path) -> dict:
    return _core.predict(str(checkpoint), str(data))


def ablate(cfg: Config, data: Path, variant: str, out_dir: Optional[Path] = None) -> dict:
    return _core.ablate(_config_text(cfg), str(data), variant, _opt(out_dir))


def sweep_depth(cfg: Config, data: Path, depths: Sequence[int], out_dir: Optional[Path] = None) -> list:
    return _core.sweep_depth(_config_text(cfg), str(data), list(depths), _opt(out_dir))


def routing(checkpoint: Path, data: Path, modality: str, layer: int, out_file: Optional[Path] = None) -> dict:
    return _core.routing(str(checkpoint), str(data), modality, layer, _opt(out_file))


def embeddings(checkpoint: Path, data: Path, out_file: Path) -> int:
    return _core.embeddings(str(checkpoint), str(data), str(out_file))
