"""Run configuration and output manifests.

A config file is YAML (or JSON) with optional top-level keys ``seed``,
``precision``, ``threads``, ``labels`` and one mapping per section::

    seed: 7
    precision: f64
    labels: [A, B]
    encoder: {layers: 2, dim: 32}
    pretrain: {steps: 200}
    contrastive: {steps: 300, batch_size: 32}
    mclm: {hidden: 64}
    mclm_training: {steps: 400}

Missing keys take their defaults; unknown keys are an error.
"""

from __future__ import annotations

import hashlib
import json
import platform
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from ligspace.contrastive import ContrastiveConfig
from ligspace.encoder import PretrainSettings, SetConfig
from ligspace.errors import ConfigError, MissingInputError
from ligspace.mclm import MclmConfig, MclmSettings

PRECISIONS = {"f32": np.float32, "f64": np.float64}

_SECTIONS = {
    "encoder": SetConfig,
    "pretrain": PretrainSettings,
    "contrastive": ContrastiveConfig,
    "mclm": MclmConfig,
    "mclm_training": MclmSettings,
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    precision: str = "f64"
    threads: int = 1
    labels: tuple[str, ...] = ()
    encoder: SetConfig = field(default_factory=SetConfig)
    pretrain: PretrainSettings = field(default_factory=PretrainSettings)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    mclm: MclmConfig = field(default_factory=MclmConfig)
    mclm_training: MclmSettings = field(default_factory=MclmSettings)

    def __post_init__(self) -> None:
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {sorted(PRECISIONS)}, got '{self.precision}'")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def with_overrides(self, seed: int | None = None, precision: str | None = None,
                       threads: int | None = None) -> "RunConfig":
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if precision is not None:
            changes["precision"] = precision
        if threads is not None:
            changes["threads"] = threads
        return replace(self, **changes) if changes else self

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["labels"] = list(self.labels)
        out["encoder"] = self.encoder.to_dict()
        return out


def _section(cls, data: Any, name: str):
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigError(f"config section '{name}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {unknown}")
    try:
        if hasattr(cls, "from_dict"):
            return cls.from_dict(dict(data))
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from exc


def config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    """Build a :class:`RunConfig`, rejecting unknown keys at every level."""
    top = {"seed", "precision", "threads", "labels", *_SECTIONS}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    kwargs: dict[str, Any] = {name: _section(cls, data.get(name), name) for name, cls in _SECTIONS.items()}
    for key in ("seed", "precision", "threads"):
        if key in data:
            kwargs[key] = data[key]
    if "labels" in data:
        labels = data["labels"]
        if not isinstance(labels, list) or not all(isinstance(label, str) and label for label in labels):
            raise ConfigError("labels must be a list of non-empty strings")
        kwargs["labels"] = tuple(labels)
    return RunConfig(**kwargs)


def load_config(path: str | Path | None) -> RunConfig:
    """Read a YAML/JSON config; ``None`` gives the defaults.

    Raises:
        MissingInputError: If *path* does not exist
        ConfigError: On unparsable files or unknown keys
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data)


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON form of *config*."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def manifest_path(output: str | Path) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def write_manifest(output: str | Path, config: RunConfig, command: str,
                   inputs: Mapping[str, str] | None = None, argv: Sequence[str] | None = None,
                   extra: Mapping[str, Any] | None = None) -> Path:
    """Write ``<output>.manifest.json`` with everything needed to re-run *command*."""
    from ligspace import __version__

    manifest = {
        "command": command,
        "argv": list(sys.argv if argv is None else argv),
        "inputs": dict(inputs or {}),
        "output": str(output),
        "seed": config.seed,
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "versions": {"ligspace": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    if extra:
        manifest["extra"] = dict(extra)
    path = manifest_path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


__all__ = [
    "PRECISIONS",
    "RunConfig",
    "config_from_dict",
    "load_config",
    "config_hash",
    "manifest_path",
    "write_manifest",
]
