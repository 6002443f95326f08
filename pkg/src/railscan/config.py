"""One human-readable run-config document for the whole pipeline.

The file is YAML (JSON parses too) with nested sections; defaults match the
published training setup where one is stated. Unknown keys anywhere are
rejected before any work starts, and command-line flags override file values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import get_args, get_origin, get_type_hints

import yaml

from .datagen import AnomalySpec, SceneParams
from .losses import LossConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid or unknown run-config content."""


@dataclass(frozen=True)
class LocalizationConfig:
    quantile: float = 0.995
    min_area: int = 20

    def __post_init__(self) -> None:
        if not 0.0 < self.quantile < 1.0:
            raise ValueError(f"quantile must be in (0, 1), got {self.quantile}")
        if self.min_area < 1:
            raise ValueError(f"min_area must be >= 1, got {self.min_area}")


@dataclass(frozen=True)
class DatagenConfig:
    train_normal: int = 256
    test_normal: int = 50
    test_abnormal: int = 50
    scene: SceneParams = field(default_factory=SceneParams)
    anomaly: AnomalySpec = field(default_factory=AnomalySpec)

    def __post_init__(self) -> None:
        if self.train_normal < 1:
            raise ValueError(f"train_normal must be >= 1, got {self.train_normal}")
        if self.test_normal < 0 or self.test_abnormal < 0:
            raise ValueError(
                f"test counts must be >= 0, got {self.test_normal}, {self.test_abnormal}"
            )


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    dataset_dir: str | None = None
    checkpoint: str | None = None
    variant: str = "encoded"
    train: TrainConfig = field(default_factory=TrainConfig)
    localization: LocalizationConfig = field(default_factory=LocalizationConfig)
    datagen: DatagenConfig = field(default_factory=DatagenConfig)

    def resolved_train(self) -> TrainConfig:
        """TrainConfig with the run-level seed and paths folded in."""
        return replace(
            self.train,
            seed=self.seed,
            dataset_dir=self.dataset_dir,
            checkpoint_path=self.checkpoint,
        )


# sections of the document and the dataclass each one populates
_SECTIONS = {
    "train": TrainConfig,
    "loss": LossConfig,
    "model": None,  # dropout_rate / final_decoder_batch_norm, folded into TrainConfig
    "localization": LocalizationConfig,
    "datagen": DatagenConfig,
}
_TOP_SCALARS = ("seed", "dataset_dir", "checkpoint", "variant")
_MODEL_KEYS = ("dropout_rate", "final_decoder_batch_norm")
_TRAIN_EXCLUDED = ("seed", "loss", "dataset_dir", "checkpoint_path") + _MODEL_KEYS


def _coerce(value, annotation, path: str):
    origin = get_origin(annotation)
    if origin is not None and type(None) in get_args(annotation):  # Optional[...]
        if value is None:
            return None
        inner = [a for a in get_args(annotation) if a is not type(None)]
        return _coerce(value, inner[0], path)
    if is_dataclass(annotation):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping, got {type(value).__name__}")
        return _build_dataclass(annotation, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        args = get_args(annotation)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if annotation is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if annotation is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if annotation is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported config field type {annotation}")


def _build_dataclass(cls, mapping: dict, path: str, exclude: tuple[str, ...] = ()):
    hints = get_type_hints(cls)
    allowed = {f.name for f in fields(cls)} - set(exclude)
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)} (allowed: {sorted(allowed)})")
    kwargs = {k: _coerce(v, hints[k], f"{path}.{k}") for k, v in mapping.items()}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def run_config_from_dict(doc: dict) -> RunConfig:
    """Validate a parsed document and assemble the RunConfig."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"run config must be a mapping, got {type(doc).__name__}")
    unknown = set(doc) - set(_TOP_SCALARS) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    seed = _coerce(doc.get("seed", 0), int, "seed")
    dataset_dir = _coerce(doc.get("dataset_dir"), str | None, "dataset_dir")
    checkpoint = _coerce(doc.get("checkpoint"), str | None, "checkpoint")
    variant = _coerce(doc.get("variant", "encoded"), str, "variant")
    if variant not in ("l1", "l2", "bottleneck", "encoded"):
        raise ConfigError(f"variant must be l1/l2/bottleneck/encoded, got {variant!r}")

    loss = _build_dataclass(LossConfig, doc.get("loss", {}) or {}, "loss")
    model_section = doc.get("model", {}) or {}
    unknown = set(model_section) - set(_MODEL_KEYS)
    if unknown:
        raise ConfigError(f"model: unknown keys {sorted(unknown)} (allowed: {sorted(_MODEL_KEYS)})")
    train_section = dict(doc.get("train", {}) or {})
    bad = set(train_section) & set(_TRAIN_EXCLUDED)
    if bad:
        raise ConfigError(f"train: keys {sorted(bad)} are set elsewhere (top level / loss / model)")
    train = _build_dataclass(TrainConfig, train_section, "train", exclude=_TRAIN_EXCLUDED)
    train = replace(
        train,
        loss=loss,
        dropout_rate=_coerce(model_section.get("dropout_rate", 0.3), float, "model.dropout_rate"),
        final_decoder_batch_norm=_coerce(
            model_section.get("final_decoder_batch_norm", True), bool, "model.final_decoder_batch_norm"
        ),
    )
    localization = _build_dataclass(LocalizationConfig, doc.get("localization", {}) or {}, "localization")
    datagen = _build_dataclass(DatagenConfig, doc.get("datagen", {}) or {}, "datagen")
    return RunConfig(
        seed=seed,
        dataset_dir=dataset_dir,
        checkpoint=checkpoint,
        variant=variant,
        train=train,
        localization=localization,
        datagen=datagen,
    )


def load_run_config(path: str | Path | None) -> RunConfig:
    """Parse the YAML document at ``path``; None yields pure defaults."""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return run_config_from_dict(doc)
