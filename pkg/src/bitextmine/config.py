"""Pipeline configuration: YAML file plus CLI-flag overrides (flags win)."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .align import AlignParams
from .embed import ProviderConfig
from .errors import ConfigInvalid

EXPORT_FORMATS = ("jsonl", "tsv")

# CLI flag name -> (section, field) mapping for overrides.
_ALIGN_KEYS = {
    "max_merge": "max_merge",
    "skip_cost": "skip_cost",
    "threshold": "keep_threshold",
    "band": "band_width",
    "exact_limit": "exact_limit",
}
_PROVIDER_KEYS = {
    "backend": "backend",
    "endpoint": "endpoint",
    "batch_size": "batch_size",
    "dimension": "dimension",
    "model_id": "model_id",
    "parallelism": "parallelism",
    "cache_path": "cache_path",
    "seed_map": "seed_map",
}
_TOP_KEYS = {
    "manifest": "manifest",
    "workspace": "workspace",
    "pattern_set": "pattern_set",
    "abbreviations": "abbreviations",
    "format": "export_format",
    "test_top_k": "test_top_k",
    "jobs": "jobs",
    "holdout": "holdout_lectures",
}


@dataclass
class PipelineConfig:
    workspace: Path = Path("work")
    manifest: Path | None = None
    align: AlignParams = field(default_factory=AlignParams)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    pattern_set: Path | None = None
    abbreviations: Path | None = None
    export_format: str = "jsonl"
    holdout_lectures: tuple[str, ...] = ()
    test_top_k: int = 1000
    jobs: int = 0  # 0 means one worker per logical core

    def __post_init__(self):
        if self.export_format not in EXPORT_FORMATS:
            raise ConfigInvalid(f"export format must be one of {EXPORT_FORMATS}")
        if self.test_top_k < 1:
            raise ConfigInvalid("test_top_k must be >= 1")
        if self.jobs < 0:
            raise ConfigInvalid("jobs must be >= 0")

    @property
    def effective_jobs(self) -> int:
        return self.jobs or os.cpu_count() or 1


def _resolve(base: Path, value: Any) -> Path:
    p = Path(str(value))
    return p if p.is_absolute() else (base / p)


def load_config(
    path: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> PipelineConfig:
    """Build a PipelineConfig from an optional YAML file and CLI overrides.

    Relative paths inside the file resolve against the file's directory;
    relative paths given as flags resolve against the working directory.
    """
    align_kwargs: dict[str, Any] = {}
    provider_kwargs: dict[str, Any] = {}
    top_kwargs: dict[str, Any] = {}

    if path is not None:
        base = Path(path).resolve().parent
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}")
        if not isinstance(data, dict):
            raise ConfigInvalid(f"config {path} must be a mapping")
        align_section = data.pop("align", {}) or {}
        provider_section = data.pop("provider", {}) or {}
        if not isinstance(align_section, dict) or not isinstance(provider_section, dict):
            raise ConfigInvalid("'align' and 'provider' sections must be mappings")
        align_kwargs.update(align_section)
        provider_kwargs.update(provider_section)
        for key, value in data.items():
            if key in ("manifest", "workspace", "pattern_set", "abbreviations"):
                top_kwargs[key] = _resolve(base, value)
            elif key == "holdout_lectures":
                top_kwargs["holdout_lectures"] = tuple(str(v) for v in (value or ()))
            elif key in ("export_format", "test_top_k", "jobs"):
                top_kwargs[key] = value
            else:
                raise ConfigInvalid(f"unknown config key {key!r}")
        if "seed_map" in provider_kwargs and provider_kwargs["seed_map"]:
            provider_kwargs["seed_map"] = str(_resolve(base, provider_kwargs["seed_map"]))
        if "cache_path" in provider_kwargs and provider_kwargs["cache_path"]:
            provider_kwargs["cache_path"] = str(_resolve(base, provider_kwargs["cache_path"]))

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in _ALIGN_KEYS:
            align_kwargs[_ALIGN_KEYS[key]] = value
        elif key in _PROVIDER_KEYS:
            provider_kwargs[_PROVIDER_KEYS[key]] = value
        elif key in _TOP_KEYS:
            field_name = _TOP_KEYS[key]
            if field_name in ("manifest", "workspace", "pattern_set", "abbreviations"):
                value = Path(value)
            if field_name == "holdout_lectures":
                value = tuple(value) if not isinstance(value, str) else tuple(
                    v for v in value.split(",") if v
                )
            top_kwargs[field_name] = value
        else:
            raise ConfigInvalid(f"unknown override {key!r}")

    try:
        align = AlignParams(**align_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"invalid align parameters: {exc}")
    try:
        provider = ProviderConfig(**provider_kwargs)
    except TypeError as exc:
        raise ConfigInvalid(f"invalid provider parameters: {exc}")

    try:
        config = PipelineConfig(align=align, provider=provider, **top_kwargs)
    except TypeError as exc:
        raise ConfigInvalid(f"invalid configuration: {exc}")

    if config.manifest is not None and not Path(config.manifest).exists():
        raise ConfigInvalid(f"manifest not found: {config.manifest}")
    if config.pattern_set is not None and not Path(config.pattern_set).exists():
        raise ConfigInvalid(f"pattern set not found: {config.pattern_set}")
    if config.abbreviations is not None and not Path(config.abbreviations).exists():
        raise ConfigInvalid(f"abbreviation list not found: {config.abbreviations}")
    if config.provider.seed_map and not Path(config.provider.seed_map).exists():
        raise ConfigInvalid(f"seed map not found: {config.provider.seed_map}")
    return config


def describe(config: PipelineConfig) -> dict[str, Any]:
    """JSON-friendly dump of the effective configuration."""
    out: dict[str, Any] = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, AlignParams):
            value = {g.name: getattr(value, g.name) for g in fields(AlignParams)}
        elif isinstance(value, ProviderConfig):
            value = {g.name: getattr(value, g.name) for g in fields(ProviderConfig)}
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out
