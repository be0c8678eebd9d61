"""Engine and prober configuration (YAML), with documented defaults."""

from __future__ import annotations

import dataclasses
import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

ENV_VAR = "RESTRULE_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CheckSettings:
    entry_point_threshold: int = 1
    large_object_properties: int = 20
    error_markers: tuple[str, ...] = ("error", "errors", "errorCode")
    identity_patterns: tuple[str, ...] = ("id", "*_id", "*Id", "uuid", "key")
    partial_response_params: tuple[str, ...] = ("fields", "select")
    link_markers: tuple[str, ...] = ("links", "_links", "href")
    envelope_members: tuple[str, ...] = ("data", "items", "results", "content", "elements")
    method_override_headers: tuple[str, ...] = (
        "X-HTTP-Method-Override",
        "X-HTTP-Method",
        "X-Method-Override",
    )


@dataclass(frozen=True)
class ProbeSettings:
    base_url: str | None = None
    rate: float = 2.0
    concurrency: int = 2
    timeout: float = 10.0
    retries: int = 1
    deadline: float = 300.0
    safe_mode: bool = True
    unauthenticated: bool = False
    credentials: Mapping[str, str] = field(default_factory=dict)
    examples: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Config:
    disabled_rules: frozenset[int] = frozenset()
    checks: CheckSettings = CheckSettings()
    probe: ProbeSettings = ProbeSettings()
    external_refs: bool = False
    lexicon: str | None = None


_SECTIONS = {"version", "rules", "checks", "probe", "ingest", "lexicon"}


def _reject_unknown(section: str, data: Mapping[str, Any], allowed: set[str]) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(map(str, unknown))}")


def _coerce(section: str, name: str, value: Any, default: Any) -> Any:
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{section}.{name} must be a list of strings")
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{name} must be true or false")
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ConfigError(f"{section}.{name} must be a non-negative integer")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
            raise ConfigError(f"{section}.{name} must be a positive number")
        return float(value)
    if isinstance(default, Mapping):
        if not isinstance(value, Mapping):
            raise ConfigError(f"{section}.{name} must be a mapping")
        return {str(k): str(v) for k, v in value.items()}
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"{section}.{name} must be a string")
    return value


def _section(cls, section: str, data: Any):
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigError(f"{section} must be a mapping")
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    _reject_unknown(section, data, names)
    values = {k: _coerce(section, k, v, getattr(defaults, k)) for k, v in data.items()}
    return dataclasses.replace(defaults, **values)


def parse_config(doc: Any) -> Config:
    if doc is None:
        return Config()
    if not isinstance(doc, Mapping):
        raise ConfigError("config document must be a mapping")
    _reject_unknown("config", doc, _SECTIONS)
    if doc.get("version", 1) != 1:
        raise ConfigError(f"unsupported config version {doc.get('version')!r}")

    disabled = set()
    rules = doc.get("rules") or {}
    if not isinstance(rules, Mapping):
        raise ConfigError("rules must map rule ids to settings")
    for key, settings in rules.items():
        try:
            rule_id = int(key)
        except (TypeError, ValueError):
            raise ConfigError(f"rules: {key!r} is not a rule id") from None
        if not isinstance(settings, Mapping):
            raise ConfigError(f"rules.{rule_id} must be a mapping")
        _reject_unknown(f"rules.{rule_id}", settings, {"enabled"})
        if settings.get("enabled", True) is False:
            disabled.add(rule_id)

    ingest = doc.get("ingest") or {}
    if not isinstance(ingest, Mapping):
        raise ConfigError("ingest must be a mapping")
    _reject_unknown("ingest", ingest, {"external_refs"})
    external = _coerce("ingest", "external_refs", ingest.get("external_refs", False), False)

    lexicon = doc.get("lexicon")
    if lexicon is not None and not isinstance(lexicon, str):
        raise ConfigError("lexicon must be a file path")

    return Config(
        disabled_rules=frozenset(disabled),
        checks=_section(CheckSettings, "checks", doc.get("checks")),
        probe=_section(ProbeSettings, "probe", doc.get("probe")),
        external_refs=external,
        lexicon=lexicon,
    )


def load_config(path: str | Path | None = None) -> Config:
    """Load ``path``, else ``$RESTRULE_CONFIG``, else built-in defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return Config()
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from None
    config = parse_config(doc)
    if config.lexicon and not Path(config.lexicon).is_absolute():
        config = dataclasses.replace(config, lexicon=str(path.parent / config.lexicon))
    return config


def default_config_text() -> str:
    """The default configuration as a commented YAML document."""
    checks = dataclasses.asdict(CheckSettings())
    probe = dataclasses.asdict(ProbeSettings())
    doc = {
        "version": 1,
        "rules": {},
        "checks": {k: list(v) if isinstance(v, tuple) else v for k, v in checks.items()},
        "ingest": {"external_refs": False},
        "probe": probe,
    }
    header = (
        "# restrule configuration (defaults)\n"
        "# Per-rule switches go under `rules`, e.g.\n"
        "#   rules:\n"
        "#     63: {enabled: false}\n"
        "# `lexicon: path/to/words.yaml` extends the URI word lists.\n"
    )
    return header + yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)
