"""Config-file loading and dataclass overrides for the CLI."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib


class ConfigError(Exception):
    pass


def load_config(path: str | Path) -> dict:
    """Parse a JSON or TOML config file (by extension, JSON fallback)."""
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            return tomllib.loads(data.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    try:
        return json.loads(data.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def apply_overrides(instance, overrides: dict | None):
    """Return a dataclass copy with fields replaced from a mapping.

    Unknown keys raise, so config typos fail loudly. Nested dataclass
    fields accept nested mappings.
    """
    if not overrides:
        return instance
    names = {f.name: f for f in dataclasses.fields(instance)}
    changes = {}
    for key, value in overrides.items():
        if key not in names:
            raise ConfigError(
                f"unknown option {key!r} for {type(instance).__name__} "
                f"(valid: {', '.join(sorted(names))})"
            )
        current = getattr(instance, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            changes[key] = apply_overrides(current, value)
        else:
            changes[key] = value
    return dataclasses.replace(instance, **changes)
