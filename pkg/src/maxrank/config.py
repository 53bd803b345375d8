"""Config file loading: JSON, TOML, or a run manifest from an earlier run."""

from __future__ import annotations

import json
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def load_config(path) -> dict:
    """Read a JSON or TOML mapping.

    A manifest written by a previous run is accepted too; its resolved
    ``config`` block is returned so the run can be replayed.
    """
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ValueError(f"{path}: neither valid JSON nor TOML ({exc})") from None
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    if "manifest_version" in data:
        data = data["config"]
    return data
