"""Key-value run configuration.

Config files are plain text, one dotted key per line::

    # metric settings
    match.p_exponent = 1.5
    match.sim_threshold = 0.5
    embed.provider = hashed-bow
    sweep.grid = [0.1, 0.2, 0.3]

Values are parsed as JSON when possible (numbers, booleans, lists, null)
and kept as bare strings otherwise.  Every key can also be supplied on the
command line as ``--set key=value``; credentials never belong in a config
file and come from environment variables instead.
"""

from __future__ import annotations

import json
import os
import re

from .errors import ConfigError

_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*(\.[A-Za-z_][A-Za-z0-9_-]*)*$")


def _parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_text(text: str, source: str = "<config>") -> "dict[str, object]":
    """Parse dotted key = value lines into a flat dict."""
    config: dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"{source}:{line_no}: bad key {key!r}")
        config[key] = _parse_value(raw)
    return config


def load_config(path: "str | os.PathLike") -> "dict[str, object]":
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def apply_overrides(config: "dict[str, object]", assignments: "list[str]") -> None:
    """Apply --set key=value pairs on top of a parsed config."""
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"--set expects key=value, got {assignment!r}")
        key, _, raw = assignment.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"--set: bad key {key!r}")
        config[key] = _parse_value(raw)
