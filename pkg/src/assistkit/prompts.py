"""Loader for the prompt template assets bundled with the package.

Templates live in assistkit/prompts/*.txt.  Leading lines starting with
'#' form a header (version, notes) and are stripped before use; the rest is
a str.format template.  Dataset-specific addenda are separate assets named
addendum_<subset>.txt and may be overridden per run with a file path.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .errors import ToolkitError


class MissingPrompt(ToolkitError):
    """No bundled prompt asset with the requested name."""


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    """Return the body of a bundled prompt template, header stripped."""
    ref = resources.files("assistkit") / "prompts" / f"{name}.txt"
    try:
        raw = ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingPrompt(f"no bundled prompt named {name!r}") from None
    lines = raw.splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            body_start = i + 1
        else:
            break
    return "\n".join(lines[body_start:]).strip("\n")


def load_addendum(subset: str, override_path: str | None = None) -> str:
    """Dataset-specific prompt addendum for a subset; empty when none exists."""
    if override_path:
        with open(override_path, "r", encoding="utf-8") as fh:
            return fh.read().strip("\n")
    try:
        return load_prompt(f"addendum_{subset}")
    except MissingPrompt:
        return ""
