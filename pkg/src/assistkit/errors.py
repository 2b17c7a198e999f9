"""Shared exception base for the toolkit.

Every module defines its own specific exceptions; they all derive from
ToolkitError so CLI entry points can map failures to exit codes uniformly.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ToolkitError):
    """Invalid run configuration (bad key, unparseable value, missing file)."""
