"""CLI error types and their process exit codes."""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG = 2          # invalid config or predictions schema
EXIT_ASSETS = 3          # asset files missing or unreadable
EXIT_GENERATION = 4      # sample/pair generation or training failure
EXIT_FLOW_WRITE = 5      # cannot write a flow file
EXIT_SOLVER = 6          # poisson-clone did not converge


class ConfigError(ValueError):
    """Malformed config, manifest, or predictions file; message carries the
    offending field path."""


class AssetError(RuntimeError):
    """Required assets are missing."""


class GenerationError(RuntimeError):
    """A sample or pair failed to generate; message names the failing seed."""


class FlowWriteError(OSError):
    """A flow file could not be written."""
