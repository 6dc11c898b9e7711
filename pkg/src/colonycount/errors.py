"""Shared exception hierarchy for the pipeline."""


class PipelineError(Exception):
    """Base class for every error this package raises on purpose."""


class InputError(PipelineError):
    """User-supplied data or configuration is invalid (CLI exit code 1)."""
