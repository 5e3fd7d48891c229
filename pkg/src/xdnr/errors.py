"""Exception types shared across the engine."""

from __future__ import annotations


class XdnrError(Exception):
    """Base for all engine errors."""


class DataError(XdnrError):
    """Malformed input files or violated data invariants."""


class ScorerError(XdnrError):
    """External scorer failed.

    Carries the stage-1 ranked list (when available) so callers can fall
    back to the un-reranked result.
    """

    def __init__(self, message: str, stage1=None):
        super().__init__(message)
        self.stage1 = stage1


class ProtocolError(ScorerError):
    """External scorer sent a line that violates the wire protocol."""
