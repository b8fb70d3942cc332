"""Exception types shared across the engine.

Every error carries a short machine-readable ``code`` so the CLI can map
failures to stable exit diagnostics without string matching.
"""

from __future__ import annotations

from typing import Sequence


class GovernanceError(Exception):
    """Base class for all engine errors."""

    code = "error"


class ReportedError(GovernanceError):
    """An error that lists every violation found, never just the first."""

    def __init__(self, violations: Sequence[str]):
        self.violations: list[str] = [str(v) for v in violations]
        super().__init__("; ".join(self.violations))


class ParseError(ReportedError):
    code = "parse"


class ValidationError(ReportedError):
    code = "validation"


class UnknownConcept(GovernanceError):
    code = "unknown-concept"


class TypingError(GovernanceError):
    code = "typing"


class UnknownSite(GovernanceError):
    code = "unknown-site"


class MalformedTransformation(GovernanceError):
    code = "malformed-transformation"


class NotReachable(GovernanceError):
    code = "not-reachable"


class IncompatibleInterface(GovernanceError):
    code = "incompatible-interface"


class MalformedRecord(GovernanceError):
    code = "malformed-record"


class CorruptStore(GovernanceError):
    code = "corrupt-store"


class ConfigError(GovernanceError):
    code = "config"


class IncomparableReports(GovernanceError):
    code = "incomparable-reports"
