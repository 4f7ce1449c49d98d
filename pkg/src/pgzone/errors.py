"""Exception types shared across the zone.

Everything raised on purpose by this package derives from ZoneError, so
callers (and the gateway's error mapper) can distinguish deliberate
failures from bugs.
"""

from __future__ import annotations


class ZoneError(Exception):
    """Base class for all errors raised by this package."""


# --- naming / lookup -------------------------------------------------------

class DuplicateName(ZoneError):
    pass


class NoSuchPath(ZoneError):
    pass


class NoParent(ZoneError):
    pass


class NoSuchUser(ZoneError):
    pass


class NoSuchResource(ZoneError):
    pass


class NoSuchObject(ZoneError):
    pass


class UnknownDriver(ZoneError):
    pass


# --- authorization ---------------------------------------------------------

class Denied(ZoneError):
    """An operation was refused, either by a rule verdict or by an ACL."""

    def __init__(self, reason: str = ""):
        super().__init__(reason)
        self.reason = reason


class PermissionDenied(Denied):
    """ACL or role check failed (a Denied whose reason is access control)."""


class BadCredentials(ZoneError):
    """Login failed; deliberately uniform for unknown user vs wrong secret."""


# --- catalog / journal -----------------------------------------------------

class MalformedPredicate(ZoneError):
    pass


class CorruptJournal(ZoneError):
    pass


# --- rule DSL --------------------------------------------------------------

class ParseError(ZoneError):
    """Source text does not conform to the rule/procedure grammar."""

    def __init__(self, message: str, line: int = 0, column: int = 0,
                 expected: tuple[str, ...] = ()):
        loc = f" at {line}:{column}" if line else ""
        exp = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{message}{loc}{exp}")
        self.line = line
        self.column = column
        self.expected = expected


class EvalError(ZoneError):
    """Base for expression-evaluation failures."""


class UnboundVariable(EvalError):
    pass


class TypeMismatch(EvalError):
    pass


class DivisionByZero(EvalError):
    pass


# --- engine ----------------------------------------------------------------

class UnknownPep(ZoneError):
    pass


class DuplicateRuleName(ZoneError):
    pass


class NoSuchRule(ZoneError):
    pass


class EngineError(ZoneError):
    """A rule chain or micro-service failed while handling an operation."""


class AllReplicasSuspect(ZoneError):
    pass


class ChecksumMismatch(ZoneError):
    pass


class DuplicateReplica(ZoneError):
    pass


class NoSuchReplica(ZoneError):
    pass


class KindMismatch(ZoneError):
    """Resource kind does not fit the operation (e.g. staging to archive)."""


class FetchFailed(ZoneError):
    def __init__(self, detail: str, status: int | None = None):
        super().__init__(detail)
        self.status = status


# --- drivers ---------------------------------------------------------------

class DriverError(ZoneError):
    pass


class NoSuchRef(DriverError):
    pass


class Unsupported(DriverError):
    """The driver's capability flags forbid this operation."""


class BadHandle(DriverError):
    pass


# --- streams ---------------------------------------------------------------

class BadFraming(ZoneError):
    pass


class TimestampsDecreasing(ZoneError):
    pass


class BadInterval(ZoneError):
    pass


class NotAStreamCollection(ZoneError):
    pass


# --- provenance ------------------------------------------------------------

class NotAWorkflowCollection(ZoneError):
    pass


class NoSuchWorkflow(ZoneError):
    pass


class NoSuchRun(ZoneError):
    pass


class BadBindings(ZoneError):
    pass


class StaleInputs(ZoneError):
    """Recorded inputs no longer match the catalog; lists offending paths."""

    def __init__(self, paths: list[str]):
        super().__init__("stale inputs: " + ", ".join(paths))
        self.paths = list(paths)
