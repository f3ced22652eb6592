"""Error types shared across the toolchain.

Static errors carry an optional (line, col) position and render in the
conventional ``file:line:col: message`` shape.  Runtime errors identify the
frame or object that got stuck.
"""
from __future__ import annotations

from dataclasses import dataclass


Pos = "tuple[int, int] | None"


class RayError(Exception):
    """Base for all toolchain errors."""

    kind = "error"

    def __init__(self, message: str, pos: tuple[int, int] | None = None):
        super().__init__(message)
        self.message = message
        self.pos = pos

    def render(self, filename: str = "<input>") -> str:
        line, col = self.pos if self.pos is not None else (0, 0)
        return f"{filename}:{line}:{col}: {self.kind}: {self.message}"


class RaySyntaxError(RayError):
    kind = "syntax error"


class DuplicateNameError(RayError):
    kind = "duplicate name"


class UnknownTypeError(RayError):
    kind = "unknown type"


class UnknownMemberError(RayError):
    kind = "unknown member"


class TypeMismatchError(RayError):
    kind = "type mismatch"


class UnboundVariableError(RayError):
    kind = "unbound variable"


class YieldOutsideRasyncError(RayError):
    kind = "yield outside rasync"


@dataclass(frozen=True)
class Diagnostic:
    """One collected static error; typecheck_program aggregates these."""

    kind: str
    message: str
    pos: tuple[int, int] | None = None

    def render(self, filename: str = "<input>") -> str:
        line, col = self.pos if self.pos is not None else (0, 0)
        return f"{filename}:{line}:{col}: {self.kind}: {self.message}"


def to_diagnostic(err: RayError) -> Diagnostic:
    return Diagnostic(err.kind, err.message, err.pos)


class RayRuntimeError(RayError):
    """Base for errors raised while stepping a machine."""

    kind = "runtime error"


class NullDerefError(RayRuntimeError):
    kind = "null dereference"


class AwaitNotSubscribedError(RayRuntimeError):
    kind = "await not subscribed"


class OptionGetOnNoneError(RayRuntimeError):
    kind = "get on none"


class SubscribeToDoneError(RayRuntimeError):
    kind = "subscribe to done"


class DanglingRefError(RayRuntimeError):
    kind = "dangling reference"


class NotAnObservableError(RayRuntimeError):
    kind = "not an observable"


class MalformedWaiterError(RayRuntimeError):
    kind = "malformed waiter"


class ChoiceNotEnabledError(RayRuntimeError):
    kind = "choice not enabled"
