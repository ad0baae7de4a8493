"""Exception hierarchy shared across the package.

Subclasses of UsageError indicate a caller mistake (bad input, bad state for
the requested operation) and map to CLI exit code 1. BlockedError means the
replay session cannot move forward until the human resolves something (exit
code 3). Anything else escaping to the CLI is an internal error (exit 2).
"""


class ReplayRoiError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(ReplayRoiError):
    """The caller asked for something invalid; fix the input and retry."""


class BlockedError(ReplayRoiError):
    """The session is blocked on unresolved work (failing tests, bad build)."""
