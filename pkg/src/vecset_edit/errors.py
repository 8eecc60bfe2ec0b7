"""Exception types carrying a machine-readable ``kind`` for the CLI."""

from __future__ import annotations


class VseError(Exception):
    exit_code = 1

    def __init__(self, message: str, kind: str = "runtime"):
        super().__init__(message)
        self.kind = kind

    def to_dict(self) -> dict:
        return {"error": self.kind, "kind": self.kind, "message": str(self)}


class ValidationError(VseError, ValueError):
    """Bad user input (shapes, values, missing files)."""

    exit_code = 2

    def __init__(self, message: str, kind: str = "invalid_input"):
        super().__init__(message, kind)
