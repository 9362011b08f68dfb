from __future__ import annotations

from typing import Any


class SsiError(Exception):
    """Base error. `code` is a stable kebab-case identifier, `exit_code` is what the CLI returns."""

    exit_code = 1

    def __init__(self, code: str, message: str | None = None, **details: Any):
        self.code = code
        self.details = details
        text = code if not message else f"{code}: {message}"
        super().__init__(text)


class InvalidInputError(SsiError):
    exit_code = 2


class NumericalError(SsiError):
    exit_code = 3

    @property
    def defect(self) -> float | None:
        v = self.details.get("defect")
        return None if v is None else float(v)
