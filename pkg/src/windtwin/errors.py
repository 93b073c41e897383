"""Exception hierarchy shared by all modules.

Every error carries the module and operation that raised it plus an optional
input location (file row, cell index, epoch) so the CLI can report a single
machine-readable line and map the error class to an exit code.
"""

from __future__ import annotations

import json


class WindTwinError(Exception):
    exit_code = 1

    def __init__(self, message: str, *, module: str = "", operation: str = "", location: str = ""):
        super().__init__(message)
        self.message = message
        self.module = module
        self.operation = operation
        self.location = location

    def as_json(self) -> str:
        return json.dumps(
            {
                "code": self.exit_code,
                "error": type(self).__name__,
                "module": self.module,
                "operation": self.operation,
                "location": self.location,
                "message": self.message,
            },
            sort_keys=True,
        )

    def __str__(self) -> str:
        where = f" at {self.location}" if self.location else ""
        scope = f"[{self.module}.{self.operation}] " if self.module else ""
        return f"{scope}{self.message}{where}"


class ConfigError(WindTwinError, ValueError):
    exit_code = 2


class FormatError(WindTwinError, ValueError):
    exit_code = 3


class ValidationError(WindTwinError, ValueError):
    exit_code = 3


class OutOfDomainError(ValidationError):
    """A query point lies outside the grid it is sampled from."""


class CoverageError(ValidationError):
    """Cells that could not be filled from the available contours."""


class DomainError(WindTwinError, ValueError):
    """Nonphysical numeric input (negative temperature, supersaturation...)."""

    exit_code = 4


class TrainingError(WindTwinError, RuntimeError):
    exit_code = 4


class RangeOverflowError(WindTwinError, ValueError):
    exit_code = 4


class OutputError(WindTwinError, OSError):
    exit_code = 5


class MissingInputError(WindTwinError, FileNotFoundError):
    """A step was asked to consume outputs that an earlier step has not produced."""

    exit_code = 5
