# src/utils/errors.py
from __future__ import annotations

from typing import Sequence


class SceneKitError(Exception):
    """Root of every error raised by the toolkit."""


class ConfigError(SceneKitError):
    """Configuration failed validation."""


class InputError(SceneKitError, ValueError):
    """Caller handed us something we cannot work with."""


class DomainError(InputError):
    """A value lies outside the domain of the operation."""


class ShapeMismatchError(InputError):
    pass


class EmptyInputError(InputError):
    pass


class ArityError(InputError):
    pass


class DegenerateConfigurationError(InputError):
    pass


class BundleError(InputError):
    """Malformed bundle, scene or gaussian file."""


class MissingFileError(BundleError, FileNotFoundError):
    def __init__(self, filename: str, directory: str) -> None:
        self.filename = filename
        self.directory = directory
        super().__init__(f"{filename} not found in {directory}")


class ExportError(SceneKitError):
    pass


class PlacementError(SceneKitError):
    pass


class DivergenceError(SceneKitError):
    def __init__(self, message: str, trace: Sequence[float]) -> None:
        super().__init__(message)
        self.trace = list(trace)


class InvariantError(SceneKitError):
    pass
