"""Exception types shared across the package."""


class TinySSDError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TinySSDError):
    """Tensor shapes are inconsistent with an operation's contract."""


class GeometryError(TinySSDError):
    """A layer geometry produces a non-positive output extent."""


class SpecError(TinySSDError):
    """An architecture description violates its invariants."""


class ConfigError(TinySSDError):
    """A prior-box or evaluation configuration is internally inconsistent."""


class FormatError(TinySSDError):
    """A serialized file is malformed (bad magic, truncation, bad field)."""


class MissingBlobError(TinySSDError, KeyError):
    """A weight blob required by the network is absent from the store."""

    def __str__(self):
        # KeyError quotes its argument; keep the plain message.
        return Exception.__str__(self)
