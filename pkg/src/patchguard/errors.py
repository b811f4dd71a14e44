"""Exception taxonomy shared by all patchguard modules."""


class PatchGuardError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(PatchGuardError):
    """Tensor or image dimensions violate an operation's contract."""


class NumericError(PatchGuardError):
    """Non-finite values (NaN/Inf) where finite data is required."""


class FormatError(PatchGuardError):
    """A serialized artifact (weight bundle, profile) is structurally broken."""


class ValidationError(PatchGuardError):
    """A parsed artifact is well-formed but violates a semantic invariant."""


class ConfigError(PatchGuardError):
    """Caller-supplied parameters are out of range or inconsistent."""


class InputError(PatchGuardError):
    """An input image could not be read or decoded."""


class IoError(PatchGuardError):
    """Filesystem write failure while persisting an artifact."""
