"""Exception types shared across the package."""


class MacmError(Exception):
    """Base class for all errors raised by this package."""


class DataError(MacmError, ValueError):
    """Malformed or unusable input data."""


class NumericOverflowError(MacmError, FloatingPointError):
    """A computation produced a non-finite value."""


class SchemaError(MacmError, ValueError):
    """A serialized model or config does not match the expected schema."""


class ValidationError(MacmError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class UnsupportedOperationError(MacmError, TypeError):
    """The operation is not defined for this kind of model or shape."""
