"""Exception types shared across the package.

Every failure mode raised by memefuse derives from :class:`MemefuseError`
so callers (and the CLI exit-code mapping) can distinguish usage errors,
data errors, and numeric failures without string matching.
"""


class MemefuseError(Exception):
    """Base class for all memefuse errors."""


class ShapeError(MemefuseError):
    """Operands have incompatible extents; message names both shapes."""


class ContractError(MemefuseError):
    """A documented precondition was violated by the caller."""


class NumericError(MemefuseError):
    """A NaN or Inf appeared mid-computation; message names the op."""


class GradientAbsentError(MemefuseError):
    """A tensor without a populated gradient was queried for one."""


class ParseError(MemefuseError):
    """A file does not follow its declared format."""


class ValidationError(MemefuseError):
    """A parsed record violates a semantic invariant (names the record)."""


class ConfigError(MemefuseError):
    """Inconsistent run configuration (task/head mismatch, bad flags)."""
