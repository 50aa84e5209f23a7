"""Exception hierarchy shared across the package.

The split mirrors how failures are reported to callers: physics
preconditions (bad grids, band violations, degenerate states), resource
caps (dense-tensor memory), and malformed on-disk inputs.
"""


class OcmError(Exception):
    """Base class for all package-specific errors."""


class PhysicsError(OcmError):
    """A physical precondition is violated (Nyquist, band, degeneracy...)."""


class ResourceCapError(OcmError):
    """A configured resource cap (dense amplitude count) would be exceeded."""


class FormatError(OcmError):
    """A serialized input (state container, distribution file) is malformed."""


class NoFringeError(PhysicsError):
    """Raised when a distribution has no dominant nonzero spectral peak."""
