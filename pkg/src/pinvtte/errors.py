"""Exception types shared across the package.

Every guard in the library raises one of these rather than a bare ValueError,
so callers (and the CLI) can tell malformed input apart from combinatorial
blow-ups or design-induced impossibilities.
"""

__all__ = [
    "InputError",
    "GeometryError",
    "CapacityError",
    "PositivityError",
    "PreconditionError",
]


class InputError(ValueError):
    """Malformed data: bad file line, out-of-range endpoint, wrong length."""


class GeometryError(ValueError):
    """Structurally impossible configuration, e.g. a cycle power with n <= 2r
    or a cluster width that does not divide n."""


class CapacityError(RuntimeError):
    """A combinatorial enumeration would exceed a hard size guard.

    The message names the guard that tripped and the size that was requested.
    """


class PositivityError(RuntimeError):
    """An exposure probability needed in a denominator is exactly zero.

    The message names the offending unit.
    """


class PreconditionError(ValueError):
    """A caller-asserted precondition is contradicted by the data."""
