"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage problems (ArgumentError,
CapacityError) exit 2, file format problems exit 3, violated internal
invariants exit 4.
"""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class ArgumentError(ValueError):
    """An argument is out of range or otherwise invalid."""


class StateError(RuntimeError):
    """Operation applied to an object in the wrong state."""


class InvariantError(RuntimeError):
    """A structural invariant (e.g. symplecticity) does not hold."""


class FormatError(ValueError):
    """A serialized artifact (tableau, circuit, weights, config) is malformed."""


class CapacityError(RuntimeError):
    """Request exceeds a documented size guard."""
