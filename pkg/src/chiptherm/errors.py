"""Exception hierarchy shared by the whole package.

The CLI maps :class:`InputError` to exit code 2 and :class:`NumericalError`
to exit code 1.
"""


class ChipThermError(Exception):
    pass


class InputError(ChipThermError):
    """Bad or inconsistent user input (files, geometry, configuration)."""


class NumericalError(ChipThermError):
    """A numerical step failed (singular system, non-convergence)."""


class GeometryError(InputError):
    pass


class LayoutError(InputError):
    pass


class StackError(InputError):
    pass


class SingularSystemError(NumericalError):
    pass
