"""Exception types raised by compcbf."""


class CompCBFError(Exception):
    """Base class for all package errors."""


class InputError(CompCBFError, ValueError):
    """Malformed arguments: non-finite state, empty composition, bad shapes."""


class DegenerateStateError(CompCBFError):
    """Two robots occupy the same position, so the pair direction is undefined."""


class InvarianceViolatedError(CompCBFError):
    """The state lies outside the set certified by a barrier tree.

    ``atoms`` lists the keys of the atoms responsible for the zero value.
    """

    def __init__(self, message, atoms=()):
        super().__init__(message)
        self.atoms = tuple(atoms)


class ConfigurationError(CompCBFError):
    """Invalid scenario or simulation configuration."""

    def __init__(self, message, field=None, line=None):
        where = ""
        if field is not None:
            where += f" [field {field}]"
        if line is not None:
            where += f" [line {line}]"
        super().__init__(message + where)
        self.field = field
        self.line = line
