"""Exception hierarchy shared by all quanputer modules."""


class QuanputerError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(QuanputerError, ValueError):
    pass


class Irregular(QuanputerError):
    """Jacobian is singular or non-square: the map is not time-reversible here.

    ``step`` and ``partial`` are filled in when raised from a trajectory run.
    """

    def __init__(self, message, step=None, partial=None):
        super().__init__(message)
        self.step = step
        self.partial = partial


class NoConvergence(QuanputerError):
    pass


class InconsistentJacobian(QuanputerError):
    pass


class ZeroState(QuanputerError, ValueError):
    pass


class RepresentationMismatch(QuanputerError, ValueError):
    pass


class GridMismatch(QuanputerError, ValueError):
    pass


class ArityMismatch(QuanputerError, ValueError):
    pass


class MemoryCapExceeded(QuanputerError, MemoryError):
    pass


class AncillaNotUncomputed(QuanputerError):
    pass


class TooLarge(QuanputerError):
    pass


class NotHermitian(QuanputerError):
    pass


class InvalidA(QuanputerError, ValueError):
    pass


class Singular(QuanputerError):
    pass


class OutsideSafetyBox(QuanputerError):
    """A characteristic carrying non-negligible amplitude left the safety box."""


class ConfigError(QuanputerError):
    pass
