"""Exception hierarchy shared by every ppdl module."""


class PPDLError(Exception):
    """Base class for all library errors."""


# number theory
class ZeroOperand(PPDLError, ValueError):
    pass


class BadModulus(PPDLError, ValueError):
    pass


class NotInvertible(PPDLError, ValueError):
    pass


# paillier
class InvalidPrimes(PPDLError, ValueError):
    pass


class InvalidGenerator(PPDLError, ValueError):
    pass


class PlaintextTooLarge(PPDLError, ValueError):
    pass


class InvalidRandomizer(PPDLError, ValueError):
    pass


class KeyMismatch(PPDLError, ValueError):
    pass


class CorruptCiphertext(PPDLError, ValueError):
    pass


class KeyParseError(PPDLError, ValueError):
    pass


# images / datasets
class ModulusTooSmall(PPDLError, ValueError):
    pass


class ImageFormatError(PPDLError, ValueError):
    pass


class DataError(PPDLError):
    """Dataset-level failure that carries the offending path."""

    def __init__(self, message, path=None):
        super().__init__(message if path is None else f"{message}: {path}")
        self.path = path


class EmptyClass(DataError):
    pass


class BadImage(DataError):
    pass


class BadRatios(PPDLError, ValueError):
    pass


class ManifestError(DataError):
    pass


# training
class ShapeError(PPDLError, ValueError):
    pass


class NumericalDivergence(PPDLError, ArithmeticError):
    pass


class WeightsFormatError(PPDLError, ValueError):
    pass


# metrics
class LabelMismatch(PPDLError, ValueError):
    pass


class EmptyEvaluation(PPDLError, ValueError):
    pass


class IncomparableReports(PPDLError, ValueError):
    pass
