"""Exception hierarchy shared by all zakline modules."""


class ZaklineError(Exception):
    """Base class for every error raised by zakline."""


class ConfigError(ZaklineError):
    """Bad user input (model config or run options)."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(ConfigError):
    pass


class NumericalError(ZaklineError):
    """A numerical precondition failed along the way."""


# eigensolver
class DefectiveMatrix(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class PairingAmbiguous(NumericalError):
    pass


class SelfOrthogonal(NumericalError):
    pass


class SubspaceCollapse(NumericalError):
    pass


# gauge smoothing
class BandCrossing(NumericalError):
    pass


class VanishingOverlap(NumericalError):
    pass


class NoUsableComponent(NumericalError):
    pass


class ClosureFailure(NumericalError):
    pass


# berry phase
class NotSmoothed(NumericalError):
    pass


# analytic reference
class DomainError(NumericalError, ValueError):
    pass


class BrokenRegime(NumericalError):
    pass


class DegenerateRatio(NumericalError):
    pass
