"""Exception hierarchy. Every numeric failure derives from ``EscapeDimError``."""


class EscapeDimError(Exception):
    pass


class BadParameter(EscapeDimError, ValueError):
    pass


class PoleHit(EscapeDimError):
    pass


class TailUnbounded(EscapeDimError):
    pass


class RadiusTooSmall(EscapeDimError, ValueError):
    pass


class UnknownPole(EscapeDimError, KeyError):
    pass


class NoConvergence(EscapeDimError):
    pass


class BranchCollision(EscapeDimError):
    pass


class Inconclusive(EscapeDimError):
    pass


class EmptyRestriction(EscapeDimError, ValueError):
    pass


class NoSingularBound(EscapeDimError):
    pass


class NoMaxPolesInAnyCone(EscapeDimError):
    pass


class OutOfDomain(EscapeDimError, ValueError):
    pass


class PoolExhausted(EscapeDimError):
    pass


class DegenerateSample(EscapeDimError, ValueError):
    pass
