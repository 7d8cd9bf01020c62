"""Exception types raised across the package.

Every error derives from :class:`CoframeError` (itself a ``ValueError``) so
callers can catch the whole family at once; the CLI maps several of them to
dedicated exit codes.
"""


class CoframeError(ValueError):
    pass


class NotSkew(CoframeError):
    pass


class Degenerate(CoframeError):
    pass


class OutOfDomain(CoframeError):
    pass


class SingularSystem(CoframeError):
    pass


class NotRank1(CoframeError):
    pass


class LowDimension(CoframeError):
    pass


class IdenticallyZero(CoframeError):
    pass


class SingularP(CoframeError):
    pass


class RankDeficient(CoframeError):
    pass


class SearchExhausted(CoframeError):
    pass


class JacobianDegenerate(CoframeError):
    pass


class Inconsistent(CoframeError):
    pass


class NoIndependentChoice(CoframeError):
    pass


class DegenerateCoframe(CoframeError):
    pass


class DegenerateHypothesis(CoframeError):
    pass


class NotAZero(CoframeError):
    pass


class FactorVanishes(CoframeError):
    pass


class ZeroVector(CoframeError):
    pass
