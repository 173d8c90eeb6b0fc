"""Exception hierarchy shared by all modules.

Every error carries a short machine-readable ``code`` (the class name) so the
CLI can emit ``{code, message, context}`` records without a lookup table.
"""

from __future__ import annotations


class MarkovNoiseError(ValueError):
    """Base class for all library errors."""

    def __init__(self, message: str = "", **context):
        super().__init__(message)
        self.message = message
        self.context = context

    @property
    def code(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "context": self.context}


# chain construction
class EmptyGraph(MarkovNoiseError):
    pass


class DisconnectedGraph(MarkovNoiseError):
    pass


class SelfLoopOrMultiEdge(MarkovNoiseError):
    pass


class InvalidParams(MarkovNoiseError):
    pass


class Reducible(MarkovNoiseError):
    pass


class NumericalFailure(MarkovNoiseError):
    pass


class ValidationFailed(MarkovNoiseError):
    pass


# spectral engine
class EigensolverFailure(MarkovNoiseError):
    pass


class NotCentered(MarkovNoiseError):
    pass


class ZeroFunction(MarkovNoiseError):
    pass


class NegativeTime(MarkovNoiseError):
    pass


# noise analysis
class DimensionMismatch(MarkovNoiseError):
    pass


class NonpositiveAlpha(MarkovNoiseError):
    pass


class NotBoolean(MarkovNoiseError):
    pass


class BadSubsetSize(MarkovNoiseError):
    pass


# stability lab
class EmptySubspace(MarkovNoiseError):
    pass


class ZeroCoefficients(MarkovNoiseError):
    pass


class NoAdmissibleThreshold(MarkovNoiseError):
    pass


class ZeroVector(MarkovNoiseError):
    pass


class EmptyBand(MarkovNoiseError):
    pass


class BadNormalization(MarkovNoiseError):
    pass


class TrivialSet(MarkovNoiseError):
    pass


class NotAnAutomorphism(MarkovNoiseError):
    pass


# bottleneck
class EmptyOrFullSet(MarkovNoiseError):
    pass


class StateSpaceTooLarge(MarkovNoiseError):
    pass


class NoSubsetInMassWindow(MarkovNoiseError):
    pass


# cli
class CapExceeded(MarkovNoiseError):
    pass
