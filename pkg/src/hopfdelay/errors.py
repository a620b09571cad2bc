"""Exception hierarchy.

Every failure raised by the library derives from :class:`HopfDelayError`.
The CLI maps :class:`ConfigError` subclasses to exit code 2 and every other
:class:`NumericalError` to exit code 3.
"""


class HopfDelayError(Exception):
    """Base class for all library errors."""

    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class ConfigError(HopfDelayError):
    kind = "config"


class ExprSyntaxError(ConfigError):
    kind = "syntax"

    def __init__(self, message, offset, source=""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.source = source
        self.detail = message

    def to_dict(self):
        d = super().to_dict()
        d.update(offset=self.offset, source=self.source)
        return d


class InvalidGridError(ConfigError):
    kind = "invalid-grid"


class InvalidCoefficientError(ConfigError):
    kind = "invalid-coefficient"


class DimensionError(HopfDelayError):
    kind = "dimension"


class NumericalError(HopfDelayError):
    kind = "numerical"


class NearSingularError(NumericalError):
    kind = "near-singular"

    def __init__(self, message, condition=float("inf")):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition

    def to_dict(self):
        d = super().to_dict()
        d["condition"] = self.condition
        return d


class ResonanceError(NearSingularError):
    kind = "resonance"


class DegenerateKernelError(NumericalError):
    kind = "degenerate-kernel"


class NoConvergenceError(NumericalError):
    kind = "no-convergence"


class NotPrincipalError(NumericalError):
    kind = "not-principal"


class ViolatedLemmaError(NumericalError):
    kind = "violated-lemma"


class NoCrossingError(NumericalError):
    kind = "no-crossing"


class WrongBranchError(NumericalError):
    kind = "wrong-branch"


class InconsistencyError(NumericalError):
    kind = "inconsistency"


class TrivialSolutionError(NumericalError):
    kind = "trivial-solution"


class WrongRegimeError(NumericalError):
    kind = "wrong-regime"


class DegenerateDualityError(NumericalError):
    kind = "degenerate-duality"


class DegenerateTransversalityError(NumericalError):
    kind = "degenerate-transversality"


class DivergenceError(NumericalError):
    kind = "divergence"


class DomainError(NumericalError):
    kind = "domain"
