"""Exception hierarchy shared by the solver, verifier and CLI."""


class BandOptError(Exception):
    """Base class for every error raised by bandopt."""


class MalformedCostError(BandOptError, ValueError):
    """Holding cost evaluates to a non-finite value or is not convex."""


class InvalidModelError(BandOptError, ValueError):
    """Model parameters violate positivity requirements."""


class DivergenceError(BandOptError, ArithmeticError):
    """A semi-infinite integral did not settle after the allowed extensions."""


class InfeasibleCoefficientsError(BandOptError, ValueError):
    """(A, B) lies outside the region where the requested quantity exists."""


class NumericFailureError(BandOptError, ArithmeticError):
    """A bracket could not be established or a root search did not converge."""


class DegenerateBandError(BandOptError, ValueError):
    """The 2x2 boundary system for a control band is singular."""


class StageError(BandOptError):
    """Failure inside one stage of the optimal-band pipeline.

    The stage name is kept on the exception so the CLI can report it.
    """

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class ConfigError(BandOptError, ValueError):
    """Problem description could not be parsed or is incomplete."""
