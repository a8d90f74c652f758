"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`CRNError`,
so callers (and the CLI) can tell a diagnosed failure from a bug.  Genuine
infeasibility of a conservation-relation search is *not* an error; it comes
back as a certificate.
"""

from __future__ import annotations


class CRNError(Exception):
    """Base class for all package errors."""


class NetworkError(CRNError):
    """A reaction network violates a structural requirement."""


class ParseError(NetworkError):
    """DSL or JSON input could not be turned into a network."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class TrivialReaction(ParseError):
    """A reaction whose source and product complexes coincide."""


class DuplicateRate(ParseError):
    """The same reaction (or the same rate key) was given twice."""


class NonPositiveRate(ParseError):
    """A rate constant that is zero, negative or not finite."""


class InactiveSpecies(NetworkError):
    """A declared species appears in no complex and inactive species were not allowed."""


class NegativeDeficiency(CRNError):
    """n - l - s came out negative, which means a rank computation went wrong."""


class IntegrationError(CRNError):
    """Base class for integrator failures."""


class StepSizeUnderflow(IntegrationError):
    """The adaptive step shrank below the representable floor."""


class NonFiniteState(IntegrationError):
    """A NaN or infinity appeared in the state."""


class RateBoundViolation(CRNError):
    """A rate schedule leaves the declared (eta, 1/eta) band."""


class EmptyReducedNetwork(CRNError):
    """Every reaction became trivial after restricting to the species subset."""


class SolverFailure(CRNError):
    """An LP or Newton solve failed for numerical reasons."""


class NotConverged(SolverFailure):
    """The equilibrium solver did not converge."""


class ResidualTooLarge(SolverFailure):
    """A candidate equilibrium does not balance every complex."""


class UnstableOrdering(CRNError):
    """The monomial ordering keeps changing inside the analysis window."""


class ExplosionGuard(CRNError):
    """A combinatorial enumeration exceeded its configured cap."""
