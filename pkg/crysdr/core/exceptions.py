"""
Exceptions for crysdr.

Every error carries a message, an optional machine-readable code and a
context dict so reports can embed it verbatim.
"""

from typing import Any, Dict, Optional


class CrysDRException(Exception):
    """Base exception for crysdr."""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or self.__class__.__name__
        self.context = context or {}

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for reports."""
        return {
            "error": self.__class__.__name__,
            "message": self.message,
            "error_code": self.error_code,
            "context": self.context
        }


class ConfigError(CrysDRException):
    """Invalid run configuration."""
    pass


class VerificationFailure(CrysDRException):
    """An identity that should hold was checked and does not."""
    pass


# base_arith / poly

class AlgebraError(CrysDRException):
    """Errors raised by finite algebra and polynomial arithmetic."""
    pass


class NotPrime(AlgebraError):
    """The residue characteristic is not prime."""
    pass


class NonMonicRelation(AlgebraError):
    """A relation is not monic in its own generator."""
    pass


class NonTriangularPresentation(AlgebraError):
    """A relation mentions a later generator."""
    pass


class UnknownGenerator(AlgebraError):
    """A variable name is not a generator of the algebra."""
    pass


class ValuationUndefined(AlgebraError):
    """The presentation does not support a normalized valuation."""
    pass


class MixedRings(AlgebraError):
    """Operands live over different coefficient rings."""
    pass


class FractionalExponentOnNonMonoidVariable(AlgebraError):
    """A substitution produced an exponent outside the allowed monoid."""
    pass


class NotCharP(AlgebraError):
    """Operation requires coefficients in F_p."""
    pass


# pd

class DividedPowerError(CrysDRException):
    """Errors raised by divided-power algebras and envelopes."""
    pass


class NonzeroConstantTerm(DividedPowerError):
    """Divided powers were requested for an element outside the pd-ideal."""
    pass


class MixedParents(DividedPowerError):
    """Operands belong to different pd-algebras."""
    pass


class NotRegularSequence(DividedPowerError):
    """Truncated Koszul H_1 mod p is nonzero."""
    pass


class NotModP(DividedPowerError):
    """Operation requires an envelope over F_p."""
    pass


class CapTooSmall(DividedPowerError):
    """The pd-weight cap cannot hold the requested range."""
    pass


class NotEisenstein(DividedPowerError):
    """Polynomial is not monic Eisenstein."""
    pass


# derham / derived_dr

class CohomologyError(CrysDRException):
    """Errors raised by de Rham and derived de Rham computations."""
    pass


class NotField(CohomologyError):
    """Cohomology requested over Z/p^n with n > 1."""
    pass


class NotOnTwist(CohomologyError):
    """Cartier inverse applied to a form that is not on the Frobenius twist."""
    pass


class WindowTooWide(CohomologyError):
    """Truncated total complex exceeds the memory guard."""
    pass


class NotACocycle(CohomologyError):
    """Element is not closed under the total differential."""
    pass


class OutOfStableRange(CohomologyError):
    """Requested entry lies outside the certified-stable range."""
    pass


class LiftNotFrobenius(CohomologyError):
    """The chosen lift does not reduce to Frobenius mod p."""
    pass


# witt / period

class PeriodError(CrysDRException):
    """Errors raised by Witt vectors and period ring models."""
    pass


class LengthMismatch(PeriodError):
    """Witt vectors of different lengths or bases."""
    pass


class PrecisionExceedsDepth(PeriodError):
    """Precision n exceeds root depth k + 1."""
    pass


class NotInKernel(PeriodError):
    """Element is not killed by theta."""
    pass


class WrongValuation(PeriodError):
    """A valuation identity failed."""
    pass


class NotARootSystem(PeriodError):
    """Components are not a compatible system of p-power roots."""
    pass


class Fil1Failure(PeriodError):
    """Element expected in Fil^1 is not killed by theta."""
    pass


class NotAnAutomorphism(PeriodError):
    """Galois action data does not preserve the presentation."""
    pass


class NotKummerCompatible(PeriodError):
    """Galois action does not move the root system by a root of unity."""
    pass


class ModelUnavailable(PeriodError):
    """No finite model exists for the requested parameters."""
    pass


# Exit code mapping for the command line
EXIT_CODE_MAP = {
    ConfigError: 2,
    NotPrime: 2,
    PrecisionExceedsDepth: 2,
    WindowTooWide: 2,
    CapTooSmall: 2,
    ModelUnavailable: 2,
    NotEisenstein: 2,
    NotAnAutomorphism: 2,
    VerificationFailure: 1,
    # Everything else is a failed computation
}


def get_exit_code(exception: Exception) -> int:
    """Get process exit code for exception."""
    for exc_type in type(exception).__mro__:
        if exc_type in EXIT_CODE_MAP:
            return EXIT_CODE_MAP[exc_type]
    return 1
