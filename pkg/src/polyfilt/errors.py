"""Exception hierarchy.

Configuration mistakes raise plain ``ValueError``; :class:`NumericalError`
and its subclasses signal that the inputs were well-formed but the numerics
cannot be trusted (the CLI maps these to exit code 2).
"""


class NumericalError(ArithmeticError):
    code = "numerical"


class NonContractiveError(NumericalError):
    code = "non_contractive"


class RegularityError(NumericalError):
    """A matrix that must be invertible is singular or too ill-conditioned."""

    code = "singular"


class NotPositiveSemidefiniteError(NumericalError):
    code = "not_psd"


class IntegrationError(NumericalError):
    code = "integration"


class NotPolynomialError(ValueError):
    """Coefficients do not respect the degree bound of a polynomial model."""
