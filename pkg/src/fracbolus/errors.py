"""Exception hierarchy.

Validation problems (bad parameters, malformed input files) derive from
``ValidationError``; numerical breakdowns (Cholesky, quadrature) derive from
``NumericalError``. The command line maps the two families to exit codes 2
and 3.
"""


class ValidationError(ValueError):
    """Invalid parameters or input data."""


class DegenerateInputError(ValidationError):
    """Input for which an estimator is undefined (e.g. an affine sample)."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to produce a trustworthy result."""


class CholeskyError(NumericalError):
    """Covariance matrix not positive definite even after jitter escalation."""

    def __init__(self, message, jitter=None, condition=None):
        super().__init__(message)
        self.jitter = jitter
        self.condition = condition


class SingularCovarianceError(CholeskyError):
    """Covariance matrix of a Gaussian density cannot be factorised."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, value=None, abserr=None):
        super().__init__(message)
        self.value = value
        self.abserr = abserr
