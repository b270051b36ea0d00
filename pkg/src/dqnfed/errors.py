"""Exception types raised across the package."""


class DQNFedError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(DQNFedError, ValueError):
    pass


class ZeroVector(DQNFedError, ValueError):
    pass


class NonFiniteValue(DQNFedError, ArithmeticError):
    pass


class NonFiniteLoss(NonFiniteValue):
    pass


class CurvatureRejected(DQNFedError):
    """A curvature pair failed the s.y > eps*|s|*|y| guard."""


class SingularDenominator(DQNFedError, ArithmeticError):
    pass


class DegenerateRate(DQNFedError):
    def __init__(self, value, floor):
        super().__init__(f"rate estimate {value!r} is not above the floor {floor!r}")
        self.value = value
        self.floor = floor


class AllClientsDegenerate(DQNFedError):
    pass


class ZeroNormBasisVector(DQNFedError, ArithmeticError):
    pass


class ParseError(DQNFedError, ValueError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class LabelOutOfRange(DQNFedError, ValueError):
    pass


class DivisibilityError(DQNFedError, ValueError):
    pass


class InfeasibleMinSize(DQNFedError):
    def __init__(self, attempts, min_size):
        super().__init__(
            f"no Dirichlet draw gave every client >= {min_size} samples "
            f"after {attempts} attempts"
        )
        self.attempts = attempts
        self.min_size = min_size


class EmptyInput(DQNFedError, ValueError):
    pass


class LengthMismatch(DQNFedError, ValueError):
    pass


class ValidationError(DQNFedError, ValueError):
    """Configuration error naming the offending key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class FederationError(DQNFedError):
    """Wraps an error raised inside a round with round/client context."""

    def __init__(self, round_index, client_id, cause):
        where = f"round {round_index}"
        if client_id is not None:
            where += f", client {client_id}"
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")
        self.round = round_index
        self.client_id = client_id
        self.cause = cause
