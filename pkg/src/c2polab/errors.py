"""Exception hierarchy shared by all modules.

The CLI maps these onto distinct exit codes, so every failure raised by the
library should derive from one of the three base classes below.
"""


class C2poLabError(Exception):
    """Base class for all library errors."""


class ArgumentError(C2poLabError, ValueError):
    """Invalid argument: bad shape, non-finite input, violated precondition."""


class NumericError(C2poLabError, ArithmeticError):
    """A numerical procedure failed (non-convergence, divergence, stalls)."""


class PreconditionError(ArgumentError):
    """Input is well formed but outside the domain of the operation."""


class NotConvergedError(NumericError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class GenerationStalledError(NumericError):
    def __init__(self, target_norm, attempts, accepted):
        super().__init__(
            f"training-set generation stalled at N={target_norm}: "
            f"{accepted} accepted out of {attempts} attempts"
        )
        self.target_norm = target_norm
        self.attempts = attempts
        self.accepted = accepted


class TrainingDivergedError(NumericError):
    """Training cost became non-finite.

    Attributes:
        params: the last parameters for which the cost was finite.
        epoch: epoch index at which divergence was detected.
    """

    def __init__(self, params, epoch):
        super().__init__(f"training diverged at epoch {epoch}")
        self.params = params
        self.epoch = epoch
