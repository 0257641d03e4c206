"""Exception hierarchy shared by all modules.

Every error is a subclass of :class:`RelBohmError`; the CLI maps them onto
exit codes.
"""


class RelBohmError(Exception):
    """Base class for all library errors."""


class ValidationError(RelBohmError, ValueError):
    """Malformed input data (scenario files, inconsistent arguments)."""


class SpeedNotSubluminal(ValidationError):
    pass


class UnsupportedTransform(ValidationError):
    pass


class NonPositiveMass(ValidationError):
    pass


class ArityMismatch(ValidationError):
    pass


class NonTimelikeNormal(ValidationError):
    pass


class DegenerateMomenta(ValidationError):
    pass


class OutOfRegion(RelBohmError):
    pass


class CausticEncountered(RelBohmError):
    pass


class NullCurrent(RelBohmError):
    pass


class LeftSimulationRegion(RelBohmError):
    pass


class CrossingNotFound(RelBohmError):
    pass


class NonConvergence(RelBohmError):
    def __init__(self, max_iter, last_residual, diagnostics=None):
        self.max_iter = max_iter
        self.last_residual = last_residual
        self.diagnostics = diagnostics or {}
        super().__init__(
            f"no convergence after {max_iter} iterations (last residual {last_residual:.3e})"
        )


class EnvelopeTooSmall(RelBohmError):
    pass


class NodeEncountered(RelBohmError):
    pass


class MismatchedModeSets(ValidationError):
    pass


class IncompletePOVM(ValidationError):
    pass


class NonPositiveOperator(ValidationError):
    pass


class NotAProductState(ValidationError):
    pass
