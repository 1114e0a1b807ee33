"""Exceptions shared across modules."""


class ConfigurationError(ValueError):
    """A configuration value or config-file schema is invalid."""


class ShapeError(ValueError):
    """Operands have inconsistent dimensions."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss or gradient.

    Carries enough context (epoch, batch, parameter norms) to diagnose the
    blow-up without re-running.
    """

    def __init__(self, message, epoch=None, batch=None, param_norms=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.param_norms = param_norms or {}
