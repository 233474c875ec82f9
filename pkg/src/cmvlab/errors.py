"""Exception hierarchy shared across the package."""


class CMVError(Exception):
    """Base class for every error raised by cmvlab."""


class ConfigurationError(CMVError, ValueError):
    """Malformed coefficient parameters, configs or refused simulation setups."""


class InputError(CMVError, ValueError):
    pass


class EllipticityError(CMVError, ValueError):
    pass


class DomainError(CMVError, ValueError):
    pass


class EstimationError(CMVError, RuntimeError):
    pass


class DegenerateDensityError(CMVError, ValueError):
    pass


class SolverError(CMVError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DiscretizationError(CMVError, RuntimeError):
    pass


class NumericalBlowupError(CMVError, FloatingPointError):
    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class ArbitrageError(CMVError, ValueError):
    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell
