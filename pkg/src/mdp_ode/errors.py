"""Exception types shared across the library."""


class ModelError(ValueError):
    """A model, kernel, or pmf violates a structural invariant."""


class ModelFormatError(ModelError):
    """A model file failed to parse or validate; message carries a field diagnostic."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class ReducibilityError(ModelError):
    """A chain is not irreducible and aperiodic; names an unreachable state pair."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class DegeneracyError(ArithmeticError):
    """A linear system that should be regular turned out singular or inconsistent."""


class InfiniteDivergenceError(ArithmeticError):
    """Relative entropy rate is infinite: mass placed where the reference has none."""


class ConvergenceError(RuntimeError):
    """An iterative solver missed its tolerance within the iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class FeasibilityError(RuntimeError):
    """A control policy left its admissible box; carries state and bound."""

    def __init__(self, message, state=None, coordinate=None, zeta=None):
        super().__init__(message)
        self.state = state
        self.coordinate = coordinate
        self.zeta = zeta


class IntegrationError(RuntimeError):
    """ODE integration aborted; carries the last successfully sampled parameter."""

    def __init__(self, message, last_zeta=None, samples=None):
        super().__init__(message)
        self.last_zeta = last_zeta
        self.samples = samples
