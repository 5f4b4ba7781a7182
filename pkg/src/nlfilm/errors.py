"""Exception hierarchy shared by all modules."""


class NlfilmError(Exception):
    """Base class for all package errors."""


class DomainError(NlfilmError, ValueError):
    """A scalar or structured argument is outside its admissible range."""


class ValidationError(NlfilmError, ValueError):
    """A constructed object violates one of its declared invariants."""


class QuadratureError(NlfilmError, ArithmeticError):
    """A numerical integral failed to converge under refinement."""


class ShapeError(NlfilmError, ValueError):
    """Grid or channel mismatch between fields and operators."""


class SizeError(NlfilmError, ValueError):
    """A dense assembly guard was exceeded."""


class GeometryError(NlfilmError, ValueError):
    """A domain does not fit the torus with the required clearance."""

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class RegimeError(NlfilmError, ValueError):
    """A horizon/thickness combination outside the supported regime."""


class ParameterError(NlfilmError, ValueError):
    """An invalid functional parameter (e.g. non-positive stabilization)."""


class SupportError(NlfilmError, ValueError):
    """A field violates a required support mask."""


class UnsupportedCaseError(NlfilmError, ValueError):
    """A degenerate case the implementation deliberately refuses."""


class SamplingError(NlfilmError, ValueError):
    """A sampled callable returned a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class IllConditionedInverseError(NlfilmError, ArithmeticError):
    """Too much spectral energy sits on clamped multiplier modes."""

    def __init__(self, message, energy_fraction):
        super().__init__(message)
        self.energy_fraction = energy_fraction


class OptimizationError(NlfilmError, RuntimeError):
    """An inner minimization failed across all starts."""


class ConfigError(NlfilmError, ValueError):
    """Configuration schema violation, carrying the offending key path."""

    def __init__(self, message, key_path=None):
        super().__init__(message)
        self.key_path = key_path
