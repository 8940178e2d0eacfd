"""Exception hierarchy shared by all modules."""


class AdiabaticityError(Exception):
    """Base class for every error raised by this package."""


class DomainError(AdiabaticityError, ValueError):
    """Time outside a model's domain, or a stencil that does not fit."""


class HermiticityError(AdiabaticityError, ValueError):
    pass


class DegeneracyError(AdiabaticityError):
    """Two instantaneous levels closer than the degeneracy tolerance."""


class ContinuityError(AdiabaticityError):
    """Level matching failed even after grid refinement."""


class UndefinedArgError(AdiabaticityError):
    """The phase of a vanishing coupling was requested."""


class SingularBlockError(AdiabaticityError):
    """The detuning block of the adiabatic-frame Hamiltonian is not invertible."""


class ConvergenceError(AdiabaticityError):
    """Brillouin-Wigner iteration did not converge."""


class StepUnderflowError(AdiabaticityError):
    """Adaptive integrator needed a step below the minimum step."""


class ConfigError(AdiabaticityError, ValueError):
    """Scenario configuration violates the schema."""
