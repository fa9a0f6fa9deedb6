"""Exception hierarchy shared across the package."""


class BoilerError(Exception):
    """Base class for model and runtime errors (CLI exit code 1)."""


class PropertyRangeError(BoilerError, ValueError):
    """Thermodynamic state outside the tabulated region."""


class PhaseError(BoilerError, ValueError):
    """Enthalpy below saturation for a superheated-steam lookup."""


class DryoutError(BoilerError):
    """A riser section ran out of water."""

    def __init__(self, section, mass):
        self.section = section
        self.mass = mass
        super().__init__(f"riser section {section} dried out (M_w = {mass:.3e} kg)")


class CollapseError(BoilerError):
    """A riser section condensed completely (negative steam mass)."""

    def __init__(self, section, mass):
        self.section = section
        self.mass = mass
        super().__init__(f"riser section {section} fully condensed (M_s = {mass:.3e} kg)")


class SingularPressureError(BoilerError):
    """Pressure equation denominator vanished."""


class SteadyStateError(BoilerError):
    """Steady-state root finding failed."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class SimulationError(BoilerError):
    """Integration aborted; carries the failing time and a state snapshot."""

    def __init__(self, message, time, state):
        self.time = time
        self.state = state
        super().__init__(f"{message} at t = {time:.4f} s")


class ScenarioError(ValueError):
    """Malformed or invalid scenario / configuration (CLI exit code 2)."""
