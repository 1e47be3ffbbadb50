"""Exception taxonomy shared across the package.

All errors raised by yns derive from YnsError so callers can catch the
package's failures in one clause while letting programming errors surface.
"""


class YnsError(Exception):
    """Base class for all yns errors."""


class ValidationError(YnsError):
    """A physical parameter or configuration violates a stated hypothesis."""


class ConfigError(YnsError):
    """Run-config document is invalid; carries all violations, not just the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{path}: {msg}" for path, msg in self.violations)
        super().__init__(f"invalid config: {lines}")


class RegimeError(YnsError):
    """Operation requested in the wrong stability regime."""


class BranchError(YnsError):
    """Eigenvalue branch does not support the requested quantity."""


class ScanError(YnsError):
    """Degenerate wavenumber scan grid."""


class VacuumError(YnsError):
    """Density perturbation reached the vacuum guard."""


class CflError(YnsError):
    """Advective CFL condition violated at runtime."""


class PressureLawError(YnsError):
    """Operation needs an evaluable pressure law (GammaLaw), got DirectSlope."""


class ResolutionError(YnsError):
    """Grid does not resolve the requested spectral structure."""


class RangeError(YnsError):
    """Dyadic block index outside the filter bank range."""


class MeanError(YnsError):
    """Homogeneous Besov norm requested for a field with non-negligible mean."""


class WindowError(YnsError):
    """Fit window exceeds the validity window (torus spectral gap)."""


class QuadratureError(YnsError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class NoEscapeError(YnsError):
    """Instability run hit its time cap before reaching the escape threshold."""
