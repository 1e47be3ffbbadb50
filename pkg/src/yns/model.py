"""Physical parameters, pressure laws, and derived linearization coefficients.

The perturbation system is written around a constant background density
rho_bar with pressure P(rho). Everything downstream (dispersion relation,
solver, experiments) consumes the derived Coefficients, never the raw
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

from .errors import ValidationError


@dataclass(frozen=True)
class GammaLaw:
    """Power-law pressure P(rho) = A * rho**g, evaluable at any rho > 0."""

    A: float
    g: float

    def __post_init__(self):
        if not self.A > 0:
            raise ValidationError(f"GammaLaw requires A > 0, got A={self.A}")
        if not self.g >= 1:
            raise ValidationError(f"GammaLaw requires g >= 1, got g={self.g}")

    def p_prime(self, rho: float) -> float:
        """P'(rho) = A*g*rho**(g-1); positive and finite for rho > 0."""
        return self.A * self.g * rho ** (self.g - 1.0)


@dataclass(frozen=True)
class DirectSlope:
    """Pressure law known only through its slope at the background density.

    Sufficient for linear theory; nonlinear runs need GammaLaw so that
    P' is evaluable at perturbed densities.
    """

    p_prime_at_rho_bar: float


PressureLaw = Union[GammaLaw, DirectSlope]


@dataclass(frozen=True)
class PhysicalParams:
    """Physical inputs: background density, viscosities, Yukawa coefficient, pressure."""

    rho_bar: float
    mu: float
    mu_prime: float
    gamma: float
    pressure: PressureLaw

    def __post_init__(self):
        if not self.rho_bar > 0:
            raise ValidationError(
                f"background density hypothesis rho_bar > 0 violated (rho_bar={self.rho_bar})"
            )
        if not self.mu > 0:
            raise ValidationError(
                f"viscosity hypothesis mu > 0 violated (mu={self.mu})"
            )
        if not 2.0 * self.mu + self.mu_prime > 0:
            raise ValidationError(
                "viscosity hypothesis 2*mu + mu_prime > 0 violated "
                f"(2*mu + mu_prime = {2.0 * self.mu + self.mu_prime})"
            )

    def p_prime_at_background(self) -> float:
        if isinstance(self.pressure, GammaLaw):
            return self.pressure.p_prime(self.rho_bar)
        return self.pressure.p_prime_at_rho_bar


class Regime(Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    CRITICAL = "critical"


@dataclass(frozen=True)
class Coefficients:
    """Derived linearization coefficients.

    alpha1 = P'(rho_bar)/rho_bar, alpha2 = rho_bar, alpha3 = mu/rho_bar,
    alpha4 = (mu+mu_prime)/rho_bar, eta = alpha3 + alpha4 (computed once, so
    the identity holds bitwise), stability_margin = P'(rho_bar) + gamma*rho_bar.
    """

    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float
    eta: float
    stability_margin: float
    gamma: float
    rho_bar: float
    p_prime: float
    pressure: PressureLaw


def derive_coefficients(params: PhysicalParams) -> Coefficients:
    """Map validated physical parameters to the linearization coefficients."""
    p_prime = params.p_prime_at_background()
    alpha3 = params.mu / params.rho_bar
    alpha4 = (params.mu + params.mu_prime) / params.rho_bar
    return Coefficients(
        alpha1=p_prime / params.rho_bar,
        alpha2=params.rho_bar,
        alpha3=alpha3,
        alpha4=alpha4,
        eta=alpha3 + alpha4,
        stability_margin=p_prime + params.gamma * params.rho_bar,
        gamma=params.gamma,
        rho_bar=params.rho_bar,
        p_prime=p_prime,
        pressure=params.pressure,
    )


def classify_regime(coeffs: Coefficients, tol: float = 0.0) -> Regime:
    """Sign of the stability margin, with an absolute tolerance around zero."""
    m = coeffs.stability_margin
    if abs(m) <= tol:
        return Regime.CRITICAL
    return Regime.STABLE if m > 0 else Regime.UNSTABLE
