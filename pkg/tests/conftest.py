import numpy as np
import pytest

from yns.fields import FieldState, GridSpec
from yns.model import (
    DirectSlope,
    GammaLaw,
    PhysicalParams,
    derive_coefficients,
)


@pytest.fixture
def unstable_coeffs():
    """Reference unstable parameters: rho_bar=1, P'=1, gamma=-2, mu=1, mu'=0."""
    return derive_coefficients(
        PhysicalParams(rho_bar=1.0, mu=1.0, mu_prime=0.0, gamma=-2.0,
                       pressure=DirectSlope(1.0))
    )


@pytest.fixture
def unstable_coeffs_gamma_law():
    """Same linearization as unstable_coeffs but with an evaluable pressure law."""
    return derive_coefficients(
        PhysicalParams(rho_bar=1.0, mu=1.0, mu_prime=0.0, gamma=-2.0,
                       pressure=GammaLaw(A=1.0 / 1.4, g=1.4))
    )


@pytest.fixture
def stable_coeffs():
    """Stable parameters with gamma=0: margin = P'(1) = 1 > 0."""
    return derive_coefficients(
        PhysicalParams(rho_bar=1.0, mu=1.0, mu_prime=0.0, gamma=0.0,
                       pressure=DirectSlope(1.0))
    )


@pytest.fixture
def stable_coeffs_gamma_law():
    return derive_coefficients(
        PhysicalParams(rho_bar=1.0, mu=1.0, mu_prime=0.0, gamma=0.0,
                       pressure=GammaLaw(A=1.0 / 1.4, g=1.4))
    )


@pytest.fixture
def grid2d():
    """Small 2D grid, dk = 1/4."""
    return GridSpec(dim=2, n=64, length=2 * np.pi * 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_band_field(grid: GridSpec, rng: np.random.Generator,
                      k_band=(0.2, 5.0)) -> np.ndarray:
    """Real field with random spectrum supported in a wavenumber band."""
    kn = grid.k_norm()
    coef = rng.standard_normal(grid.spectral_shape) \
        + 1j * rng.standard_normal(grid.spectral_shape)
    sel = (kn >= k_band[0]) & (kn <= k_band[1])
    return grid.inverse(np.where(sel, coef, 0.0))


def random_band_state(grid: GridSpec, rng: np.random.Generator,
                      k_band=(0.2, 5.0), amplitude=1.0) -> FieldState:
    def one():
        f = random_band_field(grid, rng, k_band)
        top = float(np.max(np.abs(f)))
        return f * (amplitude / top) if top > 0 else f

    return FieldState(rho=one(), u=[one() for _ in range(grid.dim)], grid=grid)
