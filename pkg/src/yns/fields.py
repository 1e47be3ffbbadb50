"""Periodic-grid fields, Fourier multipliers, and dealiased nonlinear terms.

Real fields live on an N^d torus of side L; spectra use numpy's rfftn layout
(last axis halved, Hermitian symmetry structural). The wavenumber lattice is
xi_m = 2*pi*m/L with m in [-N/2, N/2). Odd-derivative multipliers zero the
unpaired Nyquist planes so real fields stay exactly real.

Sign conventions (fixed once, used consistently by the solver and the
unstable-data constructor):

    v_hat(xi)      =  i * xi . u_hat(xi) / |xi|      (v = Lambda^{-1} div u)
    u_long_hat(xi) = -i * (xi/|xi|) * v_hat(xi)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    PressureLawError,
    RegimeError,
    ResolutionError,
    VacuumError,
)
from .model import Coefficients, GammaLaw, Regime, classify_regime
from .spectral import GrowthSummary, real_lambda_plus


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid: dim in {1,2,3}, N points per axis (power of two), box length L."""

    dim: int
    n: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 4 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 4, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"length must be > 0, got {self.length}")

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / self.length

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @property
    def volume(self) -> float:
        return self.length**self.dim

    def wavenumbers(self) -> list:
        """Per-axis wavenumber arrays broadcast to the rfftn spectral shape."""
        full = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)
        half = 2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.dx)
        axes = [full] * (self.dim - 1) + [half]
        out = []
        for a, arr in enumerate(axes):
            shape = [1] * self.dim
            shape[a] = len(arr)
            out.append(arr.reshape(shape))
        return out

    def k_squared(self) -> np.ndarray:
        k2 = np.zeros(self.spectral_shape)
        for ka in self.wavenumbers():
            k2 = k2 + ka * ka
        return k2

    def k_norm(self) -> np.ndarray:
        return np.sqrt(self.k_squared())

    def derivative_wavenumbers(self) -> list:
        """Wavenumbers with the unpaired Nyquist value zeroed (odd derivatives)."""
        out = []
        nyq = np.pi * self.n / self.length
        for ka in self.wavenumbers():
            out.append(np.where(np.isclose(np.abs(ka), nyq), 0.0, ka))
        return out

    def k_squared_deriv(self) -> np.ndarray:
        """|xi|^2 on the derivative lattice (Nyquist-zeroed), so that composed
        odd-derivative operators and their inverses stay mutually consistent."""
        k2 = np.zeros(self.spectral_shape)
        for ka in self.derivative_wavenumbers():
            k2 = k2 + ka * ka
        return k2

    def k_norm_deriv(self) -> np.ndarray:
        return np.sqrt(self.k_squared_deriv())

    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep |m| <= N/3 per axis."""
        cutoff = self.n // 3
        full = np.abs(np.fft.fftfreq(self.n) * self.n)
        half = np.abs(np.fft.rfftfreq(self.n) * self.n)
        axes = [full] * (self.dim - 1) + [half]
        mask = np.ones(self.spectral_shape, dtype=bool)
        for a, arr in enumerate(axes):
            shape = [1] * self.dim
            shape[a] = len(arr)
            mask &= arr.reshape(shape) <= cutoff
        return mask

    def parseval_weights(self) -> np.ndarray:
        """Multiplicities of rfftn modes (2 for modes with a dropped conjugate)."""
        w = np.full(self.spectral_shape, 2.0)
        half = np.fft.rfftfreq(self.n) * self.n
        sel = (half == 0) | (half == self.n // 2)
        shape = [1] * self.dim
        shape[-1] = len(half)
        w = np.where(sel.reshape(shape), 1.0, w)
        return w

    def forward(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f)

    def inverse(self, f_hat: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(f_hat, s=self.shape, axes=tuple(range(self.dim)))


def spectral_l2(f_hat: np.ndarray, grid: GridSpec) -> float:
    """L^2(torus) norm from an rfftn spectrum (Parseval)."""
    w = grid.parseval_weights()
    total = float(np.sum(w * (f_hat.real**2 + f_hat.imag**2)))
    return float(np.sqrt(grid.volume * total)) / grid.n**grid.dim


def grid_lp(f: np.ndarray, grid: GridSpec, p: float) -> float:
    """L^p(torus) norm by grid quadrature; p = inf gives the max norm."""
    if np.isinf(p):
        return float(np.max(np.abs(f)))
    return float((grid.cell_volume * np.sum(np.abs(f) ** p)) ** (1.0 / p))


@dataclass
class FieldState:
    """Real perturbation fields (rho_tilde, u) on a periodic grid."""

    rho: np.ndarray
    u: list  # dim real arrays
    grid: GridSpec

    @classmethod
    def zeros(cls, grid: GridSpec) -> "FieldState":
        return cls(
            rho=np.zeros(grid.shape),
            u=[np.zeros(grid.shape) for _ in range(grid.dim)],
            grid=grid,
        )

    def copy(self) -> "FieldState":
        return FieldState(self.rho.copy(), [ua.copy() for ua in self.u], self.grid)

    def rho_hat(self) -> np.ndarray:
        return self.grid.forward(self.rho)

    def u_hat(self) -> list:
        return [self.grid.forward(ua) for ua in self.u]

    def check_finite(self):
        if not np.all(np.isfinite(self.rho)) or any(
            not np.all(np.isfinite(ua)) for ua in self.u
        ):
            raise ValueError("field state contains non-finite values")

    def check_vacuum(self, rho_bar: float, margin_frac: float = 0.1):
        """Hard guard: min(rho_tilde) must stay above -rho_bar + margin."""
        floor = -rho_bar + margin_frac * rho_bar
        m = float(np.min(self.rho))
        if m <= floor:
            raise VacuumError(
                f"min(rho_tilde)={m:.6g} at or below vacuum guard {floor:.6g}"
            )

    def l2_norms(self) -> tuple:
        """(||rho||_L2, ||u||_L2) by grid quadrature."""
        g = self.grid
        rho_n = grid_lp(self.rho, g, 2)
        u_sq = sum(float(np.sum(ua * ua)) for ua in self.u)
        return rho_n, float(np.sqrt(g.cell_volume * u_sq))


def bessel_potential(rho: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Solve -Lap(phi) + phi = rho spectrally: phi_hat = rho_hat/(1+|xi|^2)."""
    return grid.inverse(grid.forward(rho) / (1.0 + grid.k_squared()))


def helmholtz_project(u: Sequence[np.ndarray], grid: GridSpec):
    """Split u into (Pu, Qu): divergence-free and curl-free parts.

    Q_hat = xi (xi . u_hat)/|xi|^2 for xi != 0; the mean mode goes to Pu.
    For d = 1 the convention is Pu = 0, Qu = u.
    """
    if grid.dim == 1:
        return [np.zeros_like(u[0])], [u[0].copy()]
    kd = grid.derivative_wavenumbers()
    k2 = grid.k_squared_deriv()
    inv_k2 = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    u_hats = [grid.forward(ua) for ua in u]
    div_hat = sum(kd[a] * u_hats[a] for a in range(grid.dim))
    qu, pu = [], []
    for a in range(grid.dim):
        q_hat = kd[a] * div_hat * inv_k2
        qu.append(grid.inverse(q_hat))
        pu.append(grid.inverse(u_hats[a] - q_hat))
    return pu, qu


def lambda_div(u: Sequence[np.ndarray], grid: GridSpec) -> np.ndarray:
    """v = Lambda^{-1} div u: v_hat = i xi . u_hat / |xi|, zero at xi = 0."""
    kd = grid.derivative_wavenumbers()
    kn = grid.k_norm_deriv()
    inv_k = np.where(kn > 0, 1.0 / np.where(kn > 0, kn, 1.0), 0.0)
    v_hat = sum(1j * kd[a] * grid.forward(u[a]) for a in range(grid.dim)) * inv_k
    return grid.inverse(v_hat)


def lambda_inv_grad(v: np.ndarray, grid: GridSpec) -> list:
    """u_long with u_long_hat = -i (xi/|xi|) v_hat; zero at xi = 0."""
    kd = grid.derivative_wavenumbers()
    kn = grid.k_norm_deriv()
    inv_k = np.where(kn > 0, 1.0 / np.where(kn > 0, kn, 1.0), 0.0)
    v_hat = grid.forward(v)
    return [grid.inverse(-1j * kd[a] * inv_k * v_hat) for a in range(grid.dim)]


def _require_gamma_law(coeffs: Coefficients) -> GammaLaw:
    if not isinstance(coeffs.pressure, GammaLaw):
        raise PressureLawError(
            "nonlinear terms need a GammaLaw pressure so P' is evaluable at perturbed densities"
        )
    return coeffs.pressure


def pressure_nonlinearity(rho: np.ndarray, coeffs: Coefficients) -> np.ndarray:
    """F(rho_tilde) = P'(rho_tilde + rho_bar)/(rho_tilde + rho_bar) - alpha1, so F(0) = 0."""
    law = _require_gamma_law(coeffs)
    total = rho + coeffs.rho_bar
    return law.A * law.g * total ** (law.g - 2.0) - coeffs.alpha1


def density_ratio(rho: np.ndarray, coeffs: Coefficients) -> np.ndarray:
    """k(rho_tilde) = rho_tilde/(rho_tilde + rho_bar)."""
    return rho / (rho + coeffs.rho_bar)


def nonlinear_terms(state: FieldState, coeffs: Coefficients, dealias: bool = True,
                    vacuum_margin_frac: float = 0.1):
    """Dealiased N1, N2 of the perturbation system.

    N1 = -u.grad(rho) - rho div u
    N2 = -u.grad(u) - F(rho) grad(rho) - alpha3 k(rho) Lap(u) - alpha4 k(rho) grad(div u)

    Derivatives are spectral; products pointwise after 2/3-rule truncation of
    the inputs, and the outputs are truncated to the same band. Returns
    (n1, n2) as real grid arrays.
    """
    _require_gamma_law(coeffs)
    grid = state.grid
    mask = grid.dealias_mask() if dealias else None

    def trunc(f_hat):
        return f_hat * mask if dealias else f_hat

    kd = grid.derivative_wavenumbers()
    k2 = grid.k_squared()

    rho_hat = trunc(state.rho_hat())
    u_hats = [trunc(h) for h in state.u_hat()]

    rho = grid.inverse(rho_hat)
    u = [grid.inverse(h) for h in u_hats]
    grad_rho = [grid.inverse(1j * kd[a] * rho_hat) for a in range(grid.dim)]
    div_u_hat = sum(1j * kd[a] * u_hats[a] for a in range(grid.dim))
    div_u = grid.inverse(div_u_hat)
    lap_u = [grid.inverse(-k2 * u_hats[a]) for a in range(grid.dim)]
    grad_div_u = [grid.inverse(1j * kd[a] * div_u_hat) for a in range(grid.dim)]
    grad_u = [[grid.inverse(1j * kd[b] * u_hats[a]) for b in range(grid.dim)]
              for a in range(grid.dim)]

    # guard on the fields actually entering the rational nonlinearities
    floor = -coeffs.rho_bar + vacuum_margin_frac * coeffs.rho_bar
    if float(np.min(rho)) <= floor:
        raise VacuumError(
            f"dealiased min(rho_tilde)={float(np.min(rho)):.6g} at or below vacuum guard {floor:.6g}"
        )

    f_rho = pressure_nonlinearity(rho, coeffs)
    k_rho = density_ratio(rho, coeffs)

    n1 = -sum(u[a] * grad_rho[a] for a in range(grid.dim)) - rho * div_u
    n2 = []
    for a in range(grid.dim):
        adv = sum(u[b] * grad_u[a][b] for b in range(grid.dim))
        n2.append(
            -adv
            - f_rho * grad_rho[a]
            - coeffs.alpha3 * k_rho * lap_u[a]
            - coeffs.alpha4 * k_rho * grad_div_u[a]
        )

    n1 = grid.inverse(trunc(grid.forward(n1)))
    n2 = [grid.inverse(trunc(grid.forward(f))) for f in n2]
    return n1, n2


def effective_flux(state: FieldState, coeffs: Coefficients) -> list:
    """G = Qu - (alpha1/(alpha3+alpha4)) * invLap(grad rho); diagnostic only.

    Spectrally G_hat = Qu_hat + (alpha1/eta) * (i xi/|xi|^2) rho_hat for
    xi != 0; the rho mean is dropped (invLap undefined there).
    """
    grid = state.grid
    _, qu = helmholtz_project(state.u, grid)
    kd = grid.derivative_wavenumbers()
    k2 = grid.k_squared_deriv()
    inv_k2 = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    rho_hat = state.rho_hat()
    coef = coeffs.alpha1 / (coeffs.alpha3 + coeffs.alpha4)
    out = []
    for a in range(grid.dim):
        g_hat = grid.forward(qu[a]) + coef * 1j * kd[a] * inv_k2 * rho_hat
        out.append(grid.inverse(g_hat))
    return out


@dataclass(frozen=True)
class UnstableDataSpec:
    """Parameters of the mid-frequency bump data (radial annulus around k0)."""

    theta_bar: float       # in (0, Theta/2]
    zeta_bar: float        # bump half-width, <= k0/4
    delta: float           # L^2 amplitude of rho_tilde

    def validate(self, summary: GrowthSummary):
        if not (0.0 < self.theta_bar <= 0.5 * summary.theta + 1e-15):
            raise ValueError(
                f"theta_bar must lie in (0, Theta/2]; got {self.theta_bar} with Theta={summary.theta}"
            )
        if not (0.0 < self.zeta_bar <= 0.25 * summary.k0 + 1e-15):
            raise ValueError(
                f"zeta_bar must lie in (0, k0/4]; got {self.zeta_bar} with k0={summary.k0}"
            )
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")


def bump_profile(r_dist: np.ndarray, zeta_bar: float) -> np.ndarray:
    """Radial plateau bump: 1 inside |r|<zeta, exp(1 - 1/(1-r^2)) taper to 2*zeta."""
    r = (np.abs(r_dist) - zeta_bar) / zeta_bar
    out = np.zeros_like(np.asarray(r, dtype=float))
    out[r <= 0.0] = 1.0
    taper = (r > 0.0) & (r < 1.0)
    rt = r[taper]
    out[taper] = np.exp(1.0 - 1.0 / (1.0 - rt * rt))
    return out


def make_unstable_data(grid: GridSpec, coeffs: Coefficients, summary: GrowthSummary,
                       spec: UnstableDataSpec) -> FieldState:
    """Mid-frequency unstable initial data concentrated on the annulus around k0.

    rho_hat0 = delta * Psi/||Psi||, v_hat0 = -lambda0(|xi|) rho_hat0/(rho_bar |xi|),
    velocity assembled through the Lambda^{-1} grad convention. Per mode the
    pair is an eigenvector of A(|xi|), so the growth sandwich holds exactly at
    the lattice level. Construction requires min Re lambda0 >= Theta - theta_bar
    on the bump support; the validated zeta_bar defaults guarantee it.
    """
    if classify_regime(coeffs) is not Regime.UNSTABLE:
        raise RegimeError(
            f"unstable data needs margin < 0, got margin={coeffs.stability_margin}"
        )
    spec.validate(summary)
    k0, zeta = summary.k0, spec.zeta_bar

    kn = grid.k_norm()
    support = np.abs(kn - k0) <= 2.0 * zeta
    shells = np.unique(np.round(kn[support], 12))
    if len(shells) < 8:
        raise ResolutionError(
            f"only {len(shells)} lattice shells intersect the bump support; need >= 8 "
            f"(dk={grid.dk:.4g}, support width {4*zeta:.4g})"
        )

    psi = bump_profile(kn - k0, zeta)
    lam0 = np.where(support, real_lambda_plus(np.where(support, kn, 1.0), coeffs), 0.0)
    lam_min = float(np.min(lam0[support & (psi > 0)]))
    if lam_min < summary.theta - spec.theta_bar - 1e-12:
        raise ResolutionError(
            f"growth over the bump support dips to {lam_min:.6g} < Theta - theta_bar "
            f"= {summary.theta - spec.theta_bar:.6g}; shrink zeta_bar"
        )

    w = grid.parseval_weights()
    psi_l2 = np.sqrt(grid.volume * float(np.sum(w * psi * psi))) / grid.n**grid.dim
    rho_hat = (spec.delta / psi_l2) * psi

    inv_k = np.where(kn > 0, 1.0 / np.where(kn > 0, kn, 1.0), 0.0)
    v_hat = -lam0 * rho_hat * inv_k / coeffs.rho_bar

    kd = grid.derivative_wavenumbers()
    u = [grid.inverse(-1j * kd[a] * inv_k * v_hat) for a in range(grid.dim)]
    rho = grid.inverse(rho_hat)
    # irfftn enforces Hermitian symmetry, i.e. the conjugate-mirror average;
    # the bump is radial and real so the average is the data itself
    return FieldState(rho=rho, u=u, grid=grid)


def save_snapshot(state: FieldState, t: float, path_base) -> dict:
    """Write <base>.json header + <base>.bin little-endian float64 payload."""
    base = Path(path_base)
    names = ["rho"] + [f"u{a}" for a in range(state.grid.dim)]
    arrays = [state.rho] + list(state.u)
    payload = np.concatenate([a.ravel(order="C") for a in arrays]).astype("<f8")
    header = {
        "grid": {"dim": state.grid.dim, "n": state.grid.n, "length": state.grid.length},
        "time": t,
        "fields": names,
        "dtype": "<f8",
        "order": "C",
    }
    base.with_suffix(".bin").write_bytes(payload.tobytes())
    base.with_suffix(".json").write_text(json.dumps(header, sort_keys=True, indent=1))
    return header


def load_snapshot(path_base) -> tuple:
    """Read a snapshot pair; returns (FieldState, time)."""
    base = Path(path_base)
    header = json.loads(base.with_suffix(".json").read_text())
    g = header["grid"]
    grid = GridSpec(dim=g["dim"], n=g["n"], length=g["length"])
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f8")
    count = grid.n**grid.dim
    arrays = [
        raw[i * count:(i + 1) * count].reshape(grid.shape).copy()
        for i in range(len(header["fields"]))
    ]
    state = FieldState(rho=arrays[0], u=list(arrays[1:]), grid=grid)
    return state, float(header["time"])
