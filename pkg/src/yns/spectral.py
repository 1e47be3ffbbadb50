"""Exact linear theory in Fourier space.

Per scalar wavenumber k = |xi| the longitudinal pair (rho_hat, v_hat) with
v = Lambda^{-1} div u obeys d/dt (rho_hat, v_hat) = A(k) (rho_hat, v_hat),

    A(k) = [[0,                                  -rho_bar*k],
            [(P'/rho_bar + gamma)*k - gamma*k^3/(1+k^2),  -eta*k^2]],

whose characteristic polynomial is lambda^2 + b*lambda + c with

    b(k) = eta*k^2,
    c(k) = rho_bar*k^2*(P'/rho_bar + gamma - gamma*k^2/(1+k^2))
         = k^2*(P'(rho_bar) + gamma*rho_bar/(1+k^2)).

Divergence-free velocity components decouple and obey a scalar heat flow
with diffusivity alpha3. Everything here is a pure function; the internal
kernels accept numpy arrays so the solver can evaluate whole lattices at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import BranchError, RegimeError, ScanError
from .model import Coefficients, Regime, classify_regime

#: relative eigenvalue-splitting threshold below which the propagator
#: switches to the degenerate (Jordan-limit) form
SPLIT_TOL = 1e-8


class Branch(Enum):
    REAL_DISTINCT = "real_distinct"
    REAL_DOUBLE = "real_double"
    COMPLEX_PAIR = "complex_pair"


def quadratic_coefficients(k, coeffs: Coefficients):
    """(b, c) of lambda^2 + b*lambda + c = 0 for scalar or array k."""
    k = np.asarray(k, dtype=float)
    k2 = k * k
    b = coeffs.eta * k2
    c = k2 * (coeffs.p_prime + coeffs.gamma * coeffs.rho_bar / (1.0 + k2))
    return b, c


def eigenvalues(k, coeffs: Coefficients):
    """Stable roots of the mode quadratic.

    Returns (lam_plus, lam_minus, discriminant); lam_plus is the root with
    the larger real part (positive imaginary part on the complex branch,
    where lam_minus = conj(lam_plus) exactly).
    """
    b, c = quadratic_coefficients(k, coeffs)
    disc = b * b - 4.0 * c
    s = np.sqrt(np.abs(disc))
    # real branch: larger-magnitude root first (b >= 0 so that is -(b+s)/2),
    # companion recovered from the root product c
    q = -0.5 * (b + s)
    safe_q = np.where(q != 0.0, q, 1.0)
    other = np.where(q != 0.0, c / safe_q, 0.0)
    lam_plus_real = np.maximum(q, other)
    lam_minus_real = np.minimum(q, other)
    lam_cplx = -0.5 * b + 0.5j * s
    real = disc >= 0
    lam_plus = np.where(real, lam_plus_real + 0.0j, lam_cplx)
    lam_minus = np.where(real, lam_minus_real + 0.0j, np.conj(lam_cplx))
    return lam_plus, lam_minus, disc


def real_lambda_plus(k, coeffs: Coefficients):
    """Re lambda_+ vectorized (scan and data-construction kernel)."""
    lp, _, _ = eigenvalues(k, coeffs)
    return np.asarray(lp).real


@dataclass(frozen=True)
class ModeAnalysis:
    """Per-wavenumber spectral record."""

    k: float
    damping_b: float
    restoring_c: float
    discriminant: float
    lambda_plus: complex
    lambda_minus: complex
    branch: Branch
    s_factor: Optional[float]


def analyze_mode(k: float, coeffs: Coefficients) -> ModeAnalysis:
    """Full eigen-analysis of a single wavenumber (k >= 0)."""
    if k < 0:
        raise ValueError(f"wavenumber must be >= 0, got {k}")
    b, c = quadratic_coefficients(k, coeffs)
    lp, lm, disc = eigenvalues(k, coeffs)
    lp, lm, disc = complex(lp), complex(lm), float(disc)
    if disc < 0:
        branch = Branch.COMPLEX_PAIR
        s_factor = oscillation_factor(k, coeffs, _disc=disc)
    elif abs(lp - lm) <= SPLIT_TOL * max(1.0, abs(lp)):
        branch = Branch.REAL_DOUBLE
        s_factor = None
    else:
        branch = Branch.REAL_DISTINCT
        s_factor = None
    return ModeAnalysis(
        k=float(k),
        damping_b=float(b),
        restoring_c=float(c),
        discriminant=disc,
        lambda_plus=lp,
        lambda_minus=lm,
        branch=branch,
        s_factor=s_factor,
    )


def oscillation_factor(k: float, coeffs: Coefficients, _disc: float | None = None) -> float:
    """S(k) = sqrt(4*rho_bar*(P'/rho_bar + gamma - gamma*k^2/(1+k^2))/(eta^2*k^2) - 1).

    Defined only on the oscillatory branch; there |Im lambda| = (eta*k^2/2)*S(k).
    """
    if _disc is None:
        b, c = quadratic_coefficients(k, coeffs)
        _disc = float(b * b - 4.0 * c)
    if _disc >= 0:
        raise BranchError(
            f"S(k) needs two complex conjugate eigenvalues; discriminant={_disc} at k={k}"
        )
    k2 = k * k
    w = coeffs.alpha1 + coeffs.gamma - coeffs.gamma * k2 / (1.0 + k2)
    return float(np.sqrt(4.0 * coeffs.rho_bar * w / (coeffs.eta**2 * k2) - 1.0))


def system_matrix_entries(k, coeffs: Coefficients):
    """Entries of A(k): (a12, a21, a22); a11 = 0."""
    k = np.asarray(k, dtype=float)
    k2 = k * k
    a12 = -coeffs.rho_bar * k
    a21 = (coeffs.alpha1 + coeffs.gamma) * k - coeffs.gamma * k * k2 / (1.0 + k2)
    a22 = -coeffs.eta * k2
    return a12, a21, a22


def propagator_scalars(k, t: float, coeffs: Coefficients, split_tol: float = SPLIT_TOL):
    """(c0, dd) with exp(t*A(k)) = c0*I + dd*A(k), elementwise over array k.

    Both outputs are real (A is real). The divided difference
    dd = (e^{l+ t} - e^{l- t})/(l+ - l-) is evaluated cancellation-free:
    sin/cos on the oscillatory branch, expm1 on the real branch, and the
    Jordan limit e^{lt}(1 - lt), t e^{lt} once the splitting drops below
    split_tol relative to max(1, |lambda+|).
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    shape = k.shape
    k = k.ravel()
    b, c = quadratic_coefficients(k, coeffs)
    disc = b * b - 4.0 * c
    s = np.sqrt(np.abs(disc))
    half = -0.5 * b

    # |lambda_+| estimate for the relative splitting threshold
    lam_mag = np.abs(half) + 0.5 * s
    degen = s <= split_tol * np.maximum(1.0, lam_mag)

    c0 = np.empty_like(b)
    dd = np.empty_like(b)

    osc = (disc < 0) & ~degen
    if np.any(osc):
        om = 0.5 * s[osc]
        ebt = np.exp(half[osc] * t)
        c0[osc] = ebt * (np.cos(om * t) + (b[osc] / (2.0 * om)) * np.sin(om * t))
        dd[osc] = ebt * np.sin(om * t) / om

    real = (disc >= 0) & ~degen
    if np.any(real):
        sr = s[real]
        lm = half[real] - 0.5 * sr
        lp = half[real] + 0.5 * sr
        dd_r = np.empty_like(sr)
        c0_r = np.empty_like(sr)
        big = np.abs(sr * t) > 50.0
        if np.any(~big):
            phi = np.expm1(sr[~big] * t) / sr[~big]
            elm = np.exp(lm[~big] * t)
            dd_r[~big] = elm * phi
            c0_r[~big] = elm * (1.0 - lm[~big] * phi)
        if np.any(big):
            elp = np.exp(lp[big] * t)
            elm = np.exp(lm[big] * t)
            dd_r[big] = (elp - elm) / sr[big]
            c0_r[big] = (lp[big] * elm - lm[big] * elp) / sr[big]
        dd[real] = dd_r
        c0[real] = c0_r

    if np.any(degen):
        lam = half[degen]
        elt = np.exp(lam * t)
        c0[degen] = elt * (1.0 - lam * t)
        dd[degen] = t * elt

    return c0.reshape(shape), dd.reshape(shape)


@dataclass(frozen=True)
class Propagator2x2:
    """Closed-form solution operator mapping (rho_hat0, v_hat0) to time t."""

    m_rr: complex
    m_rv: complex
    m_vr: complex
    m_vv: complex
    k: float
    t: float
    branch: Branch

    def apply(self, rho_hat: complex, v_hat: complex):
        return (
            self.m_rr * rho_hat + self.m_rv * v_hat,
            self.m_vr * rho_hat + self.m_vv * v_hat,
        )

    def matrix(self) -> np.ndarray:
        return np.array([[self.m_rr, self.m_rv], [self.m_vr, self.m_vv]])


def propagator(k: float, t: float, coeffs: Coefficients,
               split_tol: float = SPLIT_TOL) -> Propagator2x2:
    """exp(t*A(k)) for a single mode.

    t may be negative (the reversibility check uses it); production stepping
    always passes t >= 0. k = 0 returns the identity.
    """
    if k < 0:
        raise ValueError(f"wavenumber must be >= 0, got {k}")
    c0_arr, dd_arr = propagator_scalars(k, float(t), coeffs, split_tol)
    c0, dd = float(c0_arr.item()), float(dd_arr.item())
    a12, a21, a22 = system_matrix_entries(k, coeffs)
    mode = analyze_mode(k, coeffs)
    return Propagator2x2(
        m_rr=complex(c0),
        m_rv=complex(dd * float(a12)),
        m_vr=complex(dd * float(a21)),
        m_vv=complex(c0 + dd * float(a22)),
        k=float(k),
        t=float(t),
        branch=mode.branch,
    )


def solenoidal_factor(k, t: float, coeffs: Coefficients):
    """Heat multiplier e^{-alpha3 k^2 t} for divergence-free velocity parts."""
    k = np.asarray(k, dtype=float)
    return np.exp(-coeffs.alpha3 * k * k * t)


def asymptotic_remainders(coeffs: Coefficients, k_list, include_small_k: bool = True):
    """Residuals against the small-k and large-k eigenvalue expansions.

    small_k_residual(k) = |lambda_+(k) - (sqrt(-margin)*k - (eta/2)*k^2)|
    (unstable regime only), large_k_residual(k) = |lambda_+(k) + P'/eta|.
    Returns (k, small_k_residual, large_k_residual) rows; the small-k entry
    is None when not requested.
    """
    if include_small_k and classify_regime(coeffs) is not Regime.UNSTABLE:
        raise RegimeError(
            "small-k expansion requires the unstable regime "
            f"(margin={coeffs.stability_margin})"
        )
    ks = np.asarray(k_list, dtype=float)
    lp = real_lambda_plus(ks, coeffs)
    sqrt_neg_margin = np.sqrt(-coeffs.stability_margin) if include_small_k else None
    rows = []
    for k, l in zip(np.atleast_1d(ks), np.atleast_1d(lp)):
        small = (
            float(abs(l - (sqrt_neg_margin * k - 0.5 * coeffs.eta * k * k)))
            if include_small_k
            else None
        )
        rows.append((float(k), small, float(abs(l + coeffs.p_prime / coeffs.eta))))
    return rows


def fit_loglog_slope(x, y):
    """Least-squares slope of log y against log x (requires y > 0)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = np.vstack([np.log(x), np.ones(len(x))]).T
    slope, _ = np.linalg.lstsq(a, np.log(y), rcond=None)[0]
    return float(slope)


@dataclass(frozen=True)
class GrowthSummary:
    """Maximal growth rate Theta, a maximizing wavenumber, and the scan table."""

    theta: float
    k0: float
    scan_k: np.ndarray
    scan_re_lambda: np.ndarray
    band: Optional[tuple]  # (k_low, k_high) with Re lambda_+ > 0; None if empty


def _bisect_band_edge(coeffs: Coefficients, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of the restoring coefficient c(k) on [lo, hi] with c(lo) < 0 < c(hi)."""
    def c_of(x):
        return float(quadratic_coefficients(x, coeffs)[1])

    flo = c_of(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = c_of(mid)
        if fm == 0.0 or hi - lo < tol:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def max_growth(coeffs: Coefficients, k_min: float = 1e-4, k_max: float = 1e4,
               n_log_samples: int = 4096) -> GrowthSummary:
    """Theta = sup_k max(Re lambda_+, Re lambda_-) by log scan + golden refinement.

    Re lambda_+ >= Re lambda_- pointwise with the branch labeling used here,
    so scanning the plus branch suffices. In the stable regime theta <= 0 and
    the band is empty.
    """
    if not (k_min > 0 and k_min < k_max):
        raise ScanError(f"degenerate scan grid: k_min={k_min}, k_max={k_max}")
    ks = np.geomspace(k_min, k_max, n_log_samples)
    re_lp = real_lambda_plus(ks, coeffs)
    i = int(np.argmax(re_lp))
    k0, theta = float(ks[i]), float(re_lp[i])
    if 0 < i < len(ks) - 1:
        try:
            res = minimize_scalar(
                lambda x: -float(real_lambda_plus(np.asarray(x, dtype=float), coeffs)),
                bracket=(float(ks[i - 1]), float(ks[i]), float(ks[i + 1])),
                method="golden",
                options={"xtol": 1e-10},
            )
            k0, theta = float(res.x), float(-res.fun)
        except (ValueError, RuntimeError):
            pass  # flat bracket; keep the scan maximum

    band = None
    if classify_regime(coeffs) is Regime.UNSTABLE and theta > 0:
        pos = np.where(re_lp > 0)[0]
        guess = float(ks[pos[-1]]) if len(pos) else k0
        hi = min(float(k_max), guess * 4.0)
        if float(quadratic_coefficients(hi, coeffs)[1]) > 0:
            band = (0.0, float(_bisect_band_edge(coeffs, guess, hi)))
        else:
            band = (0.0, float("inf"))  # P' <= 0: no high-k restoring sign change
    return GrowthSummary(theta=theta, k0=k0, scan_k=ks, scan_re_lambda=re_lp, band=band)
