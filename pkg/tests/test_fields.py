import numpy as np
import pytest

from conftest import random_band_field, random_band_state
from yns.errors import (
    PressureLawError,
    RegimeError,
    ResolutionError,
    VacuumError,
)
from yns.fields import (
    FieldState,
    GridSpec,
    UnstableDataSpec,
    bessel_potential,
    bump_profile,
    effective_flux,
    helmholtz_project,
    lambda_div,
    lambda_inv_grad,
    load_snapshot,
    make_unstable_data,
    nonlinear_terms,
    save_snapshot,
    spectral_l2,
)
from yns.model import DirectSlope, GammaLaw, PhysicalParams, derive_coefficients
from yns.spectral import max_growth, real_lambda_plus


def mesh(grid):
    x = np.arange(grid.n) * grid.dx
    return np.meshgrid(*([x] * grid.dim), indexing="ij")


# ---------------------------------------------------------------- transforms

def test_roundtrip_and_parseval(grid2d, rng):
    f = random_band_field(grid2d, rng)
    back = grid2d.inverse(grid2d.forward(f))
    assert np.max(np.abs(back - f)) < 1e-12 * np.max(np.abs(f))
    direct = np.sqrt(grid2d.cell_volume * np.sum(f * f))
    assert spectral_l2(grid2d.forward(f), grid2d) == pytest.approx(direct, rel=1e-12)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(dim=4, n=64, length=1.0)
    with pytest.raises(ValueError):
        GridSpec(dim=2, n=48, length=1.0)
    with pytest.raises(ValueError):
        GridSpec(dim=2, n=64, length=0.0)


# ---------------------------------------------------------------- bessel

def test_bessel_constant_field(grid2d):
    rho = np.full(grid2d.shape, 0.7)
    phi = bessel_potential(rho, grid2d)
    assert np.max(np.abs(phi - 0.7)) < 1e-13


def test_bessel_single_mode(grid2d):
    X, _ = mesh(grid2d)
    rho = np.cos(X)  # |xi| = 1
    phi = bessel_potential(rho, grid2d)
    assert np.max(np.abs(phi - 0.5 * rho)) < 1e-13


def test_bessel_defining_equation(grid2d, rng):
    rho = random_band_field(grid2d, rng)
    phi = bessel_potential(rho, grid2d)
    phi_hat = grid2d.forward(phi)
    residual = grid2d.inverse(grid2d.k_squared() * phi_hat + phi_hat) - rho
    assert np.max(np.abs(residual)) < 1e-10 * np.max(np.abs(rho))


# ---------------------------------------------------------------- helmholtz

def test_helmholtz_gradient_field(grid2d, rng):
    f_hat = grid2d.forward(random_band_field(grid2d, rng))
    kd = grid2d.derivative_wavenumbers()
    u = [grid2d.inverse(1j * kd[a] * f_hat) for a in range(2)]
    pu, qu = helmholtz_project(u, grid2d)
    top = max(np.max(np.abs(c)) for c in u)
    assert max(np.max(np.abs(c)) for c in pu) < 1e-12 * top
    assert all(np.max(np.abs(q - ua)) < 1e-12 * top for q, ua in zip(qu, u))


def test_helmholtz_stream_function(grid2d, rng):
    psi_hat = grid2d.forward(random_band_field(grid2d, rng))
    kd = grid2d.derivative_wavenumbers()
    u = [grid2d.inverse(1j * kd[1] * psi_hat), grid2d.inverse(-1j * kd[0] * psi_hat)]
    pu, qu = helmholtz_project(u, grid2d)
    top = max(np.max(np.abs(c)) for c in u)
    assert max(np.max(np.abs(c)) for c in qu) < 1e-12 * top


def test_helmholtz_sum_and_idempotence(grid2d, rng):
    u = [random_band_field(grid2d, rng) for _ in range(2)]
    pu, qu = helmholtz_project(u, grid2d)
    for a in range(2):
        assert np.max(np.abs(pu[a] + qu[a] - u[a])) < 1e-12
    pu2, qu2 = helmholtz_project(qu, grid2d)
    assert max(np.max(np.abs(c)) for c in pu2) < 1e-12
    for a in range(2):
        assert np.max(np.abs(qu2[a] - qu[a])) < 1e-12


def test_helmholtz_divergence_free(grid2d, rng):
    u = [random_band_field(grid2d, rng) for _ in range(2)]
    pu, _ = helmholtz_project(u, grid2d)
    kd = grid2d.derivative_wavenumbers()
    div_hat = sum(1j * kd[a] * grid2d.forward(pu[a]) for a in range(2))
    assert np.max(np.abs(div_hat)) < 1e-12 * grid2d.n**2


def test_helmholtz_mean_flow_to_pu(grid2d):
    u = [np.full(grid2d.shape, 1.5), np.full(grid2d.shape, -0.5)]
    pu, qu = helmholtz_project(u, grid2d)
    assert np.max(np.abs(pu[0] - 1.5)) < 1e-13
    assert np.max(np.abs(qu[0])) < 1e-13


def test_helmholtz_1d_convention():
    grid = GridSpec(dim=1, n=32, length=2 * np.pi)
    u = [np.sin(np.arange(32) * grid.dx)]
    pu, qu = helmholtz_project(u, grid)
    assert np.max(np.abs(pu[0])) == 0.0
    assert np.max(np.abs(qu[0] - u[0])) == 0.0


# ---------------------------------------------------------------- lambda ops

def test_lambda_roundtrip_on_curl_free(grid2d, rng):
    u = [random_band_field(grid2d, rng) for _ in range(2)]
    _, qu = helmholtz_project(u, grid2d)
    v = lambda_div(qu, grid2d)
    back = lambda_inv_grad(v, grid2d)
    top = max(np.max(np.abs(c)) for c in qu)
    assert max(np.max(np.abs(b - q)) for b, q in zip(back, qu)) < 1e-12 * top


def test_lambda_div_of_solenoidal_is_zero(grid2d, rng):
    u = [random_band_field(grid2d, rng) for _ in range(2)]
    pu, _ = helmholtz_project(u, grid2d)
    v = lambda_div(pu, grid2d)
    assert np.max(np.abs(v)) < 1e-12 * max(np.max(np.abs(c)) for c in pu)


def test_lambda_zero_mode(grid2d):
    u = [np.full(grid2d.shape, 2.0), np.full(grid2d.shape, -1.0)]
    v = lambda_div(u, grid2d)
    assert np.max(np.abs(v)) < 1e-14
    back = lambda_inv_grad(np.full(grid2d.shape, 3.0), grid2d)
    assert max(np.max(np.abs(c)) for c in back) < 1e-14


def test_multipliers_commute(grid2d, rng):
    f = random_band_field(grid2d, rng)
    u = [f, random_band_field(grid2d, rng)]
    a = bessel_potential(helmholtz_project(u, grid2d)[1][0], grid2d)
    b = helmholtz_project([bessel_potential(c, grid2d) for c in u], grid2d)[1][0]
    assert np.max(np.abs(a - b)) < 1e-12 * max(1.0, np.max(np.abs(a)))


# ---------------------------------------------------------------- dealiasing

def test_dealias_mask_kills_top_third(grid2d, rng):
    """Fields supported in the top third produce exactly zero dealiased product."""
    cutoff = grid2d.n // 3
    full = np.abs(np.fft.fftfreq(grid2d.n) * grid2d.n)
    half = np.abs(np.fft.rfftfreq(grid2d.n) * grid2d.n)
    sel = (full[:, None] > cutoff) & (half[None, :] > cutoff)
    coef = rng.standard_normal(grid2d.spectral_shape)
    f = grid2d.inverse(np.where(sel, coef, 0.0))
    mask = grid2d.dealias_mask()
    f_d = grid2d.inverse(mask * grid2d.forward(f))
    assert np.max(np.abs(f_d)) < 1e-13 * max(1.0, np.max(np.abs(f)))
    prod_hat = grid2d.forward(f_d * f_d) * mask
    assert np.max(np.abs(prod_hat)) < 1e-13


# ---------------------------------------------------------------- nonlinear terms

def gamma_law_coeffs(gamma=-2.0, g=3.0, rho_bar=1.0):
    return derive_coefficients(
        PhysicalParams(rho_bar, 1.0, 0.0, gamma, GammaLaw(A=1.0, g=g))
    )


def test_nonlinear_zero_state(grid2d):
    co = gamma_law_coeffs()
    n1, n2 = nonlinear_terms(FieldState.zeros(grid2d), co)
    assert np.max(np.abs(n1)) == 0.0
    assert all(np.max(np.abs(f)) == 0.0 for f in n2)


def test_nonlinear_requires_gamma_law(grid2d):
    co = derive_coefficients(PhysicalParams(1.0, 1.0, 0.0, 0.0, DirectSlope(1.0)))
    with pytest.raises(PressureLawError):
        nonlinear_terms(FieldState.zeros(grid2d), co)


def test_nonlinear_single_mode_oracle():
    """N1, N2 for one-mode data on a tiny grid vs analytic pointwise evaluation.

    The oracle builds every derivative from the closed-form expressions of the
    sine/cosine data and multiplies pointwise on the 8^2 grid; the shared final
    step is the band projection that defines the discrete operator.
    """
    grid = GridSpec(dim=2, n=8, length=2 * np.pi)
    co = gamma_law_coeffs(g=3.0)  # P = rho^3: F(r) = 3A*r (exact, band-limited-ish)
    X, Y = mesh(grid)
    a_r, a_u = 0.05, 0.03
    rho = a_r * np.cos(X)
    u = [a_u * np.sin(X), a_u * np.cos(Y)]
    state = FieldState(rho=rho, u=u, grid=grid)

    # analytic derivatives
    drho = [-a_r * np.sin(X), np.zeros_like(X)]
    div_u = a_u * np.cos(X) - a_u * np.sin(Y)
    lap_u = [-a_u * np.sin(X), -a_u * np.cos(Y)]
    grad_div = [-a_u * np.sin(X), -a_u * np.cos(Y)]
    gu = [[a_u * np.cos(X), np.zeros_like(X)], [np.zeros_like(X), -a_u * np.sin(Y)]]

    f_rho = 3.0 * 1.0 * rho  # F for P = A rho^3 with A=1: 3A(rho+1) - 3A = 3A rho
    k_rho = rho / (rho + 1.0)

    n1_ref = -(u[0] * drho[0] + u[1] * drho[1]) - rho * div_u
    n2_ref = []
    for a in range(2):
        adv = u[0] * gu[a][0] + u[1] * gu[a][1]
        n2_ref.append(-adv - f_rho * drho[a]
                      - co.alpha3 * k_rho * lap_u[a]
                      - co.alpha4 * k_rho * grad_div[a])
    mask = grid.dealias_mask()
    n1_ref = grid.inverse(mask * grid.forward(n1_ref))
    n2_ref = [grid.inverse(mask * grid.forward(f)) for f in n2_ref]

    n1, n2 = nonlinear_terms(state, co)
    assert np.max(np.abs(n1 - n1_ref)) < 1e-10
    for a in range(2):
        assert np.max(np.abs(n2[a] - n2_ref[a])) < 1e-10


def test_nonlinear_n1_integrates_to_zero(grid2d, rng):
    co = gamma_law_coeffs(g=1.4)
    st = random_band_state(grid2d, rng, amplitude=0.2)
    n1, _ = nonlinear_terms(st, co)
    total = abs(float(np.sum(n1)) * grid2d.cell_volume)
    scale = grid2d.cell_volume * float(np.sum(np.abs(st.rho * st.u[0])))
    assert total <= 1e-13 * (1.0 + scale)


def test_nonlinear_vacuum_guard(grid2d):
    co = gamma_law_coeffs(g=1.4)
    st = FieldState.zeros(grid2d)
    st.rho[:] = -0.95  # uniform catastrophic depression
    with pytest.raises(VacuumError):
        nonlinear_terms(st, co)


# ---------------------------------------------------------------- effective flux

def test_effective_flux_reduces_to_qu(grid2d, rng):
    co = gamma_law_coeffs()
    u = [random_band_field(grid2d, rng) for _ in range(2)]
    st = FieldState(rho=np.zeros(grid2d.shape), u=u, grid=grid2d)
    g = effective_flux(st, co)
    _, qu = helmholtz_project(u, grid2d)
    for a in range(2):
        assert np.max(np.abs(g[a] - qu[a])) < 1e-12


def test_effective_flux_single_mode(grid2d):
    co = gamma_law_coeffs()
    X, _ = mesh(grid2d)
    rho = np.cos(X)  # |xi| = 1
    st = FieldState(rho=rho, u=[np.zeros_like(rho), np.zeros_like(rho)], grid=grid2d)
    g = effective_flux(st, co)
    coef = co.alpha1 / (co.alpha3 + co.alpha4)
    # G_hat = coef * i xi/|xi|^2 rho_hat: amplitude coef, phase shift -> -sin
    expected = -coef * np.sin(X)
    assert np.max(np.abs(g[0] - expected)) < 1e-12
    assert np.max(np.abs(g[1])) < 1e-13


def test_effective_flux_zero_alpha1(grid2d, rng):
    co = derive_coefficients(
        PhysicalParams(1.0, 1.0, 0.0, -2.0, GammaLaw(A=1e-30, g=1.0))
    )
    assert co.alpha1 == pytest.approx(0.0, abs=1e-29)
    u = [random_band_field(grid2d, rng) for _ in range(2)]
    st = FieldState(rho=random_band_field(grid2d, rng), u=u, grid=grid2d)
    g = effective_flux(st, co)
    _, qu = helmholtz_project(u, grid2d)
    for a in range(2):
        assert np.max(np.abs(g[a] - qu[a])) < 1e-12


# ---------------------------------------------------------------- unstable data

@pytest.fixture
def unstable_setup(unstable_coeffs):
    grid = GridSpec(dim=2, n=128, length=2 * np.pi * 32)
    summary = max_growth(unstable_coeffs)
    return grid, summary, unstable_coeffs


def test_bump_profile_shape():
    r = np.array([0.0, 0.5, 0.999, 1.0001, 1.5, 1.999, 2.2])
    psi = bump_profile(r, 1.0)
    assert np.all(psi[:3] == 1.0)
    assert 0 < psi[3] < 1 and 0 < psi[5] < 1
    assert psi[6] == 0.0
    assert np.all(np.diff(psi) <= 1e-12)


def test_unstable_data_norm_is_delta(unstable_setup):
    grid, summary, co = unstable_setup
    spec = UnstableDataSpec(theta_bar=summary.theta / 2, zeta_bar=summary.k0 / 8,
                            delta=3e-4)
    st = make_unstable_data(grid, co, summary, spec)
    assert spectral_l2(st.rho_hat(), grid) == pytest.approx(3e-4, rel=1e-10)


def test_unstable_data_support(unstable_setup):
    grid, summary, co = unstable_setup
    zeta = summary.k0 / 8
    spec = UnstableDataSpec(theta_bar=summary.theta / 2, zeta_bar=zeta, delta=1.0)
    st = make_unstable_data(grid, co, summary, spec)
    kn = grid.k_norm()
    outside = np.abs(kn - summary.k0) > 2 * zeta
    # the constructed spectrum vanishes outside the annulus; materializing the
    # real field and transforming back only adds fp round-off
    rho_hat = st.rho_hat()
    assert np.max(np.abs(rho_hat[outside])) < 1e-13 * np.max(np.abs(rho_hat))
    for h in st.u_hat():
        assert np.max(np.abs(h[outside])) < 1e-13 * max(1e-300, np.max(np.abs(h)))


def test_unstable_data_velocity_lower_bound(unstable_setup):
    grid, summary, co = unstable_setup
    delta = 1e-2
    spec = UnstableDataSpec(theta_bar=summary.theta / 2, zeta_bar=summary.k0 / 8,
                            delta=delta)
    st = make_unstable_data(grid, co, summary, spec)
    u_norm = np.sqrt(sum(spectral_l2(h, grid) ** 2 for h in st.u_hat()))
    bound = delta * summary.theta / (co.rho_bar * (summary.k0 + 2 * spec.zeta_bar))
    assert u_norm >= bound


def test_unstable_data_regime_error(stable_coeffs, unstable_coeffs):
    grid = GridSpec(dim=2, n=128, length=2 * np.pi * 32)
    summary = max_growth(unstable_coeffs)
    spec = UnstableDataSpec(theta_bar=summary.theta / 2, zeta_bar=summary.k0 / 8,
                            delta=1.0)
    with pytest.raises(RegimeError):
        make_unstable_data(grid, stable_coeffs, summary, spec)


def test_unstable_data_resolution_error(unstable_coeffs):
    summary = max_growth(unstable_coeffs)
    coarse = GridSpec(dim=1, n=16, length=2 * np.pi)  # dk = 1: no shells in support
    spec = UnstableDataSpec(theta_bar=summary.theta / 2, zeta_bar=summary.k0 / 8,
                            delta=1.0)
    with pytest.raises(ResolutionError):
        make_unstable_data(coarse, unstable_coeffs, summary, spec)


def test_unstable_data_spec_validation(unstable_coeffs):
    summary = max_growth(unstable_coeffs)
    with pytest.raises(ValueError):
        UnstableDataSpec(theta_bar=summary.theta, zeta_bar=summary.k0 / 8,
                         delta=1.0).validate(summary)
    with pytest.raises(ValueError):
        UnstableDataSpec(theta_bar=summary.theta / 2, zeta_bar=summary.k0,
                         delta=1.0).validate(summary)


def test_unstable_data_is_growing_eigenmode(unstable_setup):
    """Per mode the data lies on the lambda_+ branch: one exact linear step
    multiplies every populated mode by e^{lambda_+ dt}."""
    from yns.solver import step_linear

    grid, summary, co = unstable_setup
    spec = UnstableDataSpec(theta_bar=summary.theta / 2, zeta_bar=summary.k0 / 8,
                            delta=1.0)
    st = make_unstable_data(grid, co, summary, spec)
    dt = 0.7
    st2 = step_linear(st, dt, co)
    kn = grid.k_norm()
    r0, r1 = st.rho_hat(), st2.rho_hat()
    sel = np.abs(r0) > 1e-5 * np.max(np.abs(r0))
    growth = np.abs(r1[sel] / r0[sel])
    expected = np.exp(real_lambda_plus(kn[sel], co) * dt)
    assert np.max(np.abs(growth - expected) / expected) < 1e-10


# ---------------------------------------------------------------- snapshots

def test_snapshot_roundtrip(tmp_path, grid2d, rng):
    st = random_band_state(grid2d, rng, amplitude=0.3)
    save_snapshot(st, 2.5, tmp_path / "snap")
    loaded, t = load_snapshot(tmp_path / "snap")
    assert t == 2.5
    assert loaded.grid == grid2d
    assert np.array_equal(loaded.rho, st.rho)
    for a, b in zip(loaded.u, st.u):
        assert np.array_equal(a, b)


def test_state_guards(grid2d):
    st = FieldState.zeros(grid2d)
    st.rho[0, 0] = np.nan
    with pytest.raises(ValueError):
        st.check_finite()
    st2 = FieldState.zeros(grid2d)
    st2.rho[:] = -0.95
    with pytest.raises(VacuumError):
        st2.check_vacuum(rho_bar=1.0)
