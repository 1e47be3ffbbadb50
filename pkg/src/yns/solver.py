"""Time integration of the linear and nonlinear perturbation systems.

LinearExact advances every longitudinal mode pair (rho_hat, v_hat) with the
closed-form propagator and every solenoidal velocity component with the
alpha3 heat factor, so linear stepping is a machine-exact semigroup. The
nonlinear scheme is an integrating-factor Heun method (ETD-RK2): the exact
linear propagator is applied to the state and to N(state), then the update
is corrected with N at the prediction. The Yukawa coupling is linear in
rho_tilde and stays inside the exact part.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import CflError, VacuumError
from .fields import FieldState, GridSpec, grid_lp, spectral_l2
from .model import Coefficients
from .spectral import propagator_scalars, solenoidal_factor, system_matrix_entries


class Scheme(Enum):
    LINEAR_EXACT = "linear_exact"
    ETD_RK2 = "etd_rk2"


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    scheme: Scheme = Scheme.ETD_RK2
    dealias: bool = True
    snapshot_every: int = 0      # steps; 0 = never
    norm_every: int = 1          # steps between norm samples
    vacuum_margin_frac: float = 0.1
    cfl_limit: float = 0.5
    stop_rho_l2: Optional[float] = None  # stop once ||rho||_L2 reaches this
    track_lp: Optional[float] = None     # extra L^p norm series
    track_energy: bool = False           # Besov energy functionals at samples
    energy_p: float = 2.0
    energy_j0: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["scheme"] = self.scheme.value
        return d


@dataclass
class RunRecord:
    """Time series + manifest of one run; partial on abort."""

    manifest: dict
    t: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)  # (t, FieldState)
    aborted: bool = False
    abort_reason: Optional[str] = None
    stopped_early: bool = False
    stop_time: Optional[float] = None

    def sample_arrays(self) -> dict:
        out = {"t": np.asarray(self.t)}
        for k, v in self.series.items():
            out[k] = np.asarray(v)
        return out


class _Linear:
    """Per-mode multipliers of the exact linear flow over one fixed step."""

    def __init__(self, grid: GridSpec, coeffs: Coefficients, dt: float):
        self.grid = grid
        self.dt = dt
        kd = grid.derivative_wavenumbers()
        kn = grid.k_norm_deriv()
        c0, dd = propagator_scalars(kn, dt, coeffs)
        a12, a21, a22 = system_matrix_entries(kn, coeffs)
        self.m_rr = c0
        self.m_rv = dd * a12
        self.m_vr = dd * a21
        self.m_vv = c0 + dd * a22
        self.heat = solenoidal_factor(kn, dt, coeffs)
        self.kd = kd
        inv = np.where(kn > 0, 1.0 / np.where(kn > 0, kn, 1.0), 0.0)
        self.inv_k = inv

    def apply(self, rho_hat: np.ndarray, u_hats: list):
        g = self.grid
        v_hat = sum(1j * self.kd[a] * u_hats[a] for a in range(g.dim)) * self.inv_k
        long_hats = [-1j * self.kd[a] * self.inv_k * v_hat for a in range(g.dim)]
        rho_new = self.m_rr * rho_hat + self.m_rv * v_hat
        v_new = self.m_vr * rho_hat + self.m_vv * v_hat
        u_new = []
        for a in range(g.dim):
            sol = u_hats[a] - long_hats[a]
            u_new.append(self.heat * sol + (-1j * self.kd[a] * self.inv_k) * v_new)
        return rho_new, u_new


class _NonlinearRhs:
    """Dealiased N1, N2 on spectral state, reusing lattice arrays across steps."""

    def __init__(self, grid: GridSpec, coeffs: Coefficients, dealias: bool,
                 vacuum_margin_frac: float):
        from .fields import _require_gamma_law  # validated once up front

        _require_gamma_law(coeffs)
        self.grid = grid
        self.coeffs = coeffs
        self.dealias = dealias
        self.margin = vacuum_margin_frac
        self.mask = grid.dealias_mask() if dealias else None
        self.kd = grid.derivative_wavenumbers()
        self.k2 = grid.k_squared()
        kn = grid.k_norm_deriv()
        self.k_max_retained = float(np.max(np.where(self.mask, kn, 0.0))) if dealias \
            else float(np.max(kn))

    def _trunc(self, f_hat):
        return f_hat * self.mask if self.dealias else f_hat

    def __call__(self, rho_hat: np.ndarray, u_hats: list):
        """Returns (n1_hat, n2_hats, max_speed)."""
        from .fields import density_ratio, pressure_nonlinearity

        g, co = self.grid, self.coeffs
        d = g.dim
        rho_hat = self._trunc(rho_hat)
        u_hats = [self._trunc(h) for h in u_hats]

        rho = g.inverse(rho_hat)
        floor = -co.rho_bar + self.margin * co.rho_bar
        rho_min = float(np.min(rho))
        if rho_min <= floor:
            raise VacuumError(
                f"min(rho_tilde)={rho_min:.6g} at or below vacuum guard {floor:.6g}"
            )
        u = [g.inverse(h) for h in u_hats]
        max_speed = max(float(np.max(np.abs(ua))) for ua in u)

        grad_rho = [g.inverse(1j * self.kd[a] * rho_hat) for a in range(d)]
        div_u_hat = sum(1j * self.kd[a] * u_hats[a] for a in range(d))
        div_u = g.inverse(div_u_hat)
        lap_u = [g.inverse(-self.k2 * u_hats[a]) for a in range(d)]
        grad_div = [g.inverse(1j * self.kd[a] * div_u_hat) for a in range(d)]

        f_rho = pressure_nonlinearity(rho, co)
        k_rho = density_ratio(rho, co)

        n1 = -rho * div_u
        for a in range(d):
            n1 = n1 - u[a] * grad_rho[a]
        n2 = []
        for a in range(d):
            adv = np.zeros_like(rho)
            for b in range(d):
                adv += u[b] * g.inverse(1j * self.kd[b] * u_hats[a])
            n2.append(
                -adv
                - f_rho * grad_rho[a]
                - co.alpha3 * k_rho * lap_u[a]
                - co.alpha4 * k_rho * grad_div[a]
            )

        n1_hat = self._trunc(g.forward(n1))
        n2_hats = [self._trunc(g.forward(f)) for f in n2]
        return n1_hat, n2_hats, max_speed


def step_linear(state: FieldState, dt: float, coeffs: Coefficients) -> FieldState:
    """One exact linear step (dt may be negative for reversibility checks)."""
    lin = _Linear(state.grid, coeffs, dt)
    rho_new, u_new = lin.apply(state.rho_hat(), state.u_hat())
    g = state.grid
    return FieldState(
        rho=g.inverse(rho_new), u=[g.inverse(h) for h in u_new], grid=g
    )


def step_nonlinear(state: FieldState, dt: float, coeffs: Coefficients,
                   dealias: bool = True, vacuum_margin_frac: float = 0.1,
                   cfl_limit: float = 0.5) -> FieldState:
    """One ETD-RK2 step on a FieldState (convenience wrapper over the run loop)."""
    g = state.grid
    lin = _Linear(g, coeffs, dt)
    rhs = _NonlinearRhs(g, coeffs, dealias, vacuum_margin_frac)
    rho_hat, u_hats = state.rho_hat(), state.u_hat()
    rho_new, u_new = _etd_rk2(rho_hat, u_hats, lin, rhs, dt, cfl_limit)
    return FieldState(rho=g.inverse(rho_new), u=[g.inverse(h) for h in u_new], grid=g)


def _etd_rk2(rho_hat, u_hats, lin: _Linear, rhs: _NonlinearRhs, dt: float,
             cfl_limit: float):
    n1, n2, max_speed = rhs(rho_hat, u_hats)
    if dt * max_speed * rhs.k_max_retained > cfl_limit:
        raise CflError(
            f"advective CFL violated: dt*max|u|*k_max = "
            f"{dt * max_speed * rhs.k_max_retained:.4g} > {cfl_limit}"
        )
    lr, lu = lin.apply(rho_hat, u_hats)
    ln1, ln2 = lin.apply(n1, n2)
    pr = lr + dt * ln1
    pu = [lu[a] + dt * ln2[a] for a in range(len(lu))]
    m1, m2, _ = rhs(pr, pu)
    rho_new = lr + 0.5 * dt * (ln1 + m1)
    u_new = [lu[a] + 0.5 * dt * (ln2[a] + m2[a]) for a in range(len(lu))]
    return rho_new, u_new


def _momentum(rho: np.ndarray, u: list, coeffs: Coefficients, grid: GridSpec) -> list:
    """Total momentum integral of (rho_tilde + rho_bar) u, per component."""
    cv = grid.cell_volume
    return [float(cv * np.sum((rho + coeffs.rho_bar) * ua)) for ua in u]


def run(initial: FieldState, config: SolverConfig, coeffs: Coefficients,
        manifest: Optional[dict] = None) -> RunRecord:
    """Advance to t_end sampling norms and snapshots at the configured cadence.

    Vacuum/CFL aborts do not raise: the partial record comes back with
    aborted=True and the reason recorded.
    """
    grid = initial.grid
    initial.check_finite()

    record = RunRecord(manifest=dict(manifest or {}))
    series_keys = ["rho_l2", "u_l2", "total_l2", "mass"]
    series_keys += [f"momentum_{a}" for a in range(grid.dim)]
    if config.track_lp is not None:
        series_keys += ["rho_lp", "u_lp"]
    if config.track_energy:
        series_keys += ["e_inf", "e_1"]
    record.series = {k: [] for k in series_keys}

    energy_bank = None
    if config.track_energy:
        from .lp_besov import build_filter_bank

        energy_bank = build_filter_bank(grid)

    n_steps = int(np.ceil(config.t_end / config.dt - 1e-12)) if config.t_end > 0 else 0
    lin = _Linear(grid, coeffs, config.dt)
    rhs = None
    if config.scheme is Scheme.ETD_RK2:
        rhs = _NonlinearRhs(grid, coeffs, config.dealias, config.vacuum_margin_frac)

    rho_hat = initial.rho_hat()
    u_hats = initial.u_hat()

    def to_state():
        return FieldState(
            rho=grid.inverse(rho_hat),
            u=[grid.inverse(h) for h in u_hats],
            grid=grid,
        )

    def sample(t):
        st = to_state()
        rho_n = spectral_l2(rho_hat, grid)
        u_n = float(np.sqrt(sum(spectral_l2(h, grid) ** 2 for h in u_hats)))
        record.t.append(t)
        record.series["rho_l2"].append(rho_n)
        record.series["u_l2"].append(u_n)
        record.series["total_l2"].append(float(np.hypot(rho_n, u_n)))
        mean_idx = (0,) * grid.dim
        record.series["mass"].append(
            float(rho_hat[mean_idx].real) / grid.n**grid.dim * grid.volume
        )
        mom = _momentum(st.rho, st.u, coeffs, grid)
        for a in range(grid.dim):
            record.series[f"momentum_{a}"].append(mom[a])
        if config.track_lp is not None:
            p = config.track_lp
            record.series["rho_lp"].append(grid_lp(st.rho, grid, p))
            umag = np.sqrt(sum(ua * ua for ua in st.u))
            record.series["u_lp"].append(grid_lp(umag, grid, p))
        if config.track_energy:
            from .lp_besov import energy_functionals

            e_inf, e_1 = energy_functionals(
                [st], p=config.energy_p, j0=config.energy_j0, bank=energy_bank
            )
            record.series["e_inf"].append(e_inf[0])
            record.series["e_1"].append(e_1[0])
        return rho_n

    t = 0.0
    rho_n = sample(0.0)
    if config.snapshot_every > 0:
        record.snapshots.append((0.0, to_state()))
    if config.stop_rho_l2 is not None and rho_n >= config.stop_rho_l2:
        record.stopped_early = True
        record.stop_time = 0.0
        return record

    for step in range(1, n_steps + 1):
        dt = min(config.dt, config.t_end - t)
        if dt <= 0:
            break
        if dt != lin.dt:
            lin = _Linear(grid, coeffs, dt)
        try:
            if config.scheme is Scheme.LINEAR_EXACT:
                rho_hat, u_hats = lin.apply(rho_hat, u_hats)
            else:
                rho_hat, u_hats = _etd_rk2(
                    rho_hat, u_hats, lin, rhs, dt, config.cfl_limit
                )
        except (VacuumError, CflError) as err:
            record.aborted = True
            record.abort_reason = f"{type(err).__name__}: {err}"
            break
        t += dt
        is_sample = (step % config.norm_every == 0) or step == n_steps
        if is_sample:
            rho_n = sample(t)
        if config.snapshot_every > 0 and (
            step % config.snapshot_every == 0 or step == n_steps
        ):
            record.snapshots.append((t, to_state()))
        if (
            config.stop_rho_l2 is not None
            and is_sample
            and rho_n >= config.stop_rho_l2
        ):
            record.stopped_early = True
            record.stop_time = t
            break
    return record
