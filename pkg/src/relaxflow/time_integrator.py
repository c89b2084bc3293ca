"""Exponential-midpoint time stepping for both systems.

The stiff constant-coefficient part (relaxation at rate 1/eps^2, drag,
diffusion) is applied exactly per Fourier mode through the 2x2 block
propagators; nonlinear terms are treated explicitly at second order.  One
step of the scheme for u' = A u + N(u) reads

    U_mid = e^{A dt/2} u_n + (dt/2) phi1(A dt/2) N(u_n)
    u_new = e^{A dt} u_n + dt [(phi1 - 2 phi2)(A dt) N(u_n)
                               + 2 phi2(A dt) N(U_mid)]

which is exact when N = 0 and second order (with stiffness-uniform error
constants) otherwise.  Because the linear flow is exact, no step-size
restriction comes from eps; the only limit is the advective CFL condition,
enforced with step halving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linear_spectrum as spectrum
from .models import (
    DensityFloorError,
    EnsState,
    EnsTendency,
    KsnsState,
    KsnsTendency,
    nonlinear_ens,
    nonlinear_ksns,
)
from .spectral_grid import Grid, SpectralField, project_leray

MAX_CFL_HALVINGS = 20


class CflError(RuntimeError):
    """Raised when the advective CFL condition cannot be met by halving."""


@dataclass(frozen=True)
class StepperConfig:
    """Time-stepping parameters.

    ``dt`` is an upper bound on the step; the integrator shrinks it so an
    integer number of steps fits between snapshots.  ``output_stride`` is
    the number of snapshots per unit time.  ``linear_limit`` replaces the
    block propagators by their vanishing-eps limits (heat flow for the
    density, viscous heat flow for u, velocity slaved to the limit drift
    relation); it is a control-experiment mode and requires the nonlinear
    terms to be disabled.
    """

    dt: float
    t_end: float
    output_stride: float = 10.0
    cfl_safety: float = 0.9
    dealias_fraction: float = 2.0 / 3.0
    include_nonlinear: bool = True
    linear_limit: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.output_stride <= 0:
            raise ValueError("output_stride must be positive")
        if not 0.0 < self.cfl_safety < 1.0:
            raise ValueError("cfl_safety must lie in (0, 1)")
        if abs(self.dealias_fraction - 2.0 / 3.0) > 1e-12:
            raise ValueError("the dealias fraction is fixed at 2/3")
        if self.t_end > 0:
            n_out = self.t_end * self.output_stride
            if abs(n_out - round(n_out)) > 1e-9 * max(n_out, 1.0):
                raise ValueError("t_end must be a whole number of output intervals")
        if self.linear_limit and self.include_nonlinear:
            raise ValueError("linear_limit mode requires include_nonlinear=False")


@dataclass
class Trajectory:
    """Snapshots of one run; ``failure`` is set if the run aborted early."""

    times: np.ndarray
    states: list
    diagnostics: list = field(default_factory=list)
    failure: str | None = None

    def __post_init__(self):
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")


def _pair_apply(table, p, q):
    """Apply a 2x2 mode table to a pair of coefficient arrays."""
    t00, t01, t10, t11 = table
    return t00 * p + t01 * q, t10 * p + t11 * q


def _block_tables(gen_entries, dt: float):
    """Exponential and phi tables for one 2x2 block family at step dt."""
    a00, a01, a10, a11 = gen_entries

    def f(name, tau):
        return spectrum.mat2_func(name, tau * a00, tau * a01, tau * a10, tau * a11)

    e_full = f("exp", dt)
    e_half = f("exp", dt / 2.0)
    phi1_half = tuple(0.5 * dt * g for g in f("phi1", dt / 2.0))
    p1 = f("phi1", dt)
    p2 = f("phi2", dt)
    w1 = tuple(dt * (g1 - 2.0 * g2) for g1, g2 in zip(p1, p2))
    w2 = tuple(2.0 * dt * g2 for g2 in p2)
    return {"E": e_full, "E_half": e_half, "PHI1_HALF": phi1_half, "W1": w1, "W2": w2}


def _scalar_tables(z: np.ndarray, dt: float):
    """Same tables for a diagonal (scalar-symbol) flow; z = dt * symbol."""
    p1 = spectrum.phi1(z)
    p2 = spectrum.phi2(z)
    return {
        "E": np.exp(z),
        "E_half": np.exp(z / 2.0),
        "PHI1_HALF": 0.5 * dt * spectrum.phi1(z / 2.0),
        "W1": dt * (p1 - 2.0 * p2),
        "W2": 2.0 * dt * p2,
    }


def _max_speed(*phys_fields) -> float:
    return max(float(np.max(np.abs(f))) for f in phys_fields)


class EnsStepper:
    """Advances an EnsState; caches mode tables per step size."""

    def __init__(self, grid: Grid, epsilon: float, mu: float, cfg: StepperConfig):
        self.grid = grid
        self.epsilon = epsilon
        self.mu = mu
        self.cfg = cfg
        self._tables = {}
        self._b1_gen = spectrum.b1_generator(grid.xi_norm, epsilon)
        self._b2_gen = spectrum.b2_generator(grid.xi_norm, epsilon, mu)

    def tables(self, dt: float):
        if dt not in self._tables:
            if self.cfg.linear_limit:
                self._tables[dt] = {
                    "heat_a": np.exp(-dt * self.grid.xi_sq),
                    "heat_u": np.exp(-dt * self.mu * self.grid.xi_sq),
                }
            else:
                self._tables[dt] = {
                    "b1": _block_tables(self._b1_gen, dt),
                    "b2": _block_tables(self._b2_gen, dt),
                }
        return self._tables[dt]

    def max_stable_dt(self, state: EnsState) -> float:
        """Advective CFL bound: transport speeds are |w|/eps and |u|."""
        speed = max(
            _max_speed(state.w.to_physical()) / self.epsilon,
            _max_speed(state.u.to_physical()),
        )
        if speed == 0.0:
            return np.inf
        return self.cfg.cfl_safety * self.grid.dx / speed

    def _split_pairs(self, a: SpectralField, w: SpectralField, u: SpectralField):
        xi_hat = self.grid.unit_xi
        m = np.sum(xi_hat * w.data, axis=0)
        w_perp = w.data - xi_hat * m
        return a.data[0], m, w_perp, u.data

    def _nonlinear(self, state: EnsState) -> EnsTendency:
        if not self.cfg.include_nonlinear:
            zero_s = SpectralField.zero(self.grid, 1)
            zero_v = SpectralField.zero(self.grid, self.grid.dim)
            return EnsTendency(a=zero_s, w=zero_v, u=zero_v)
        return nonlinear_ens(state)

    def step(self, state: EnsState, dt: float) -> EnsState:
        if self.cfg.linear_limit:
            return self._step_linear_limit(state, dt)
        tab = self.tables(dt)
        b1, b2 = tab["b1"], tab["b2"]
        a0, m0, wp0, u0 = self._split_pairs(state.a, state.w, state.u)

        n1 = self._nonlinear(state)
        na1, nm1, nwp1, nu1 = self._split_pairs(n1.a, n1.w, n1.u)

        a_mid, m_mid = _pair_apply(b1["E_half"], a0, m0)
        da, dm = _pair_apply(b1["PHI1_HALF"], na1, nm1)
        a_mid, m_mid = a_mid + da, m_mid + dm
        wp_mid, u_mid = _pair_apply(b2["E_half"], wp0, u0)
        dwp, du = _pair_apply(b2["PHI1_HALF"], nwp1, nu1)
        wp_mid, u_mid = wp_mid + dwp, u_mid + du

        mid = self._assemble(a_mid, m_mid, wp_mid, u_mid)
        n2 = self._nonlinear(mid)
        na2, nm2, nwp2, nu2 = self._split_pairs(n2.a, n2.w, n2.u)

        a1, m1 = _pair_apply(b1["E"], a0, m0)
        ka, km = _pair_apply(b1["W1"], na1, nm1)
        la, lm = _pair_apply(b1["W2"], na2, nm2)
        wp1, u1 = _pair_apply(b2["E"], wp0, u0)
        kwp, ku = _pair_apply(b2["W1"], nwp1, nu1)
        lwp, lu = _pair_apply(b2["W2"], nwp2, nu2)

        return self._assemble(a1 + ka + la, m1 + km + lm, wp1 + kwp + lwp,
                              u1 + ku + lu, restore=True)

    def _step_linear_limit(self, state: EnsState, dt: float) -> EnsState:
        tab = self.tables(dt)
        a_new = state.a.with_data(tab["heat_a"] * state.a.data)
        u_new = project_leray(state.u.with_data(tab["heat_u"] * state.u.data))
        # Velocity slaved to the limit drift relation, linearized about rho = 1.
        w_data = self.epsilon * (u_new.data - 1j * self.grid.xi * a_new.data[0])
        w_new = state.w.with_data(w_data)
        return EnsState(a=a_new, w=w_new, u=u_new, epsilon=self.epsilon, mu=self.mu)

    def _assemble(self, a, m, w_perp, u, restore: bool = False) -> EnsState:
        xi_hat = self.grid.unit_xi
        w = w_perp + xi_hat * m
        fa = SpectralField(self.grid, a[np.newaxis])
        fw = SpectralField(self.grid, w)
        fu = SpectralField(self.grid, np.array(u))
        if restore:
            fa = fa.dealiased().hermitian_symmetrized()
            fw = fw.dealiased().hermitian_symmetrized()
            fu = project_leray(fu.dealiased().hermitian_symmetrized())
        return EnsState(a=fa, w=fw, u=fu, epsilon=self.epsilon, mu=self.mu)


class KsnsStepper:
    """Advances a KsnsState with exact heat propagators per mode."""

    def __init__(self, grid: Grid, mu: float, cfg: StepperConfig):
        self.grid = grid
        self.mu = mu
        self.cfg = cfg
        self._tables = {}

    def tables(self, dt: float):
        if dt not in self._tables:
            self._tables[dt] = {
                "a": _scalar_tables(-dt * self.grid.xi_sq, dt),
                "u": _scalar_tables(-dt * self.mu * self.grid.xi_sq, dt),
            }
        return self._tables[dt]

    def max_stable_dt(self, state: KsnsState) -> float:
        speed = _max_speed(state.u.to_physical())
        if speed == 0.0:
            return np.inf
        return self.cfg.cfl_safety * self.grid.dx / speed

    def _nonlinear(self, state: KsnsState) -> KsnsTendency:
        if not self.cfg.include_nonlinear:
            return KsnsTendency(
                a=SpectralField.zero(self.grid, 1),
                u=SpectralField.zero(self.grid, self.grid.dim),
            )
        return nonlinear_ksns(state)

    def step(self, state: KsnsState, dt: float) -> KsnsState:
        tab = self.tables(dt)
        ta, tu = tab["a"], tab["u"]
        n1 = self._nonlinear(state)
        a_mid = ta["E_half"] * state.a.data + ta["PHI1_HALF"] * n1.a.data
        u_mid = tu["E_half"] * state.u.data + tu["PHI1_HALF"] * n1.u.data
        mid = KsnsState(
            a=state.a.with_data(a_mid), u=state.u.with_data(u_mid), mu=self.mu
        )
        n2 = self._nonlinear(mid)
        a_new = ta["E"] * state.a.data + ta["W1"] * n1.a.data + ta["W2"] * n2.a.data
        u_new = tu["E"] * state.u.data + tu["W1"] * n1.u.data + tu["W2"] * n2.u.data
        fa = state.a.with_data(a_new).dealiased().hermitian_symmetrized()
        fu = project_leray(state.u.with_data(u_new).dealiased().hermitian_symmetrized())
        return KsnsState(a=fa, u=fu, mu=self.mu)


def _make_stepper(state, cfg: StepperConfig):
    if isinstance(state, EnsState):
        return EnsStepper(state.a.grid, state.epsilon, state.mu, cfg)
    if isinstance(state, KsnsState):
        return KsnsStepper(state.a.grid, state.mu, cfg)
    raise TypeError(f"no stepper for state type {type(state).__name__}")


def step_ens(state: EnsState, cfg: StepperConfig) -> EnsState:
    """Single configured step of the relaxation system."""
    stepper = EnsStepper(state.a.grid, state.epsilon, state.mu, cfg)
    return _checked_step(stepper, state, cfg.dt)[0]


def step_ksns(state: KsnsState, cfg: StepperConfig) -> KsnsState:
    """Single configured step of the limit system."""
    stepper = KsnsStepper(state.a.grid, state.mu, cfg)
    return _checked_step(stepper, state, cfg.dt)[0]


def _checked_step(stepper, state, dt: float):
    """Step with CFL enforcement: halve (rebuilding tables) up to a limit."""
    for _ in range(MAX_CFL_HALVINGS + 1):
        if dt <= stepper.max_stable_dt(state):
            return stepper.step(state, dt), dt
        dt *= 0.5
    raise CflError(f"CFL condition unmet after {MAX_CFL_HALVINGS} halvings")


def integrate(initial, cfg: StepperConfig, diagnostics_hooks=None) -> Trajectory:
    """Run to t_end, emitting snapshots at the configured output stride.

    The base step is shrunk so a whole number of steps fits in each output
    interval; snapshot times are therefore exact multiples of the interval.
    Diagnostics hooks are callables (t, state) -> dict evaluated at every
    snapshot.  On a density-floor or CFL abort a partial trajectory is
    returned with the failure recorded.
    """
    hooks = diagnostics_hooks or []
    stepper = _make_stepper(initial, cfg)

    def snap_diag(t, state):
        merged = {}
        for hook in hooks:
            merged.update(hook(t, state))
        return merged

    times = [0.0]
    states = [initial]
    diags = [snap_diag(0.0, initial)]
    if cfg.t_end == 0:
        return Trajectory(np.array(times), states, diags)

    t_out = 1.0 / cfg.output_stride
    n_intervals = round(cfg.t_end * cfg.output_stride)
    steps_per_out = max(1, int(np.ceil(t_out / cfg.dt - 1e-12)))
    dt = t_out / steps_per_out

    state = initial
    failure = None
    try:
        for interval in range(1, n_intervals + 1):
            k = 0
            while k < steps_per_out:
                state, dt_used = _checked_step(stepper, state, dt)
                if dt_used < dt:
                    # Persist the halving; double the remaining step count.
                    remaining = steps_per_out - k - 1
                    steps_per_out = k + 1 + remaining * int(round(dt / dt_used))
                    dt = dt_used
                k += 1
            t = interval * t_out
            times.append(t)
            states.append(state)
            diags.append(snap_diag(t, state))
    except (DensityFloorError, CflError) as exc:
        failure = f"{type(exc).__name__}: {exc}"

    return Trajectory(np.array(times), states, diags, failure=failure)
