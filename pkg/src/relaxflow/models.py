"""State bundles and right-hand sides for the relaxation system and its limit.

The relaxation system evolves (a, w, u) with a = rho - 1:

    a_t + (1/eps) w.grad a + (1/eps)(1+a) div w            = 0
    w_t + (1/eps)(1+h(a)) grad a + (1/eps^2)(w - eps u)
        + (1/eps) w.grad w                                  = 0
    u_t = P[ mu Lap u - u.grad u + (1/eps)(1+a)(w - eps u) ]

with h(a) = -a/(1+a) and P the divergence-free projection (the pressure
gradient never appears as state).  The diffusive limit evolves (a, u):

    a_t = Lap a - u.grad a
    u_t = P[ mu Lap u - u.grad u ]

All products are evaluated pseudo-spectrally and dealiased by the 2/3 rule.
The density floor 1 + a >= 1/2 is enforced with a hard abort: leaving it
means leaving the small-perturbation regime the solver is validated for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .littlewood_paley import BesovSpec, DyadicDecomposition, ThresholdConfig
from .spectral_grid import (
    SpectralField,
    apply_pointwise,
    divergence,
    gradient,
    laplacian,
    project_compressible,
    project_leray,
    transform_forward,
)

DENSITY_FLOOR = 0.5


class DensityFloorError(RuntimeError):
    """Raised when 1 + a drops below the floor anywhere on the grid."""


@dataclass(frozen=True)
class EnsState:
    """Relaxation-system state: density fluctuation a, velocities w and u."""

    a: SpectralField
    w: SpectralField
    u: SpectralField
    epsilon: float
    mu: float

    def __post_init__(self):
        if not (self.a.is_scalar and self.w.is_vector and self.u.is_vector):
            raise ValueError("EnsState needs scalar a and vector w, u")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.mu <= 0:
            raise ValueError("mu must be positive")

    def validate(self, div_tol: float = 1e-10):
        """Check the divergence constraint and the density floor."""
        scale = max(self.u.l2_norm(), 1.0)
        div_u = divergence(self.u).l2_norm()
        if div_u > div_tol * scale:
            raise ValueError(f"div u = {div_u:.3e} exceeds tolerance")
        _density_samples(self.a)


@dataclass(frozen=True)
class KsnsState:
    """Limit-system state: density fluctuation a and velocity u."""

    a: SpectralField
    u: SpectralField
    mu: float

    def __post_init__(self):
        if not (self.a.is_scalar and self.u.is_vector):
            raise ValueError("KsnsState needs scalar a and vector u")
        if self.mu <= 0:
            raise ValueError("mu must be positive")

    def validate(self, div_tol: float = 1e-10):
        scale = max(self.u.l2_norm(), 1.0)
        div_u = divergence(self.u).l2_norm()
        if div_u > div_tol * scale:
            raise ValueError(f"div u = {div_u:.3e} exceeds tolerance")
        _density_samples(self.a)


@dataclass(frozen=True)
class EnsTendency:
    a: SpectralField
    w: SpectralField
    u: SpectralField


@dataclass(frozen=True)
class KsnsTendency:
    a: SpectralField
    u: SpectralField


def _density_samples(a: SpectralField) -> np.ndarray:
    """Physical samples of a, aborting if the density floor is breached."""
    a_phys = a.to_physical()
    lowest = float(np.min(1.0 + a_phys))
    if lowest < DENSITY_FLOOR:
        raise DensityFloorError(
            f"density floor breached: min(1 + a) = {lowest:.4f} < {DENSITY_FLOOR}"
        )
    return a_phys


def closure_h(a: SpectralField) -> SpectralField:
    """Pressure-closure coefficient h(a) = -a/(1+a), evaluated pointwise."""
    a_phys = _density_samples(a)
    return transform_forward(a.grid, -a_phys / (1.0 + a_phys)).dealiased()


def _advection(v_phys: np.ndarray, f: SpectralField) -> np.ndarray:
    """Physical samples of v . grad f, one row per component of f."""
    out = []
    for c in range(f.ncomp):
        grad_c = gradient(f.component(c)).to_physical()
        out.append(np.sum(v_phys * grad_c, axis=0))
    return np.stack(out)


def nonlinear_ens(state: EnsState) -> EnsTendency:
    """Nonlinear remainder of the relaxation system.

    This is the full tendency minus the constant-coefficient linear part
    (the part the exponential integrator treats exactly):

        Na = -(1/eps) (w.grad a + a div w)
        Nw = -(1/eps) (h(a) grad a + w.grad w)
        Nu = P[ -u.grad u + (1/eps) a (w - eps u) ]
    """
    eps = state.epsilon
    grid = state.a.grid
    a_phys = _density_samples(state.a)
    w_phys = state.w.to_physical()
    u_phys = state.u.to_physical()
    grad_a = gradient(state.a).to_physical()
    div_w = divergence(state.w).to_physical()
    h_phys = -a_phys / (1.0 + a_phys)

    na = -(np.sum(w_phys * grad_a, axis=0) + a_phys * div_w) / eps
    nw = -(h_phys * grad_a + _advection(w_phys, state.w)) / eps
    relative = w_phys - eps * u_phys
    nu = (a_phys * relative) / eps - _advection(u_phys, state.u)

    return EnsTendency(
        a=transform_forward(grid, na).dealiased(),
        w=transform_forward(grid, nw).dealiased(),
        u=project_leray(transform_forward(grid, nu).dealiased()),
    )


def rhs_ens(state: EnsState) -> EnsTendency:
    """Full tendency of the relaxation system (linear + nonlinear parts)."""
    eps = state.epsilon
    n = nonlinear_ens(state)
    da = n.a - (1.0 / eps) * divergence(state.w)
    dw = (
        n.w
        - (1.0 / eps) * gradient(state.a)
        - (1.0 / eps**2) * (state.w - eps * state.u)
    )
    du = n.u + project_leray(
        state.mu * laplacian(state.u) + (1.0 / eps) * (state.w - eps * state.u)
    )
    return EnsTendency(a=da, w=dw, u=du)


def nonlinear_ksns(state: KsnsState) -> KsnsTendency:
    """Nonlinear remainder of the limit system: (-u.grad a, -P(u.grad u))."""
    grid = state.a.grid
    u_phys = state.u.to_physical()
    grad_a = gradient(state.a).to_physical()
    na = -np.sum(u_phys * grad_a, axis=0)
    nu = -_advection(u_phys, state.u)
    return KsnsTendency(
        a=transform_forward(grid, na).dealiased(),
        u=project_leray(transform_forward(grid, nu).dealiased()),
    )


def rhs_ksns(state: KsnsState) -> KsnsTendency:
    """Full tendency of the limit system."""
    n = nonlinear_ksns(state)
    return KsnsTendency(
        a=n.a + laplacian(state.a),
        u=n.u + project_leray(state.mu * laplacian(state.u)),
    )


def pressure_weighted_density_gradient(state_a: SpectralField) -> SpectralField:
    """(1 + h(a)) grad a = grad a / (1 + a), evaluated pointwise."""
    a_phys = _density_samples(state_a)
    grad_a = gradient(state_a).to_physical()
    grid = state_a.grid
    return transform_forward(grid, grad_a / (1.0 + a_phys)).dealiased()


def damped_modes(state: EnsState) -> tuple[SpectralField, SpectralField]:
    """Auxiliary damped modes:

        Z = P^T w + eps (1+h(a)) grad a,     R = P w - eps u.

    They reconstruct the velocity as
    w = Z + R - eps (1+h(a)) grad a + eps u.
    """
    eps = state.epsilon
    psi = pressure_weighted_density_gradient(state.a)
    z = project_compressible(state.w) + eps * psi
    r = project_leray(state.w) - eps * state.u
    return z, r


def source_Y(state: EnsState) -> SpectralField:
    """Density-equation source: Y = -div((1+a)(Z + R)).

    The composite (1+a)(Z+R) is assembled in a single physical-space pass
    (Z + R = w + eps grad(a)/(1+a) - eps u pointwise), truncating once at
    the end; an intermediate truncation of the damped modes would break
    the pointwise cancellation (1+a) * (1+h(a)) = 1 that the equivalent
    transport form of Y relies on.
    """
    eps = state.epsilon
    grid = state.a.grid
    a_phys = _density_samples(state.a)
    grad_a = gradient(state.a).to_physical()
    zr_phys = (
        state.w.to_physical()
        + eps * grad_a / (1.0 + a_phys)
        - eps * state.u.to_physical()
    )
    flux = transform_forward(grid, (1.0 + a_phys) * zr_phys).dealiased()
    return divergence(flux) * (-1.0)


def source_Y_transport_form(state: EnsState) -> SpectralField:
    """Equivalent transport form of the source:

        Y = -w.grad a - (1+a) div w - eps Lap a + eps u.grad a.

    Agreement with :func:`source_Y` is a package invariant (the two paths
    share no intermediate quantities).
    """
    eps = state.epsilon
    grid = state.a.grid
    a_phys = _density_samples(state.a)
    w_phys = state.w.to_physical()
    u_phys = state.u.to_physical()
    grad_a = gradient(state.a).to_physical()
    div_w = divergence(state.w).to_physical()
    transport = (
        -np.sum(w_phys * grad_a, axis=0)
        - (1.0 + a_phys) * div_w
        + eps * np.sum(u_phys * grad_a, axis=0)
    )
    return transform_forward(grid, transport).dealiased() - eps * laplacian(state.a)


def darcy_velocity(state: KsnsState) -> SpectralField:
    """Limit drift velocity W = u - grad(rho)/rho with rho = 1 + a."""
    a_phys = _density_samples(state.a)
    grad_a = gradient(state.a).to_physical()
    grid = state.a.grid
    correction = transform_forward(grid, grad_a / (1.0 + a_phys)).dealiased()
    return state.u - correction


def prepared_velocity(a: SpectralField, u: SpectralField, epsilon: float) -> SpectralField:
    """Velocity satisfying the limit drift relation exactly at t = 0:

        w = eps (u - grad(rho)/rho),  i.e.  rho w / eps = rho u - grad rho.
    """
    a_phys = _density_samples(a)
    grad_a = gradient(a).to_physical()
    u_phys = u.to_physical()
    w_phys = epsilon * (u_phys - grad_a / (1.0 + a_phys))
    return transform_forward(a.grid, w_phys).dealiased()


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsSample:
    """One snapshot of the runtime diagnostics.

    ``E_eps`` is the running energy functional (sum of per-term running
    suprema).  ``D_eps_increment`` holds the instantaneous integrands of the
    dissipation functional, keyed by

        density      ||a||_{B^{d/2+1}}          (L1-in-time entry)
        density_low  ||a||^{low}_{B^{d/2+2}}    (L1)
        u            ||u||_{B^{d/2+1}}          (L1)
        w_L2         ||w||_{B^{d/2}}            (L2, weight 1/eps)
        w_L1         ||w||_{B^{d/2+1}}          (L1, weight 1/eps)
        Z            ||Z||_{B^{d/2}}            (L1, weight 1/eps^2)
        R            ||R||_{B^{d/2-1} cap B^{d/2}}  (L1, weight 1/eps^2)
    """

    time: float
    E_eps: float
    D_eps_increment: dict = field(default_factory=dict)
    Z_norms: dict = field(default_factory=dict)
    R_norms: dict = field(default_factory=dict)
    darcy_residual_norm: float = 0.0


class RunningEnergy:
    """Tracks the per-term running suprema that make up the energy functional."""

    def __init__(self, decomp: DyadicDecomposition, threshold: ThresholdConfig):
        self.decomp = decomp
        self.threshold = threshold
        self.sups = np.zeros(5)

    def update(self, state: EnsState) -> float:
        d2 = state.a.grid.dim / 2.0
        dc, th = self.decomp, self.threshold
        eps = state.epsilon
        pw = project_leray(state.w)
        terms = np.array([
            dc.besov_norm(state.a, BesovSpec(d2 - 1)) + dc.besov_norm(state.a, BesovSpec(d2)),
            dc.besov_norm(state.u, BesovSpec(d2 - 1)),
            dc.besov_norm(pw, BesovSpec(d2 - 1, band="low"), th),
            dc.besov_norm(state.w, BesovSpec(d2, band="low"), th),
            eps * dc.besov_norm(state.w, BesovSpec(d2 + 1, band="high"), th),
        ])
        self.sups = np.maximum(self.sups, terms)
        return float(np.sum(self.sups))


def dissipation_increments(
    state: EnsState, decomp: DyadicDecomposition, threshold: ThresholdConfig
) -> tuple[dict, dict, dict]:
    """Instantaneous dissipation integrands plus the damped-mode norms."""
    d2 = state.a.grid.dim / 2.0
    dc, th = decomp, threshold
    z, r = damped_modes(state)
    z_norms = {"mid": dc.besov_norm(z, BesovSpec(d2))}
    r_norms = {
        "low": dc.besov_norm(r, BesovSpec(d2 - 1)),
        "mid": dc.besov_norm(r, BesovSpec(d2)),
    }
    increments = {
        "density": dc.besov_norm(state.a, BesovSpec(d2 + 1)),
        "density_low": dc.besov_norm(state.a, BesovSpec(d2 + 2, band="low"), th),
        "u": dc.besov_norm(state.u, BesovSpec(d2 + 1)),
        "w_L2": dc.besov_norm(state.w, BesovSpec(d2)),
        "w_L1": dc.besov_norm(state.w, BesovSpec(d2 + 1)),
        "Z": z_norms["mid"],
        "R": r_norms["low"] + r_norms["mid"],
    }
    return increments, z_norms, r_norms


def delta_density_rate(ens: EnsState, ksns: KsnsState) -> SpectralField:
    """Time derivative of the density error, evaluated from the two RHS.

    This is the rate route for d(a_eps - a_star)/dt; the alternative is
    finite differencing of stored snapshots, which runs at the snapshot
    stride (experiment records state which route produced their numbers).
    """
    return rhs_ens(ens).a - rhs_ksns(ksns).a


def darcy_residual_norm(
    ens: EnsState, ksns: KsnsState, decomp: DyadicDecomposition
) -> float:
    """|| w/eps - W* || in the sum space B^{d/2}_{2,1} + B^{d/2+1}_{2,1}."""
    d2 = ens.a.grid.dim / 2.0
    residual = (1.0 / ens.epsilon) * ens.w - darcy_velocity(ksns)
    return decomp.sum_space_norm(residual, d2, d2 + 1)


def diagnostics(
    times,
    ens_series,
    ksns_series,
    decomp: DyadicDecomposition,
    threshold: ThresholdConfig,
) -> list[DiagnosticsSample]:
    """Evaluate the runtime diagnostics along paired state series."""
    energy = RunningEnergy(decomp, threshold)
    samples = []
    for i, t in enumerate(times):
        ens = ens_series[i]
        incr, z_norms, r_norms = dissipation_increments(ens, decomp, threshold)
        darcy = (
            darcy_residual_norm(ens, ksns_series[i], decomp)
            if ksns_series is not None
            else 0.0
        )
        samples.append(
            DiagnosticsSample(
                time=float(t),
                E_eps=energy.update(ens),
                D_eps_increment=incr,
                Z_norms=z_norms,
                R_norms=r_norms,
                darcy_residual_norm=darcy,
            )
        )
    return samples


def initial_energy(ksns0: KsnsState, decomp: DyadicDecomposition) -> float:
    """Size of the limit-system data: ||a||_{B^{d/2-1} cap B^{d/2}} + ||u||_{B^{d/2-1}}."""
    d2 = ksns0.a.grid.dim / 2.0
    return (
        decomp.besov_norm(ksns0.a, BesovSpec(d2 - 1))
        + decomp.besov_norm(ksns0.a, BesovSpec(d2))
        + decomp.besov_norm(ksns0.u, BesovSpec(d2 - 1))
    )


def initial_error_energy(
    ens0: EnsState,
    ksns0: KsnsState,
    decomp: DyadicDecomposition,
    threshold: ThresholdConfig,
) -> tuple[float, dict]:
    """Initial error functional and its term-by-term breakdown.

    Terms: (1/eps)||a0 - a0*||^{low}_{B^{d/2-1}}, (1/eps)||u0 - u0*||_{B^{d/2-1}},
    ||P w0||^{low}_{B^{d/2-1}}, ||w0||^{low}_{B^{d/2}},
    eps (||a0||^{high}_{B^{d/2+1}} + ||w0||^{high}_{B^{d/2+1}}).
    """
    d2 = ens0.a.grid.dim / 2.0
    dc, th = decomp, threshold
    eps = ens0.epsilon
    terms = {
        "density_error": (1.0 / eps)
        * dc.besov_norm(ens0.a - ksns0.a, BesovSpec(d2 - 1, band="low"), th),
        "velocity_error": (1.0 / eps)
        * dc.besov_norm(ens0.u - ksns0.u, BesovSpec(d2 - 1)),
        "incompressible_w": dc.besov_norm(
            project_leray(ens0.w), BesovSpec(d2 - 1, band="low"), th
        ),
        "w_low": dc.besov_norm(ens0.w, BesovSpec(d2, band="low"), th),
        "high_band": eps
        * (
            dc.besov_norm(ens0.a, BesovSpec(d2 + 1, band="high"), th)
            + dc.besov_norm(ens0.w, BesovSpec(d2 + 1, band="high"), th)
        ),
    }
    return float(sum(terms.values())), terms
