"""Built-in invariant battery behind ``relaxflow selftest``.

Each check exercises one contract of the package on a small grid and
reports the measured defect against its threshold.  Two negative controls
deliberately corrupt inputs (a scaled block profile, a perturbed
eigenvalue) and pass only if the corresponding check detects the damage.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import linear_spectrum as spectrum
from .harness import random_band_limited
from .littlewood_paley import BesovSpec, DyadicDecomposition, ThresholdConfig
from .models import (
    EnsState,
    KsnsState,
    damped_modes,
    delta_density_rate,
    pressure_weighted_density_gradient,
    rhs_ens,
    source_Y,
    source_Y_transport_form,
)
from .spectral_grid import (
    Grid,
    SpectralField,
    apply_pointwise,
    divergence,
    gradient,
    laplacian,
    project_compressible,
    project_leray,
    transform_forward,
)
from .time_integrator import KsnsStepper, StepperConfig


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""


def _small_setup(seed: int, n: int = 32):
    grid = Grid(n_per_dim=n)
    rng = np.random.default_rng(seed)
    a = 0.05 * random_band_limited(grid, rng, -1.5, n // 4)
    w = 0.05 * random_band_limited(grid, rng, -1.5, n // 4, grid.dim)
    u = 0.05 * random_band_limited(grid, rng, -1.5, n // 4, grid.dim, True)
    return grid, rng, a, w, u


def check_projector_algebra(seed: int) -> CheckResult:
    grid, rng, _, w, _ = _small_setup(seed)
    p = project_leray(w)
    pt = project_compressible(w)
    scale = max(float(np.max(np.abs(w.data))), 1e-300)
    worst = max(
        float(np.max(np.abs((p + pt - w).data))),      # P + P^T = Id
        float(np.max(np.abs((project_leray(p) - p).data))),  # P^2 = P
        float(np.max(np.abs(project_leray(pt).data))),  # P P^T = 0
    ) / scale
    return CheckResult("projector_algebra", worst <= 1e-14, float(worst), 1e-14)


def check_parseval(seed: int) -> CheckResult:
    grid, rng, a, _, _ = _small_setup(seed)
    phys = a.to_physical()
    phys_norm = np.sqrt(np.sum(phys**2) * grid.dx**grid.dim)
    err = abs(phys_norm - a.l2_norm()) / max(phys_norm, 1e-300)
    return CheckResult("parseval", err <= 1e-12, float(err), 1e-12)


def check_transform_roundtrip(seed: int) -> CheckResult:
    grid = Grid(n_per_dim=8)
    rng = np.random.default_rng(seed)
    values = rng.standard_normal(grid.shape)
    back = transform_forward(grid, values).to_physical()
    err = np.max(np.abs(back - values)) / np.max(np.abs(values))
    return CheckResult("transform_roundtrip", err <= 1e-12, float(err), 1e-12)


def check_partition_of_unity(seed: int, decomp: DyadicDecomposition | None = None) -> CheckResult:
    if decomp is None:
        decomp = DyadicDecomposition(Grid(n_per_dim=32))
    res = decomp.partition_residual()
    return CheckResult("partition_of_unity", res <= 1e-12, float(res), 1e-12)


def check_bernstein(seed: int) -> CheckResult:
    grid, rng, a, _, _ = _small_setup(seed)
    decomp = DyadicDecomposition(grid)
    worst = 0.0
    for j in decomp.block_range:
        blk = decomp.block(a, j)
        base = blk.l2_norm()
        if base < 1e-13:
            continue
        ratio = gradient(blk).l2_norm() / base / 2.0**j
        defect = max(0.75 - ratio, ratio - 8.0 / 3.0, 0.0)
        worst = max(worst, defect)
    return CheckResult("bernstein_ring", worst <= 1e-12, float(worst), 1e-12,
                       "gradient/block norm ratio inside [3/4, 8/3] * 2^j")


def check_block_reconstruction(seed: int) -> CheckResult:
    grid, rng, a, _, _ = _small_setup(seed)
    decomp = DyadicDecomposition(grid)
    total = SpectralField.zero(grid)
    for j in decomp.block_range:
        total = total + decomp.block(a, j)
    mean_removed = a.data.copy()
    mean_removed[:, 0, 0] = 0.0
    err = np.max(np.abs(total.data - mean_removed))
    scale = np.max(np.abs(a.data))
    rel = err / max(scale, 1e-300)
    return CheckResult("block_reconstruction", rel <= 1e-10, float(rel), 1e-10)


def check_interpolation(seed: int, n_fields: int = 50) -> CheckResult:
    grid = Grid(n_per_dim=32)
    decomp = DyadicDecomposition(grid)
    rng = np.random.default_rng(seed)
    s1, s2 = -0.5, 1.5
    worst = 0.0
    for _ in range(n_fields):
        theta = rng.uniform(0.1, 0.9)
        s = theta * s1 + (1 - theta) * s2
        f = random_band_limited(grid, rng, rng.uniform(-2.0, 0.0), grid.n_per_dim // 3)
        lhs = decomp.besov_norm(f, BesovSpec(s, 1))
        rhs = (
            decomp.besov_norm(f, BesovSpec(s1, np.inf)) ** theta
            * decomp.besov_norm(f, BesovSpec(s2, np.inf)) ** (1 - theta)
        )
        bound = 10.0 * 4.0 / (theta * (1 - theta) * (s2 - s1))
        worst = max(worst, lhs / (bound * rhs))
    return CheckResult("interpolation_inequality", worst <= 1.0, float(worst), 1.0,
                       "ratio of norm to interpolation bound")


def check_charpoly(seed: int, perturb: bool = False) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10_000):
        eps = 10.0 ** rng.uniform(-2, 0)
        xi = 10.0 ** rng.uniform(-3, 2)
        mu = 10.0 ** rng.uniform(-1, 1)
        es = spectrum.eigenvalues(spectrum.SymbolPoint(xi, eps, mu))
        lam1 = es.lambda1
        if perturb:
            lam1 = lam1 + 1e-6 * (1.0 + abs(lam1))
        for lam in (lam1, es.lambda2):
            res = abs(lam * lam + lam / eps**2 + xi**2 / eps**2)
            worst = max(worst, res / max(1.0, abs(lam) ** 2))
        s_coef = 1.0 / eps**2 + 1.0 + mu * xi**2
        for lam in (es.lambda3, es.lambda4):
            res = abs(lam * lam + s_coef * lam + mu * xi**2 / eps**2)
            worst = max(worst, res / max(1.0, abs(lam) ** 2))
    name = "charpoly_residual" + ("_perturbed" if perturb else "")
    return CheckResult(name, worst <= 1e-10, float(worst), 1e-10)


def _ode_propagator(gen: np.ndarray, t: float) -> np.ndarray:
    """Adaptive RK oracle for exp(t * gen), via the real-stacked 4d system."""
    out = np.zeros((2, 2), dtype=complex)
    for col in range(2):
        y0 = np.zeros(2, dtype=complex)
        y0[col] = 1.0
        y0r = np.concatenate([y0.real, y0.imag])

        def rhs(_, y):
            z = y[:2] + 1j * y[2:]
            dz = gen @ z
            return np.concatenate([dz.real, dz.imag])

        sol = solve_ivp(rhs, (0.0, t), y0r, method="DOP853",
                        rtol=1e-12, atol=1e-14)
        out[:, col] = sol.y[:2, -1] + 1j * sol.y[2:, -1]
    return out


def check_propagator_vs_ode(seed: int) -> CheckResult:
    cases = [
        (0.5, 1.0, 1.0, 0.7),     # degenerate compressible ring
        (0.2, 2.0, 1.0, 0.5),
        (0.1, 20.0, 2.0, 0.05),
        (0.3, 0.0, 0.5, 1.0),
        (1.0, 1.0, 1.0, 1.0),
    ]
    worst = 0.0
    for eps, xi, mu, t in cases:
        p = spectrum.SymbolPoint(xi, eps, mu)
        b1 = np.array([[0.0, 1j * xi / eps], [1j * xi / eps, 1.0 / eps**2]])
        b2 = np.array([[1.0 / eps**2, -1.0 / eps], [-1.0 / eps, 1.0 + mu * xi**2]])
        worst = max(
            worst,
            np.max(np.abs(spectrum.propagator_B1(p, t) - _ode_propagator(-b1, t))),
            np.max(np.abs(spectrum.propagator_B2(p, t) - _ode_propagator(-b2, t))),
        )
    return CheckResult("propagator_vs_ode", worst <= 1e-8, float(worst), 1e-8)


def check_propagator_semigroup(seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(200):
        eps = 10.0 ** rng.uniform(-2, 0)
        xi = 10.0 ** rng.uniform(-2, 2)
        mu = 10.0 ** rng.uniform(-1, 1)
        t, s = rng.uniform(0.01, 1.0, 2)
        p = spectrum.SymbolPoint(xi, eps, mu)
        for prop in (spectrum.propagator_B1, spectrum.propagator_B2):
            g_ts = prop(p, t + s)
            g_t, g_s = prop(p, t), prop(p, s)
            worst = max(worst, np.max(np.abs(g_ts - g_t @ g_s)))
    return CheckResult("propagator_semigroup", worst <= 1e-9, float(worst), 1e-9)


def check_heat_analytic(seed: int) -> CheckResult:
    grid = Grid(n_per_dim=32)
    kappa = (2.0 * np.pi / grid.domain_length) ** 2
    a0 = transform_forward(grid, np.sin(grid.coords[0] * 2 * np.pi / grid.domain_length))
    u0 = SpectralField.zero(grid, grid.dim)
    state = KsnsState(a=a0, u=u0, mu=1.0)
    cfg = StepperConfig(dt=0.01, t_end=1.0, output_stride=1.0)
    stepper = KsnsStepper(grid, 1.0, cfg)
    for _ in range(100):
        state = stepper.step(state, 0.01)
    exact = np.exp(-kappa * 1.0) * a0.to_physical()
    err = np.max(np.abs(state.a.to_physical() - exact))
    return CheckResult("heat_analytic", err <= 1e-12, float(err), 1e-12)


def check_damped_reconstruction(seed: int) -> CheckResult:
    grid, rng, a, w, u = _small_setup(seed)
    state = EnsState(a=a, w=w, u=u, epsilon=0.1, mu=1.0)
    z, r = damped_modes(state)
    psi = pressure_weighted_density_gradient(a)
    recon = z + r - state.epsilon * psi + state.epsilon * u
    err = np.max(np.abs((recon - w).data)) / max(np.max(np.abs(w.data)), 1e-300)
    return CheckResult("damped_mode_reconstruction", err <= 1e-10, float(err), 1e-10)


def check_source_y(seed: int) -> CheckResult:
    grid, rng, a, w, u = _small_setup(seed)
    state = EnsState(a=a, w=w, u=u, epsilon=0.1, mu=1.0)
    y1 = source_Y(state)
    y2 = source_Y_transport_form(state)
    scale = max(y2.l2_norm(), 1e-300)
    err = (y1 - y2).l2_norm() / scale
    return CheckResult("source_y_agreement", err <= 1e-9, float(err), 1e-9)


def check_reformulated_drag_split(seed: int) -> CheckResult:
    """u-equation drag split: P((1+a)(w-eps u))/eps = R/eps + P(a(Z+R))/eps.

    Both sides assemble their composites in one zero-padded physical pass
    (Z + R = w + eps grad(a)/(1+a) - eps u pointwise); padding keeps the
    triple composite alias-free so the projector annihilates the exact
    gradient a (1+h(a)) grad a as the identity requires.
    """
    grid, rng, a, w, u = _small_setup(seed)
    eps = 0.1
    state = EnsState(a=a, w=w, u=u, epsilon=eps, mu=1.0)
    _, r = damped_modes(state)
    grad_a = gradient(a)

    def direct_side(av, wv, uv):
        return (1.0 + av) * (wv - eps * uv) / eps

    def split_side(av, wv, uv, gv):
        zr = wv + eps * gv / (1.0 + av) - eps * uv
        return av * zr / eps

    direct = project_leray(apply_pointwise(direct_side, a, w, u, pad=2))
    split = (1.0 / eps) * r + project_leray(
        apply_pointwise(split_side, a, w, u, grad_a, pad=2))
    err = (direct - split).l2_norm() / max(direct.l2_norm(), 1e-300)
    return CheckResult("reformulated_drag_split", err <= 1e-9, float(err), 1e-9)


def check_error_system_identity(seed: int) -> CheckResult:
    """d(da)/dt from the two RHS equals the error-equation right side."""
    grid, rng, a, w, u = _small_setup(seed)
    rng2 = np.random.default_rng(seed + 1)
    a_star = 0.05 * random_band_limited(grid, rng2, -1.5, grid.n_per_dim // 4)
    u_star = 0.05 * random_band_limited(grid, rng2, -1.5, grid.n_per_dim // 4,
                                        grid.dim, True)
    eps = 0.1
    ens = EnsState(a=a, w=w, u=u, epsilon=eps, mu=1.0)
    ksns = KsnsState(a=a_star, u=u_star, mu=1.0)
    lhs = delta_density_rate(ens, ksns)

    da = a - a_star
    du = u - u_star
    u_phys = u.to_physical()
    grad_da = gradient(da).to_physical()
    adv1 = np.sum(u_phys * grad_da, axis=0)
    grad_astar = gradient(a_star).to_physical()
    adv2 = np.sum(du.to_physical() * grad_astar, axis=0)
    rhs = (
        laplacian(da)
        - transform_forward(grid, adv1).dealiased()
        - transform_forward(grid, adv2).dealiased()
        + (1.0 / eps) * source_Y(ens)
    )
    err = (lhs - rhs).l2_norm() / max(lhs.l2_norm(), 1e-300)
    return CheckResult("error_system_identity", err <= 1e-9, float(err), 1e-9)


def check_rhs_conservation(seed: int) -> CheckResult:
    grid, rng, a, w, u = _small_setup(seed)
    state = EnsState(a=a, w=w, u=u, epsilon=0.1, mu=1.0)
    rate = rhs_ens(state)
    mean_drift = abs(rate.a.mean())
    div_residual = divergence(rate.u).l2_norm()
    worst = max(mean_drift / 1e-14, div_residual / 1e-10)
    return CheckResult("rhs_conservation", worst <= 1.0, float(worst), 1.0,
                       "mean(a) drift vs 1e-14 and div(du/dt) vs 1e-10")


def check_exact_linear_step(seed: int) -> CheckResult:
    from .time_integrator import EnsStepper

    grid = Grid(n_per_dim=32)
    rng = np.random.default_rng(seed)
    eps, mu, dt = 0.1, 1.0, 0.05
    a = 1e-8 * random_band_limited(grid, rng, -1.0, 4)
    w = 1e-8 * random_band_limited(grid, rng, -1.0, 4, grid.dim)
    u = 1e-8 * random_band_limited(grid, rng, -1.0, 4, grid.dim, True)
    state = EnsState(a=a, w=w, u=u, epsilon=eps, mu=mu)
    cfg = StepperConfig(dt=dt, t_end=dt, output_stride=1.0 / dt,
                        include_nonlinear=False)
    stepper = EnsStepper(grid, eps, mu, cfg)
    stepped = stepper.step(state, dt)

    xi_hat = grid.unit_xi
    m = np.sum(xi_hat * w.data, axis=0)
    w_perp = w.data - xi_hat * m
    worst = 0.0
    for idx in [(1, 0), (0, 1), (2, 3), (5, 7)]:
        xi = float(grid.xi_norm[idx])
        p = spectrum.SymbolPoint(xi, eps, mu)
        g1 = spectrum.propagator_B1(p, dt)
        g2 = spectrum.propagator_B2(p, dt)
        a_new = g1[0, 0] * a.data[0][idx] + g1[0, 1] * m[idx]
        m_new = g1[1, 0] * a.data[0][idx] + g1[1, 1] * m[idx]
        exp_a = a_new
        exp_w = [g2[0, 0] * w_perp[c][idx] + g2[0, 1] * u.data[c][idx]
                 + xi_hat[c][idx] * m_new for c in range(2)]
        scale = max(np.max(np.abs(a.data)), 1e-300)
        worst = max(worst, abs(stepped.a.data[0][idx] - exp_a) / scale)
        for c in range(2):
            worst = max(worst, abs(stepped.w.data[c][idx] - exp_w[c]) / scale)
    return CheckResult("exact_linear_step", worst <= 1e-12, float(worst), 1e-12)


def negative_control_partition(seed: int) -> CheckResult:
    """Corrupted block profile must break the partition-of-unity check."""
    decomp = DyadicDecomposition(Grid(n_per_dim=32))
    corrupted = copy.copy(decomp)
    corrupted._profiles = decomp._profiles.copy()
    corrupted._profiles[2] *= 1.01
    res = corrupted.partition_residual()
    return CheckResult("negative_control_partition", res > 1e-12, float(res), 1e-12,
                       "corruption detected (residual above threshold)")


def negative_control_charpoly(seed: int) -> CheckResult:
    """Perturbed eigenvalue branch must break the residual check."""
    result = check_charpoly(seed, perturb=True)
    return CheckResult("negative_control_charpoly", not result.passed,
                       result.measured, result.threshold,
                       "corruption detected (residual above threshold)")


ALL_CHECKS = [
    check_projector_algebra,
    check_parseval,
    check_transform_roundtrip,
    check_partition_of_unity,
    check_bernstein,
    check_block_reconstruction,
    check_interpolation,
    check_charpoly,
    check_propagator_vs_ode,
    check_propagator_semigroup,
    check_heat_analytic,
    check_damped_reconstruction,
    check_source_y,
    check_reformulated_drag_split,
    check_error_system_identity,
    check_rhs_conservation,
    check_exact_linear_step,
    negative_control_partition,
    negative_control_charpoly,
]


def run_all_checks(seed: int = 0) -> list[CheckResult]:
    return [check(seed) for check in ALL_CHECKS]
