"""Experiment drivers: configuration, sweeps, slope fits, persistence.

Every experiment writes one directory containing ``config.json`` (echo of
the parsed configuration), ``series.csv`` (long format: run_id, t, name,
value), ``slopes.json`` (fits, gates, truncation notes), and binary
spectral snapshots of the initial and final states per run.

All randomness flows through one seeded generator, so a fixed seed and
config reproduce every number bit-identically.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .decay_quadrature import RadialProfile, fit_decay, loglog_fit, semigroup_norm
from .linear_spectrum import SymbolPoint, eigenvalues
from .littlewood_paley import BesovSpec, DyadicDecomposition, ThresholdConfig
from .models import (
    DensityFloorError,
    EnsState,
    KsnsState,
    RunningEnergy,
    darcy_residual_norm,
    dissipation_increments,
    initial_energy,
    initial_error_energy,
    prepared_velocity,
)
from .spectral_grid import Grid, SpectralField, divergence, project_leray
from .time_integrator import CflError, EnsStepper, KsnsStepper, StepperConfig, integrate

SNAPSHOT_MAGIC = b"RFSNAP01"

KINDS = ("simulate", "converge", "darcy", "damped", "spectrum", "decay", "selftest")


class ConfigError(ValueError):
    """Configuration failed validation (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    """Flat experiment configuration; unknown JSON keys are rejected."""

    kind: str
    n: int = 128
    domain_length: float = 2.0 * np.pi
    mu: float = 1.0
    dt: float = 2e-3
    t_end: float = 2.0
    output_stride: float = 10.0
    cfl_safety: float = 0.9
    epsilon_list: list = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    epsilon_ceiling: float = 0.25
    m0: int = 2
    sigma1: float = -1.0
    seed: int = 12345
    amplitude: float = 0.01
    data_kmax: int = 8
    prepared_data: bool = False
    include_nonlinear: bool = True
    linear_limit: bool = False
    sigma_list: list = field(default_factory=lambda: [0.0, 0.5, 1.0])
    window: list = field(default_factory=lambda: [10.0, 1000.0])
    n_window_samples: int = 40
    cutoff_hi: float = 1.0
    threads: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        eps = list(self.epsilon_list)
        if not eps:
            raise ConfigError("epsilon_list must not be empty")
        if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
            raise ConfigError("epsilon_list must be strictly decreasing")
        if eps[0] > self.epsilon_ceiling:
            raise ConfigError(
                f"epsilon values must not exceed the ceiling {self.epsilon_ceiling}"
            )
        if eps[-1] <= 0:
            raise ConfigError("epsilon values must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.amplitude <= 0:
            raise ConfigError("amplitude must be positive")
        if self.data_kmax < 1:
            raise ConfigError("data_kmax must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "kind" not in raw:
            raise ConfigError("config must specify 'kind'")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)

    def stepper_config(self) -> StepperConfig:
        return StepperConfig(
            dt=self.dt,
            t_end=self.t_end,
            output_stride=self.output_stride,
            cfl_safety=self.cfl_safety,
            include_nonlinear=self.include_nonlinear,
            linear_limit=self.linear_limit,
        )


@dataclass
class ExperimentRecord:
    """Everything one experiment produced, ready for persistence."""

    config: dict
    series: list = field(default_factory=list)  # (run_id, t, name, value)
    slopes: dict = field(default_factory=dict)
    gates: dict = field(default_factory=dict)
    truncation: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    partial: bool = False
    version: str = __version__

    @property
    def passed(self) -> bool:
        return bool(self.gates) and all(self.gates.values())

    def add_series(self, run_id: str, t: float, name: str, value: float):
        self.series.append((run_id, float(t), name, float(value)))

    def write(self, out_dir: Path):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "config.json", "w") as fh:
            json.dump(self.config, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out_dir / "series.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run_id", "t", "name", "value"])
            for run_id, t, name, value in self.series:
                writer.writerow([run_id, repr(t), name, repr(value)])
        summary = {
            "slopes": self.slopes,
            "gates": self.gates,
            "truncation": self.truncation,
            "failures": self.failures,
            "partial": self.partial,
            "version": self.version,
        }
        with open(out_dir / "slopes.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Binary snapshots
# ---------------------------------------------------------------------------

def write_snapshot(path, f: SpectralField, time: float):
    """Write one spectral field: magic, dims, dtype tag, then '<c16' payload."""
    header = SNAPSHOT_MAGIC + struct.pack(
        "<IIIIdd",
        f.grid.dim,
        f.grid.n_per_dim,
        f.ncomp,
        0,  # dtype tag 0 = little-endian complex128
        f.grid.domain_length,
        time,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.data).astype("<c16").tobytes())


def read_snapshot(path) -> tuple[SpectralField, float]:
    with open(path, "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a snapshot file (bad magic {magic!r})")
        dim, n, ncomp, dtype_tag, length, time = struct.unpack("<IIIIdd", fh.read(32))
        if dtype_tag != 0:
            raise ValueError(f"{path}: unsupported dtype tag {dtype_tag}")
        payload = fh.read(ncomp * n**dim * 16)
    data = np.frombuffer(payload, dtype="<c16").reshape((ncomp,) + (n,) * dim)
    grid = Grid(n_per_dim=n, domain_length=length, dim=dim)
    return SpectralField(grid, data.astype(complex)), time


# ---------------------------------------------------------------------------
# Initial data synthesis
# ---------------------------------------------------------------------------

def random_band_limited(
    grid: Grid,
    rng: np.random.Generator,
    spectral_exponent: float,
    kmax: int,
    ncomp: int = 1,
    divergence_free: bool = False,
) -> SpectralField:
    """Random real field with |c(k)| ~ |xi|^{spectral_exponent} on 0 < |k| <= kmax."""
    data = np.zeros((ncomp,) + grid.shape, dtype=complex)
    k_norm = np.sqrt(np.sum(grid.k_int**2, axis=0))
    mask = (k_norm > 0) & (k_norm <= kmax)
    amp = np.zeros(grid.shape)
    amp[mask] = grid.xi_norm[mask] ** spectral_exponent
    for c in range(ncomp):
        phases = rng.uniform(0.0, 2.0 * np.pi, grid.shape)
        data[c] = amp * np.exp(1j * phases)
    f = SpectralField(grid, data).hermitian_symmetrized()
    if divergence_free:
        f = project_leray(f)
    return f


def synthesize_states(cfg: ExperimentConfig, grid: Grid, decomp: DyadicDecomposition,
                      rng: np.random.Generator):
    """Shared initial data for a sweep: (a0, u0) for both systems, w0 shape.

    The limit-system data (a0, u0) is scaled so its energy functional is
    half the target amplitude; the ill-prepared velocity shape is returned
    unscaled together with its per-epsilon scaling hook.
    """
    exponent = -(cfg.sigma1 + grid.dim / 2.0)
    a_shape = random_band_limited(grid, rng, exponent, cfg.data_kmax)
    u_shape = random_band_limited(grid, rng, exponent, cfg.data_kmax, grid.dim, True)
    w_shape = random_band_limited(grid, rng, exponent, cfg.data_kmax, grid.dim)

    e0_unit = initial_energy(KsnsState(a=a_shape, u=u_shape, mu=cfg.mu), decomp)
    alpha = 0.5 * cfg.amplitude / e0_unit
    a0 = alpha * a_shape
    u0 = alpha * u_shape

    # Scale w0 so the initial-error functional at the largest epsilon is the
    # other half of the target (its w-terms are homogeneous of degree one).
    eps_max = cfg.epsilon_list[0]
    th = ThresholdConfig(eps_max, cfg.m0)
    probe = EnsState(a=a0, w=w_shape, u=u0, epsilon=eps_max, mu=cfg.mu)
    ksns0 = KsnsState(a=a0, u=u0, mu=cfg.mu)
    total, terms = initial_error_energy(probe, ksns0, decomp, th)
    w_terms = total - terms["density_error"] - terms["velocity_error"]
    a_high = eps_max * decomp.besov_norm(a0, BesovSpec(grid.dim / 2.0 + 1, band="high"), th)
    beta = max(0.5 * cfg.amplitude - a_high, 0.1 * cfg.amplitude) / max(
        w_terms - a_high, 1e-300
    )
    return a0, u0, beta * w_shape


# ---------------------------------------------------------------------------
# Slope fitting
# ---------------------------------------------------------------------------

def fit_slope(points) -> tuple[float, float, float]:
    """OLS on (log x, log y) for positive pairs; returns (slope, intercept, r2)."""
    pts = list(points)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return loglog_fit(xs, ys)


def _fit_entry(eps_values, values) -> dict:
    pairs = [(e, v) for e, v in zip(eps_values, values) if v > 0 and math.isfinite(v)]
    if len(pairs) < 3:
        return {"slope": None, "r2": None, "points": pairs,
                "note": "slope fit refused: fewer than 3 usable points"}
    slope, intercept, r2 = fit_slope(pairs)
    return {"slope": slope, "intercept": intercept, "r2": r2, "points": pairs}


# ---------------------------------------------------------------------------
# Paired sweep (convergence / Darcy / damped-mode studies)
# ---------------------------------------------------------------------------

@dataclass
class SweepRunResult:
    epsilon: float
    sup_delta_low: float = 0.0      # sup_t ||(da, du)||_{B^{d/2-1}}
    int_delta_high: float = 0.0     # L1_t  ||(da, du)||_{B^{d/2+1}}
    int_darcy: float = 0.0          # L1_t  ||w/eps - W*||_{B^{d/2}+B^{d/2+1}}
    int_Z: float = 0.0              # L1_t  ||Z||_{B^{d/2}}
    int_R: float = 0.0              # L1_t  ||R||_{B^{d/2-1} cap B^{d/2}}
    D_eps: float = 0.0
    E_eps: float = 0.0
    E0: float = 0.0
    delta_E0: float = 0.0
    accepted_steps: int = 0
    failure: str | None = None
    rows: list = field(default_factory=list)


class _Trapezoid:
    """Running time integrals for a dict of named nonnegative integrands.

    Between samples the integrand is interpolated exponentially (the rule
    dt (f1 - f2)/log(f1/f2), exact for f = A e^{-lambda t}) and falls back
    to the plain trapezoid for near-constant or vanishing values.  The
    ill-prepared initial layer decays like e^{-t/eps^2}, which the
    exponential integrator resolves exactly at the sample points but a
    plain trapezoid would overweight by ~ dt/eps^2.
    """

    def __init__(self, first: dict):
        self.prev = dict(first)
        self.totals = {k: 0.0 for k in first}

    @staticmethod
    def _segment(dt: float, f1: float, f2: float) -> float:
        if f1 > 0.0 and f2 > 0.0:
            log_ratio = math.log(f1 / f2)
            if abs(log_ratio) > 1e-6:
                return dt * (f1 - f2) / log_ratio
        return 0.5 * dt * (f1 + f2)

    def push(self, dt: float, values: dict):
        for k, v in values.items():
            self.totals[k] += self._segment(dt, self.prev[k], v)
        self.prev = dict(values)


def _paired_instantaneous(ens, ksns, decomp, threshold):
    """All per-step integrands of the paired error study."""
    d2 = ens.a.grid.dim / 2.0
    da = ens.a - ksns.a
    du = ens.u - ksns.u
    low = BesovSpec(d2 - 1)
    high = BesovSpec(d2 + 1)
    incr, z_norms, r_norms = dissipation_increments(ens, decomp, threshold)
    values = {
        "delta_low": decomp.besov_norm(da, low) + decomp.besov_norm(du, low),
        "delta_high": decomp.besov_norm(da, high) + decomp.besov_norm(du, high),
        "darcy": darcy_residual_norm(ens, ksns, decomp),
        "Z": z_norms["mid"],
        "R": r_norms["low"] + r_norms["mid"],
        "D_density": incr["density"],
        "D_density_low": incr["density_low"],
        "D_u": incr["u"],
        "D_w_L2_sq": incr["w_L2"] ** 2,
        "D_w_L1": incr["w_L1"],
    }
    return values


def _run_pair(cfg: ExperimentConfig, grid, decomp, a0, u0, w0, epsilon: float,
              out_dir: Path | None) -> SweepRunResult:
    th = ThresholdConfig(epsilon, cfg.m0)
    w_init = prepared_velocity(a0, u0, epsilon) if cfg.prepared_data else w0
    ens = EnsState(a=a0, w=w_init, u=u0, epsilon=epsilon, mu=cfg.mu)
    ksns = KsnsState(a=a0, u=u0, mu=cfg.mu)
    scfg = cfg.stepper_config()
    ens_stepper = EnsStepper(grid, epsilon, cfg.mu, scfg)
    ksns_stepper = KsnsStepper(grid, cfg.mu, scfg)

    res = SweepRunResult(epsilon=epsilon)
    res.E0 = initial_energy(ksns, decomp)
    res.delta_E0, _ = initial_error_energy(ens, ksns, decomp, th)
    energy = RunningEnergy(decomp, th)
    run_id = f"eps{epsilon:g}"

    if out_dir is not None:
        run_dir = out_dir / run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        for name, f in (("a", ens.a), ("w", ens.w), ("u", ens.u)):
            write_snapshot(run_dir / f"initial_{name}.snap", f, 0.0)

    inst = _paired_instantaneous(ens, ksns, decomp, th)
    integrals = _Trapezoid(inst)
    res.sup_delta_low = inst["delta_low"]
    e_eps = energy.update(ens)

    def emit(t):
        for name, v in inst.items():
            res.rows.append((run_id, t, name, v))
        res.rows.append((run_id, t, "E_eps", e_eps))

    emit(0.0)

    t_out = 1.0 / cfg.output_stride
    n_intervals = round(cfg.t_end * cfg.output_stride)
    steps_per_out = max(1, int(np.ceil(t_out / cfg.dt - 1e-12)))
    dt = t_out / steps_per_out

    try:
        for interval in range(1, n_intervals + 1):
            k = 0
            while k < steps_per_out:
                # CFL enforcement: halve the shared step (both runs stay in
                # lockstep) up to the rejection limit, then abort.
                halvings = 0
                bound = min(ens_stepper.max_stable_dt(ens),
                            ksns_stepper.max_stable_dt(ksns))
                while dt > bound:
                    if halvings >= 20:
                        raise CflError("CFL condition unmet after 20 halvings")
                    remaining = steps_per_out - k
                    dt *= 0.5
                    steps_per_out = k + 2 * remaining
                    halvings += 1
                ens = ens_stepper.step(ens, dt)
                ksns = ksns_stepper.step(ksns, dt)
                k += 1
                res.accepted_steps += 1
                inst = _paired_instantaneous(ens, ksns, decomp, th)
                integrals.push(dt, inst)
                res.sup_delta_low = max(res.sup_delta_low, inst["delta_low"])
                e_eps = energy.update(ens)
            emit(interval * t_out)
    except (DensityFloorError, CflError) as exc:
        res.failure = f"{type(exc).__name__}: {exc}"

    tot = integrals.totals
    res.int_delta_high = tot["delta_high"]
    res.int_darcy = tot["darcy"]
    res.int_Z = tot["Z"]
    res.int_R = tot["R"]
    res.E_eps = e_eps
    eps = epsilon
    res.D_eps = (
        tot["D_density"]
        + tot["D_density_low"]
        + tot["D_u"]
        + math.sqrt(tot["D_w_L2_sq"]) / eps
        + tot["D_w_L1"] / eps
        + tot["Z"] / eps**2
        + tot["R"] / eps**2
    )

    if out_dir is not None and res.failure is None:
        run_dir = out_dir / run_id
        t_final = cfg.t_end
        for name, f in (("a", ens.a), ("w", ens.w), ("u", ens.u)):
            write_snapshot(run_dir / f"final_{name}.snap", f, t_final)
        for name, f in (("a", ksns.a), ("u", ksns.u)):
            write_snapshot(run_dir / f"final_limit_{name}.snap", f, t_final)
    return res


def _sweep(cfg: ExperimentConfig, out_dir: Path | None) -> tuple[ExperimentRecord, list]:
    grid = Grid(cfg.n, cfg.domain_length)
    decomp = DyadicDecomposition(grid)
    rng = np.random.default_rng(cfg.seed)
    a0, u0, w0 = synthesize_states(cfg, grid, decomp, rng)

    runner = lambda eps: _run_pair(cfg, grid, decomp, a0, u0, w0, eps, out_dir)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(runner, cfg.epsilon_list))
    else:
        results = [runner(eps) for eps in cfg.epsilon_list]

    record = ExperimentRecord(config=cfg.to_dict())
    ok = [r for r in results if r.failure is None]
    eps_ok = [r.epsilon for r in ok]
    record.truncation = {
        "j_min": decomp.j_min,
        "j_max": decomp.j_max,
        "J_eps": {f"{e:g}": ThresholdConfig(e, cfg.m0).j_threshold
                  for e in cfg.epsilon_list},
        "m0": cfg.m0,
        "dt_delta_a": "rhs",
    }
    for r in results:
        record.series.extend(r.rows)
        run_id = f"eps{r.epsilon:g}"
        for name, v in (
            ("sup_delta_low", r.sup_delta_low),
            ("int_delta_high", r.int_delta_high),
            ("int_darcy", r.int_darcy),
            ("int_Z", r.int_Z),
            ("int_R", r.int_R),
            ("E0", r.E0),
            ("delta_E0", r.delta_E0),
            ("D_eps", r.D_eps),
            ("E_eps", r.E_eps),
            ("accepted_steps", r.accepted_steps),
        ):
            record.add_series(run_id, cfg.t_end, name, v)
        if r.failure:
            record.failures.append(f"{run_id}: {r.failure}")
            record.partial = True

    record.slopes = {
        "converge_sup": _fit_entry(eps_ok, [r.sup_delta_low for r in ok]),
        "converge_int": _fit_entry(eps_ok, [r.int_delta_high for r in ok]),
        "darcy_int": _fit_entry(eps_ok, [r.int_darcy for r in ok]),
        "damped_Z": _fit_entry(eps_ok, [r.int_Z for r in ok]),
        "damped_R": _fit_entry(eps_ok, [r.int_R for r in ok]),
    }
    return record, results


def _gate_slope(entry: dict, minimum: float, r2_min: float | None = None) -> bool:
    if entry.get("slope") is None:
        return False
    if entry["slope"] < minimum:
        return False
    return r2_min is None or entry["r2"] >= r2_min


def run_converge(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentRecord:
    """Relaxation-limit error study: err(eps) slope must be >= 0.9."""
    record, _ = _sweep(cfg, out_dir)
    record.gates = {
        "converge_slope": _gate_slope(record.slopes["converge_sup"], 0.9, 0.98),
    }
    return record


def run_darcy(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentRecord:
    """Darcy-law residual study: time-integral slope must be >= 0.9."""
    record, _ = _sweep(cfg, out_dir)
    record.gates = {
        "darcy_slope": _gate_slope(record.slopes["darcy_int"], 0.9),
    }
    return record


def run_damped_modes(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentRecord:
    """Damped-mode scaling study: Z and R integrals must scale ~ eps^2."""
    record, _ = _sweep(cfg, out_dir)
    record.gates = {
        "damped_Z_slope": _gate_slope(record.slopes["damped_Z"], 1.8),
        "damped_R_slope": _gate_slope(record.slopes["damped_R"], 1.8),
    }
    return record


# ---------------------------------------------------------------------------
# Single-system simulation
# ---------------------------------------------------------------------------

def run_simulate(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentRecord:
    """Time-march the relaxation system for each epsilon; record norm series."""
    grid = Grid(cfg.n, cfg.domain_length)
    decomp = DyadicDecomposition(grid)
    rng = np.random.default_rng(cfg.seed)
    a0, u0, w0 = synthesize_states(cfg, grid, decomp, rng)
    record = ExperimentRecord(config=cfg.to_dict())
    record.truncation = {"j_min": decomp.j_min, "j_max": decomp.j_max, "m0": cfg.m0}
    d2 = grid.dim / 2.0
    gates = {}

    for epsilon in cfg.epsilon_list:
        run_id = f"eps{epsilon:g}"
        th = ThresholdConfig(epsilon, cfg.m0)
        w_init = prepared_velocity(a0, u0, epsilon) if cfg.prepared_data else w0
        state = EnsState(a=a0, w=w_init, u=u0, epsilon=epsilon, mu=cfg.mu)

        def norms_hook(t, s):
            incr, z_norms, r_norms = dissipation_increments(s, decomp, th)
            return {
                "a_low": decomp.besov_norm(s.a, BesovSpec(d2 - 1)),
                "a_mid": decomp.besov_norm(s.a, BesovSpec(d2)),
                "u_low": decomp.besov_norm(s.u, BesovSpec(d2 - 1)),
                "w_mid": decomp.besov_norm(s.w, BesovSpec(d2)),
                "Z": z_norms["mid"],
                "R": r_norms["low"] + r_norms["mid"],
                "mean_a_drift": abs(s.a.mean() - a0.mean()),
                "div_u": divergence(s.u).l2_norm(),
            }

        traj = integrate(state, cfg.stepper_config(), diagnostics_hooks=[norms_hook])
        for t, diag in zip(traj.times, traj.diagnostics):
            for name, v in diag.items():
                record.add_series(run_id, t, name, v)
        if out_dir is not None:
            run_dir = Path(out_dir) / run_id
            run_dir.mkdir(parents=True, exist_ok=True)
            for name, f in (("a", traj.states[0].a), ("w", traj.states[0].w),
                            ("u", traj.states[0].u)):
                write_snapshot(run_dir / f"initial_{name}.snap", f, 0.0)
            last = traj.states[-1]
            for name, f in (("a", last.a), ("w", last.w), ("u", last.u)):
                write_snapshot(run_dir / f"final_{name}.snap", f, traj.times[-1])
        gates[f"completed_{run_id}"] = traj.failure is None
        if traj.failure:
            record.failures.append(f"{run_id}: {traj.failure}")
            record.partial = True
    record.gates = gates
    return record


# ---------------------------------------------------------------------------
# Spectrum sweep
# ---------------------------------------------------------------------------

def _regime_tag(eps: float, xi: float) -> str:
    prod = eps * xi
    if prod <= 0.25:
        return "low"
    if prod >= 4.0:
        return "high"
    return "mid"


def spectrum_residuals(n_samples: int = 10_000, seed: int = 0, mu: float = 1.0) -> dict:
    """Characteristic-polynomial residuals over random (eps, xi) samples."""
    rng = np.random.default_rng(seed)
    worst_b1 = worst_b2 = 0.0
    for _ in range(n_samples):
        eps = 10.0 ** rng.uniform(-2, 0)
        xi = 0.0 if rng.random() < 0.02 else 10.0 ** rng.uniform(-3, 2)
        es = eigenvalues(SymbolPoint(xi_norm=xi, epsilon=eps, mu=mu))
        for lam in (es.lambda1, es.lambda2):
            res = abs(lam * lam + lam / eps**2 + xi**2 / eps**2)
            worst_b1 = max(worst_b1, res / max(1.0, abs(lam) ** 2))
        s_coef = 1.0 / eps**2 + 1.0 + mu * xi**2
        for lam in (es.lambda3, es.lambda4):
            res = abs(lam * lam + s_coef * lam + mu * xi**2 / eps**2)
            worst_b2 = max(worst_b2, res / max(1.0, abs(lam) ** 2))
    return {"b1": worst_b1, "b2": worst_b2}


def asymptotic_constants(mu: float = 1.0) -> dict:
    """Empirical constants of the low/high-frequency eigenvalue expansions."""
    out = {"low_l1": 0.0, "low_l3": 0.0, "high_re_l1": 0.0, "high_im_l1": 0.0,
           "high_l3": 0.0, "high_l4": 0.0}
    for eps in np.geomspace(0.01, 1.0, 25):
        xi_low = np.geomspace(1e-3, 0.25 / eps, 60)
        for xi in xi_low:
            es = eigenvalues(SymbolPoint(xi, eps, mu))
            out["low_l1"] = max(out["low_l1"],
                                abs(es.lambda1 + xi**2) / (eps**2 * xi**4))
            ref3 = mu * xi**2 / (1.0 + eps**2)
            out["low_l3"] = max(
                out["low_l3"],
                abs(es.lambda3 + ref3) / (mu**2 * eps**2 * xi**4 / (1.0 + eps**2)),
            )
        xi_high = np.geomspace(4.0 / eps, 400.0 / eps, 60)
        for xi in xi_high:
            es = eigenvalues(SymbolPoint(xi, eps, mu))
            bound = eps**-3 / xi
            out["high_re_l1"] = max(out["high_re_l1"],
                                    abs(es.lambda1.real + 0.5 / eps**2) / bound)
            out["high_im_l1"] = max(out["high_im_l1"],
                                    abs(es.lambda1.imag - xi / eps) / bound)
            scale = (1.0 + 1.0 / eps**2) ** 2 / (mu * xi**2)
            out["high_l3"] = max(out["high_l3"],
                                 abs(es.lambda3 + 1.0 / eps**2) / scale)
            out["high_l4"] = max(out["high_l4"],
                                 abs(es.lambda4 + 1.0 + mu * xi**2) / scale)
    return out


def run_spectrum(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentRecord:
    """Eigenvalue sweep CSV plus the residual and expansion-constant gates."""
    record = ExperimentRecord(config=cfg.to_dict())
    xi_values = np.geomspace(1e-2, 1e3, 201)
    rows = []
    for epsilon in cfg.epsilon_list:
        for xi in xi_values:
            es = eigenvalues(SymbolPoint(float(xi), epsilon, cfg.mu))
            rows.append(
                [epsilon, float(xi),
                 es.lambda1.real, es.lambda1.imag, es.lambda2.real, es.lambda2.imag,
                 es.lambda3.real, es.lambda3.imag, es.lambda4.real, es.lambda4.imag,
                 _regime_tag(epsilon, float(xi))]
            )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "eigenvalues.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epsilon", "xi", "re_l1", "im_l1", "re_l2", "im_l2",
                             "re_l3", "im_l3", "re_l4", "im_l4", "regime_tag"])
            for row in rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])

    residuals = spectrum_residuals(seed=cfg.seed, mu=cfg.mu)
    constants = asymptotic_constants(mu=cfg.mu)
    record.slopes = {"charpoly_residuals": residuals,
                     "asymptotic_constants": constants}
    record.gates = {
        "charpoly_b1": residuals["b1"] <= 1e-10,
        "charpoly_b2": residuals["b2"] <= 1e-10,
        "low_regime_constants": max(constants["low_l1"], constants["low_l3"]) <= 2.0,
        "high_regime_bounded": max(constants["high_re_l1"], constants["high_im_l1"],
                                   constants["high_l3"], constants["high_l4"]) <= 2.0,
    }
    return record


# ---------------------------------------------------------------------------
# Decay-rate fits
# ---------------------------------------------------------------------------

def run_decay(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentRecord:
    """Semigroup decay study on continuous frequency (criteria for the
    heat rates, the eps-uniform branch rates, and the relative-velocity
    rate enhancement)."""
    record = ExperimentRecord(config=cfg.to_dict())
    profile = RadialProfile(sigma1=cfg.sigma1, d=2, cutoff_hi=cfg.cutoff_hi)
    window = (cfg.window[0], cfg.window[1])
    ts = np.geomspace(window[0], window[1], cfg.n_window_samples)
    fits = {}
    gates = {}

    def run_component(component, sigma, epsilon=None):
        key = f"{component}_s{sigma:g}" + (f"_eps{epsilon:g}" if epsilon else "")
        norms = [semigroup_norm(profile, component, sigma, t, epsilon, cfg.mu)
                 for t in ts]
        run_id = f"{component}" + (f"_eps{epsilon:g}" if epsilon else "")
        for t, v in zip(ts, norms):
            record.series.append((run_id, float(t), f"norm_s{sigma:g}", float(v)))
        slope, intercept, r2 = loglog_fit(ts, norms)
        fits[key] = {"slope": slope, "r2": r2, "sigma": sigma,
                     "component": component, "epsilon": epsilon}
        return slope, r2

    heat_slopes = {}
    for sigma in cfg.sigma_list:
        slope, r2 = run_component("heat", sigma)
        heat_slopes[sigma] = slope
        target = -0.5 * (sigma - cfg.sigma1)
        gates[f"heat_rate_s{sigma:g}"] = abs(slope - target) <= 0.03 and r2 >= 0.99

    for epsilon in cfg.epsilon_list:
        for component in ("b1_density", "b2_u"):
            for sigma in cfg.sigma_list:
                slope, _ = run_component(component, sigma, epsilon)
                gates[f"{component}_matches_heat_s{sigma:g}_eps{epsilon:g}"] = (
                    abs(slope - heat_slopes[sigma]) <= 0.05
                )
        u_slope = fits[f"b2_u_s0_eps{epsilon:g}"]["slope"]
        rel_slope, _ = run_component("relative_velocity", 0.0, epsilon)
        gates[f"relative_velocity_gain_eps{epsilon:g}"] = (
            abs((u_slope - rel_slope) - 0.5) <= 0.08
        )

    record.slopes = fits
    record.gates = gates
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "decay.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["symbol", "component", "epsilon", "sigma1", "sigma",
                             "t", "norm"])
            for key, entry in fits.items():
                comp = entry["component"]
                symbol = "heat" if comp == "heat" else comp.split("_")[0]
                run_id = comp + (f"_eps{entry['epsilon']:g}" if entry["epsilon"] else "")
                for rid, t, name, v in record.series:
                    if rid == run_id and name == f"norm_s{entry['sigma']:g}":
                        writer.writerow([symbol, comp,
                                         entry["epsilon"] or "", cfg.sigma1,
                                         entry["sigma"], repr(t), repr(v)])
    return record


# ---------------------------------------------------------------------------
# Selftest + dispatch
# ---------------------------------------------------------------------------

def run_selftest(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentRecord:
    from .selftest import run_all_checks

    record = ExperimentRecord(config=cfg.to_dict())
    checks = run_all_checks(seed=cfg.seed)
    record.gates = {c.name: c.passed for c in checks}
    record.slopes = {
        c.name: {"measured": c.measured, "threshold": c.threshold, "detail": c.detail}
        for c in checks
    }
    return record


_RUNNERS = {
    "simulate": run_simulate,
    "converge": run_converge,
    "darcy": run_darcy,
    "damped": run_damped_modes,
    "spectrum": run_spectrum,
    "decay": run_decay,
    "selftest": run_selftest,
}


def run_experiment(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentRecord:
    runner = _RUNNERS[cfg.kind]
    record = runner(cfg, out_dir)
    if out_dir is not None:
        record.write(Path(out_dir))
    return record
