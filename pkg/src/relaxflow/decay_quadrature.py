"""Algebraic decay rates of the linear semigroups by radial quadrature.

Norms of linear-flow solutions with critically-scaled data are computed on
continuous frequency (no torus truncation):

    N(t)^2 = int_0^cutoff  |xi|^{2 sigma} |G(t, xi)|^2 |fhat(xi)|^2
             xi^{d-1} dxi,
    fhat(xi) = |xi|^{-(sigma1 + d/2)} 1_{xi <= cutoff}

which realizes data of unit size in the critical space with second index
infinity: every dyadic block below the cutoff has the same weighted norm.
The integral collapses to int xi^{2(sigma - sigma1) - 1} |G|^2 dxi and is
evaluated by composite Gauss-Legendre quadrature on a logarithmic axis
with panel doubling until the requested relative tolerance.

Component selector -> propagator combination (unit loading on every data
channel of the block):

    heat                exp(-t xi^2)
    b1_density          G1[0,0] + G1[0,1]   (density response)
    b1_longitudinal     G1[1,0] + G1[1,1]   (longitudinal w response)
    b2_u                G2[1,0] + G2[1,1]   (incompressible u response)
    b2_pw               G2[0,0] + G2[0,1]   (transverse w response)
    b2_r                b2_pw - eps * b2_u  (transverse part of w - eps u)
    relative_velocity   sqrt(|b1_longitudinal|^2 + |b2_r|^2)
                        (full w - eps u response, both blocks)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linear_spectrum as spectrum
from .littlewood_paley import phi_profile

#: Lower cutoff of the log-axis quadrature; the omitted tail is bounded by
#: cutoff_lo^{2(sigma-sigma1)} which is far below every tolerance in use.
_XI_FLOOR = 1e-14
_GAUSS_ORDER = 10
_MAX_DOUBLINGS = 10

COMPONENTS = (
    "heat",
    "b1_density",
    "b1_longitudinal",
    "b2_u",
    "b2_pw",
    "b2_r",
    "relative_velocity",
)


class QuadratureError(RuntimeError):
    """Raised when panel doubling fails to reach the requested tolerance."""


@dataclass(frozen=True)
class RadialProfile:
    """Critically-scaled radial data profile with a hard upper cutoff."""

    sigma1: float
    d: int = 2
    cutoff_hi: float = 1.0

    def __post_init__(self):
        if not -self.d / 2.0 <= self.sigma1 < self.d / 2.0 - 1.0:
            raise ValueError("sigma1 must lie in [-d/2, d/2 - 1)")
        if self.cutoff_hi <= 0:
            raise ValueError("cutoff_hi must be positive")

    def dyadic_block_norm(self, j: int) -> float:
        """Weighted block norm 2^{j sigma1} ||block_j of the profile||_{L^2}.

        Independent of j for blocks fully below the cutoff; used to verify
        the critical normalization of the data.
        """
        eta = np.geomspace(0.7, 8.0 / 3.0 + 0.1, 4001)
        xi = (2.0**j) * eta
        weight = phi_profile(eta) ** 2 * np.where(xi <= self.cutoff_hi, 1.0, 0.0)
        integrand = weight * eta ** (-2.0 * self.sigma1 - 1.0)
        val = np.trapezoid(integrand, eta)
        return float(np.sqrt(val))


@dataclass(frozen=True)
class DecayFit:
    """Fitted log-log decay rate over a time window."""

    sigma: float
    window: tuple[float, float]
    slope: float
    intercept: float
    r2: float

    def __post_init__(self):
        lo, hi = self.window
        if hi < 10.0 * lo:
            raise ValueError("fit window must span at least a decade")


def component_amplitude(component: str, xi, t: float, epsilon: float | None,
                        mu: float = 1.0):
    """|G(t, xi)| for the selected response; see the module mapping table."""
    xi = np.asarray(xi, dtype=float)
    if component == "heat":
        return np.exp(-t * xi**2)
    if epsilon is None:
        raise ValueError(f"component {component!r} requires epsilon")
    if component in ("b1_density", "b1_longitudinal", "relative_velocity"):
        a = spectrum.b1_generator(xi, epsilon)
        g = spectrum.mat2_exp(*(t * e for e in a))
        b1_row0 = np.abs(g[0] + g[1])
        b1_row1 = np.abs(g[2] + g[3])
        if component == "b1_density":
            return b1_row0
        if component == "b1_longitudinal":
            return b1_row1
    if component in ("b2_u", "b2_pw", "b2_r", "relative_velocity"):
        a = spectrum.b2_generator(xi, epsilon, mu)
        g = spectrum.mat2_exp(*(t * e for e in a))
        row_pw = g[0] + g[1]
        row_u = g[2] + g[3]
        if component == "b2_u":
            return np.abs(row_u)
        if component == "b2_pw":
            return np.abs(row_pw)
        if component == "b2_r":
            return np.abs(row_pw - epsilon * row_u)
        return np.sqrt(b1_row1**2 + np.abs(row_pw - epsilon * row_u) ** 2)
    raise ValueError(f"unknown component {component!r}")


def semigroup_norm(
    profile: RadialProfile,
    component: str,
    sigma: float,
    t: float,
    epsilon: float | None = None,
    mu: float = 1.0,
    rel_tol: float = 1e-8,
    return_nodes: bool = False,
):
    """Weighted L^2 norm of the selected response at time t.

    Requires sigma > sigma1 (integrability at xi = 0) and t > 0.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if sigma <= profile.sigma1:
        raise ValueError("sigma must exceed sigma1")
    power = 2.0 * (sigma - profile.sigma1)
    y_lo, y_hi = np.log(_XI_FLOOR), np.log(profile.cutoff_hi)
    nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_ORDER)

    def evaluate(n_panels: int) -> float:
        edges = np.linspace(y_lo, y_hi, n_panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1] - edges[0])
        y = (mid[:, None] + half * nodes[None, :]).ravel()
        w = np.broadcast_to(half * weights[None, :], (n_panels, _GAUSS_ORDER)).ravel()
        xi = np.exp(y)
        amp = component_amplitude(component, xi, t, epsilon, mu)
        return float(np.sum(w * xi**power * amp**2))

    n_panels = 16
    prev = evaluate(n_panels)
    for _ in range(_MAX_DOUBLINGS):
        n_panels *= 2
        cur = evaluate(n_panels)
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            if return_nodes:
                return float(np.sqrt(cur)), n_panels * _GAUSS_ORDER
            return float(np.sqrt(cur))
        prev = cur
    raise QuadratureError(
        f"no convergence to rel_tol={rel_tol} after {_MAX_DOUBLINGS} doublings"
    )


def loglog_fit(x, y) -> tuple[float, float, float]:
    """Least-squares slope/intercept/r^2 of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = ly - np.mean(ly)
    ss_tot = float(np.sum(total**2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), float(intercept), float(r2)


def fit_decay(
    profile: RadialProfile,
    component: str,
    sigma: float,
    window: tuple[float, float] = (10.0, 1e3),
    n_samples: int = 40,
    epsilon: float | None = None,
    mu: float = 1.0,
) -> DecayFit:
    """Fit the decay exponent of the component norm over a time window."""
    t_lo, t_hi = window
    ts = np.geomspace(t_lo, t_hi, n_samples)
    norms = [semigroup_norm(profile, component, sigma, t, epsilon, mu) for t in ts]
    slope, intercept, r2 = loglog_fit(ts, norms)
    return DecayFit(sigma=sigma, window=(t_lo, t_hi), slope=slope,
                    intercept=intercept, r2=r2)
