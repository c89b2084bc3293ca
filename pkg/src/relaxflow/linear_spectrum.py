"""Exact per-frequency eigenvalues and propagators of the linearized system.

Per Fourier mode the linearization splits into two 2x2 blocks:

* compressible block, acting on (density amplitude a, longitudinal
  velocity amplitude m = xi/|xi| . w):

      B1(xi) = [[0,        i|xi|/eps],
                [i|xi|/eps, 1/eps^2 ]]

* two-phase coupling block, acting componentwise on (transverse velocity
  Pw, incompressible velocity u):

      B2(xi) = [[1/eps^2, -1/eps        ],
                [-1/eps,   1 + mu|xi|^2 ]]

The d-1 transverse directions of the compressible block are damped at the
flat rate lambda0 = -1/eps^2.  Propagators are exact matrix exponentials
exp(-t B) evaluated in the trace/deviator (Cayley-Hamilton) form, which
needs no eigenvector inversion and stays accurate through the degenerate
double-root ring 4 eps^2 |xi|^2 = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Regime boundaries used by the asymptotic expansions.
LOW_REGIME_MAX = 0.25
HIGH_REGIME_MIN = 4.0

#: Below this |z| the scalar phi functions switch to their Taylor series.
_SERIES_CUTOFF = 0.1
#: Below this eigenvalue gap the divided differences switch to derivatives.
_DEGENERATE_GAP = 1e-3


@dataclass(frozen=True)
class SymbolPoint:
    """One frequency sample of the symbol: |xi|, eps, mu, dimension."""

    xi_norm: float
    epsilon: float
    mu: float = 1.0
    d: int = 2

    def __post_init__(self):
        if self.xi_norm < 0 or not np.isfinite(self.xi_norm):
            raise ValueError("xi_norm must be finite and nonnegative")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.d < 2:
            raise ValueError("dimension must be >= 2")


@dataclass(frozen=True)
class SymbolEigenSet:
    """Eigenvalues of both blocks at one frequency.

    lambda0 has multiplicity d-1 (transverse compressible directions),
    lambda1/lambda2 are the compressible pair (lambda1 = slow branch),
    lambda3/lambda4 the coupling pair with multiplicity d each
    (lambda3 = slow branch).
    """

    lambda0: complex
    lambda1: complex
    lambda2: complex
    lambda3: complex
    lambda4: complex


def _b1_pair(eps: float, xi: float) -> tuple[complex, complex]:
    """Roots of lam^2 + lam/eps^2 + xi^2/eps^2, slow root first.

    The slow root is recovered from the product of roots (Vieta) to avoid
    the cancellation in -1 + sqrt(1 - 4 eps^2 xi^2) near xi = 0.
    """
    disc = 1.0 - 4.0 * eps**2 * xi**2
    if disc >= 0.0:
        lam2 = -(1.0 + np.sqrt(disc)) / (2.0 * eps**2)
        lam1 = (xi**2 / eps**2) / lam2 if xi > 0.0 else 0.0
        return complex(lam1), complex(lam2)
    im = np.sqrt(-disc) / (2.0 * eps**2)
    re = -1.0 / (2.0 * eps**2)
    # Equal real parts; the slow label takes the +Im branch.
    return complex(re, im), complex(re, -im)


def _b2_pair(eps: float, mu: float, xi: float) -> tuple[complex, complex]:
    """Roots of lam^2 + S lam + mu xi^2/eps^2, S = 1/eps^2 + 1 + mu xi^2.

    The discriminant S^2 - 4 mu xi^2 / eps^2 is strictly positive for all
    parameters, so both roots are real; the slow root again comes from the
    product of roots.
    """
    s_coef = 1.0 / eps**2 + 1.0 + mu * xi**2
    disc = s_coef**2 - 4.0 * mu * xi**2 / eps**2
    lam4 = -(s_coef + np.sqrt(disc)) / 2.0
    lam3 = (mu * xi**2 / eps**2) / lam4 if xi > 0.0 else 0.0
    return complex(lam3), complex(lam4)


def eigenvalues(p: SymbolPoint) -> SymbolEigenSet:
    """Closed-form eigenvalues of both blocks at the sample point."""
    lam1, lam2 = _b1_pair(p.epsilon, p.xi_norm)
    lam3, lam4 = _b2_pair(p.epsilon, p.mu, p.xi_norm)
    return SymbolEigenSet(
        lambda0=complex(-1.0 / p.epsilon**2),
        lambda1=lam1,
        lambda2=lam2,
        lambda3=lam3,
        lambda4=lam4,
    )


def asymptotic_eigenvalues(p: SymbolPoint, regime: str) -> SymbolEigenSet:
    """Leading expansions in the low (eps|xi| <= 1/4) or high (>= 4) regime."""
    eps, mu, xi = p.epsilon, p.mu, p.xi_norm
    prod = eps * xi
    if regime == "low":
        if prod > LOW_REGIME_MAX:
            raise ValueError(f"low regime requires eps*|xi| <= {LOW_REGIME_MAX}")
        return SymbolEigenSet(
            lambda0=complex(-1.0 / eps**2),
            lambda1=complex(-(xi**2)),
            lambda2=complex(-1.0 / eps**2 + xi**2),
            lambda3=complex(-mu * xi**2 / (1.0 + eps**2)),
            lambda4=complex(-(1.0 + 1.0 / eps**2) - mu * eps**2 * xi**2 / (1.0 + eps**2)),
        )
    if regime == "high":
        if prod < HIGH_REGIME_MIN:
            raise ValueError(f"high regime requires eps*|xi| >= {HIGH_REGIME_MIN}")
        return SymbolEigenSet(
            lambda0=complex(-1.0 / eps**2),
            lambda1=complex(-0.5 / eps**2, xi / eps),
            lambda2=complex(-0.5 / eps**2, -xi / eps),
            lambda3=complex(-1.0 / eps**2),
            lambda4=complex(-1.0 - mu * xi**2),
        )
    raise ValueError(f"unknown regime {regime!r}")


# ---------------------------------------------------------------------------
# Scalar phi functions (stable for both tiny and large |z|)
# ---------------------------------------------------------------------------

def phi1(z):
    """(e^z - 1)/z, with phi1(0) = 1."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _SERIES_CUTOFF
    zs = np.where(small, 1.0, z)
    direct = (np.exp(zs) - 1.0) / zs
    series = 1 + z / 2 + z**2 / 6 + z**3 / 24 + z**4 / 120 + z**5 / 720 + z**6 / 5040
    return np.where(small, series, direct)


def phi2(z):
    """(e^z - 1 - z)/z^2, with phi2(0) = 1/2."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _SERIES_CUTOFF
    zs = np.where(small, 1.0, z)
    direct = (np.exp(zs) - 1.0 - zs) / zs**2
    series = 0.5 + z / 6 + z**2 / 24 + z**3 / 120 + z**4 / 720 + z**5 / 5040
    return np.where(small, series, direct)


def _phi1_prime(z):
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _SERIES_CUTOFF
    zs = np.where(small, 1.0, z)
    direct = ((zs - 1.0) * np.exp(zs) + 1.0) / zs**2
    series = 0.5 + z / 3 + z**2 / 8 + z**3 / 30 + z**4 / 144
    return np.where(small, series, direct)


def _phi2_prime(z):
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _SERIES_CUTOFF
    zs = np.where(small, 1.0, z)
    direct = ((zs - 2.0) * np.exp(zs) + zs + 2.0) / zs**3
    series = 1.0 / 6 + z / 12 + z**2 / 40 + z**3 / 180 + z**4 / 1008
    return np.where(small, series, direct)


def _sinhc(q):
    """sinh(q)/q with a series branch near q = 0."""
    q = np.asarray(q, dtype=complex)
    small = np.abs(q) < _SERIES_CUTOFF
    qs = np.where(small, 1.0, q)
    direct = np.sinh(qs) / qs
    q2 = q * q
    series = 1 + q2 / 6 * (1 + q2 / 20 * (1 + q2 / 42 * (1 + q2 / 72)))
    return np.where(small, series, direct)


# ---------------------------------------------------------------------------
# 2x2 matrix functions in trace/deviator form
# ---------------------------------------------------------------------------

def mat2_exp(x00, x01, x10, x11):
    """exp(X) entrywise for a (broadcast) family of 2x2 matrices.

    Uses exp(X) = alpha I + beta (X - s I) with s = tr X / 2,
    beta = e^s sinh(q)/q, alpha = (e^{m1} + e^{m2})/2, where m1, m2 = s +- q
    are the eigenvalues.  All exponentials are of eigenvalues directly, so
    nothing overflows when the spectrum sits in the stable half plane, and
    the sinh(q)/q series keeps the double-root ring exact.
    """
    x00, x01, x10, x11 = np.broadcast_arrays(
        *(np.asarray(a, dtype=complex) for a in (x00, x01, x10, x11))
    )
    s = 0.5 * (x00 + x11)
    det = x00 * x11 - x01 * x10
    q = np.sqrt(s * s - det)
    em1 = np.exp(s + q)
    em2 = np.exp(s - q)
    alpha = 0.5 * (em1 + em2)
    small = np.abs(q) < _SERIES_CUTOFF
    qs = np.where(small, 1.0, q)
    # Evaluate each branch only on its own lanes (sinh overflows off-branch).
    beta = np.where(small, np.exp(s) * _sinhc(np.where(small, q, 0.0)),
                    0.5 * (em1 - em2) / qs)
    return (
        alpha + beta * (x00 - s),
        beta * x01,
        beta * x10,
        alpha + beta * (x11 - s),
    )


_SCALAR_FUNCS = {
    "exp": (np.exp, np.exp),
    "phi1": (phi1, _phi1_prime),
    "phi2": (phi2, _phi2_prime),
}


def mat2_func(name: str, x00, x01, x10, x11):
    """f(X) for f in {exp, phi1, phi2} on a family of 2x2 matrices.

    Evaluates f(X) = alpha I + beta (X - s I) with beta the divided
    difference of f over the eigenvalues, switching to f'(s) when the
    eigenvalue gap is below a fixed threshold (the phi functions have
    derivatives bounded by 1 on the stable half plane, so the switch
    costs at most O(gap^2)).
    """
    if name == "exp":
        return mat2_exp(x00, x01, x10, x11)
    f, fprime = _SCALAR_FUNCS[name]
    x00, x01, x10, x11 = np.broadcast_arrays(
        *(np.asarray(a, dtype=complex) for a in (x00, x01, x10, x11))
    )
    s = 0.5 * (x00 + x11)
    det = x00 * x11 - x01 * x10
    q = np.sqrt(s * s - det)
    m1 = s + q
    m2 = s - q
    fm1 = f(m1)
    fm2 = f(m2)
    degenerate = np.abs(m1 - m2) < _DEGENERATE_GAP
    gap = np.where(degenerate, 1.0, m1 - m2)
    beta = np.where(degenerate, fprime(s), (fm1 - fm2) / gap)
    alpha = 0.5 * (fm1 + fm2)
    return (
        alpha + beta * (x00 - s),
        beta * x01,
        beta * x10,
        alpha + beta * (x11 - s),
    )


def b1_generator(xi_norm, epsilon: float):
    """Entries of -B1(xi): the generator of the compressible block flow."""
    xi_norm = np.asarray(xi_norm, dtype=float)
    q = xi_norm / epsilon
    zero = np.zeros_like(xi_norm, dtype=complex)
    return (zero, -1j * q, -1j * q, zero - 1.0 / epsilon**2)


def b2_generator(xi_norm, epsilon: float, mu: float):
    """Entries of -B2(xi): the generator of the coupling block flow."""
    xi_norm = np.asarray(xi_norm, dtype=float)
    zero = np.zeros_like(xi_norm, dtype=complex)
    return (
        zero - 1.0 / epsilon**2,
        zero + 1.0 / epsilon,
        zero + 1.0 / epsilon,
        -(1.0 + mu * xi_norm**2) + zero,
    )


def _as_matrix(entries) -> np.ndarray:
    return np.array([[complex(entries[0]), complex(entries[1])],
                     [complex(entries[2]), complex(entries[3])]])


def propagator_B1(p: SymbolPoint, t: float) -> np.ndarray:
    """exp(-t B1) acting on (density amplitude, longitudinal velocity)."""
    a00, a01, a10, a11 = b1_generator(p.xi_norm, p.epsilon)
    return _as_matrix(mat2_exp(t * a00, t * a01, t * a10, t * a11))


def propagator_B2(p: SymbolPoint, t: float) -> np.ndarray:
    """exp(-t B2) acting componentwise on (transverse velocity, u)."""
    a00, a01, a10, a11 = b2_generator(p.xi_norm, p.epsilon, p.mu)
    return _as_matrix(mat2_exp(t * a00, t * a01, t * a10, t * a11))
