"""Dyadic frequency decomposition and discrete homogeneous Besov norms.

Blocks are defined through a fixed radial profile pair (chi, phi):
chi is 1 on |xi| <= 3/4, 0 on |xi| >= 4/3, with a quintic smoothstep edge
(the exact edge shape is a documented constant of this package), and
phi(xi) = chi(xi/2) - chi(xi), supported on 3/4 <= |xi| <= 8/3.  By
telescoping, sum_j phi(2^-j xi) = 1 for every nonzero frequency the grid
resolves, provided the block range [j_min, j_max] is chosen as below.

The zero mode belongs to no block; split_low_high assigns it to the low
part so the two parts always reconstruct the field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .spectral_grid import Grid, SpectralField

#: Annulus radii fixed by the profile construction.
RING_INNER = 0.75
RING_OUTER = 8.0 / 3.0
_CHI_FLAT = 0.75
_CHI_SUPPORT = 4.0 / 3.0


def _smoothstep(t: np.ndarray) -> np.ndarray:
    """Quintic smoothstep: 0 for t <= 0, 1 for t >= 1, C^2 in between."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def chi_profile(r: np.ndarray) -> np.ndarray:
    """Radial low-pass profile: 1 on r <= 3/4, 0 on r >= 4/3."""
    r = np.asarray(r, dtype=float)
    return 1.0 - _smoothstep((r - _CHI_FLAT) / (_CHI_SUPPORT - _CHI_FLAT))


def phi_profile(r: np.ndarray) -> np.ndarray:
    """Radial annulus profile phi(r) = chi(r/2) - chi(r)."""
    return chi_profile(np.asarray(r, dtype=float) / 2.0) - chi_profile(r)


@dataclass(frozen=True)
class BesovSpec:
    """Regularity s, summation exponent r in {1, inf}, band selector."""

    s: float
    r: float = 1
    band: str = "all"

    def __post_init__(self):
        if not math.isfinite(self.s):
            raise ValueError("regularity exponent must be finite")
        if self.r not in (1, math.inf):
            raise ValueError("summation exponent must be 1 or inf")
        if self.band not in ("all", "low", "high"):
            raise ValueError(f"unknown band {self.band!r}")


@dataclass(frozen=True)
class ThresholdConfig:
    """Relaxation parameter and offset fixing the low/high frequency split."""

    epsilon: float
    m0: int = 2

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")

    @property
    def j_threshold(self) -> int:
        """Block index J = -floor(log2 eps) - m0, so 2^J ~ 1/eps."""
        return -math.floor(math.log2(self.epsilon)) - self.m0


class DyadicDecomposition:
    """Family of annulus multipliers covering a grid's nonzero frequencies."""

    def __init__(self, grid: Grid):
        self.grid = grid
        xi_min = 2.0 * np.pi / grid.domain_length
        xi_max = float(np.max(grid.xi_norm))
        # Lowest block: chi(2^-j xi) must vanish at every nonzero frequency.
        self.j_min = math.floor(math.log2(RING_INNER * xi_min))
        # Highest block: chi(2^-(j+1) xi) must equal 1 at the grid corner.
        self.j_max = math.ceil(math.log2(xi_max / RING_INNER)) - 1
        js = np.arange(self.j_min, self.j_max + 1)
        r = grid.xi_norm[np.newaxis] * (2.0 ** (-js))[:, np.newaxis, np.newaxis]
        self._profiles = phi_profile(r)
        self._profiles_sq = self._profiles**2

    @property
    def n_blocks(self) -> int:
        return self.j_max - self.j_min + 1

    @property
    def block_range(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def profile(self, j: int) -> np.ndarray:
        self._check_j(j)
        return self._profiles[j - self.j_min]

    def partition_residual(self) -> float:
        """max over nonzero grid frequencies of |sum_j phi_j - 1|."""
        total = np.sum(self._profiles, axis=0)
        total[0, 0] = 1.0
        return float(np.max(np.abs(total - 1.0)))

    def _check_j(self, j: int):
        if not self.j_min <= j <= self.j_max:
            raise ValueError(f"block index {j} outside [{self.j_min}, {self.j_max}]")

    def _check_threshold(self, threshold: ThresholdConfig) -> int:
        j = threshold.j_threshold
        if not self.j_min <= j <= self.j_max + 1:
            raise ValueError(
                f"threshold block {j} outside resolvable range "
                f"[{self.j_min}, {self.j_max + 1}]"
            )
        return j

    def block(self, f: SpectralField, j: int) -> SpectralField:
        """Dyadic block: multiply each mode by phi(2^-j xi)."""
        return f.with_data(f.data * self.profile(j))

    def block_l2_norms(self, f: SpectralField) -> np.ndarray:
        """L^2 norms of all blocks at once, shape (n_blocks,)."""
        power = np.sum(np.abs(f.data) ** 2, axis=0)
        scale = f.grid.domain_length ** (f.grid.dim / 2.0)
        return scale * np.sqrt(np.tensordot(self._profiles_sq, power, axes=2))

    def _band_slice(self, spec: BesovSpec, threshold: ThresholdConfig | None) -> slice:
        if spec.band == "all":
            return slice(0, self.n_blocks)
        if threshold is None:
            raise ValueError(f"band {spec.band!r} requires a ThresholdConfig")
        j = self._check_threshold(threshold)
        if spec.band == "low":
            return slice(0, min(j, self.j_max) - self.j_min + 1)
        return slice(max(j - 1, self.j_min) - self.j_min, self.n_blocks)

    def besov_norm(
        self,
        f: SpectralField,
        spec: BesovSpec,
        threshold: ThresholdConfig | None = None,
    ) -> float:
        """Homogeneous Besov norm: l^r over j of 2^{js} ||block_j||_{L^2}."""
        norms = self.block_l2_norms(f)
        return self._aggregate(norms, spec, threshold)

    def _aggregate(
        self,
        block_norms: np.ndarray,
        spec: BesovSpec,
        threshold: ThresholdConfig | None,
    ) -> float:
        sel = self._band_slice(spec, threshold)
        js = np.arange(self.j_min, self.j_max + 1)[sel]
        weighted = 2.0 ** (js * spec.s) * block_norms[sel]
        if weighted.size == 0:
            return 0.0
        return float(np.sum(weighted)) if spec.r == 1 else float(np.max(weighted))

    def chemin_lerner_norm(
        self,
        times: np.ndarray,
        fields: list[SpectralField],
        spec: BesovSpec,
        rho: float,
        threshold: ThresholdConfig | None = None,
    ) -> float:
        """Time-integrated norm: per-block L^rho in time, then l^r in j.

        Time integrals use trapezoidal quadrature on the (uniform) sample
        grid; rho must be 1, 2, or inf.
        """
        times = np.asarray(times, dtype=float)
        if times.size < 2:
            raise ValueError("chemin_lerner_norm needs at least 2 time samples")
        steps = np.diff(times)
        if np.max(np.abs(steps - steps[0])) > 1e-9 * max(steps[0], 1e-300):
            raise ValueError("time samples must be uniformly spaced")
        if rho not in (1, 2, math.inf):
            raise ValueError("time exponent rho must be 1, 2, or inf")
        series = np.stack([self.block_l2_norms(f) for f in fields])  # (nt, nblocks)
        if rho == math.inf:
            per_block = np.max(series, axis=0)
        elif rho == 1:
            per_block = np.trapezoid(series, times, axis=0)
        else:
            per_block = np.sqrt(np.trapezoid(series**2, times, axis=0))
        return self._aggregate(per_block, spec, threshold)

    def split_low_high(
        self, f: SpectralField, threshold: ThresholdConfig
    ) -> tuple[SpectralField, SpectralField]:
        """Split into sum_{j <= J-1} block_j (plus the zero mode) and the rest."""
        j = self._check_threshold(threshold)
        n_low = j - self.j_min  # blocks j_min .. J-1
        high_mult = np.sum(self._profiles[n_low:], axis=0)
        low_mult = np.sum(self._profiles[:n_low], axis=0)
        low_mult[0, 0] = 1.0  # zero mode rides with the low part
        return f.with_data(f.data * low_mult), f.with_data(f.data * high_mult)

    def sum_space_norm(self, f: SpectralField, s1: float, s2: float) -> float:
        """Norm of the sum space B^{s1}_{2,1} + B^{s2}_{2,1}.

        For block-diagonal decompositions the infimum over splittings is
        attained blockwise: each block goes to whichever space weights it
        less, giving sum_j min(2^{j s1}, 2^{j s2}) ||block_j||.
        """
        norms = self.block_l2_norms(f)
        js = np.arange(self.j_min, self.j_max + 1)
        weights = np.minimum(2.0 ** (js * s1), 2.0 ** (js * s2))
        return float(np.sum(weights * norms))
