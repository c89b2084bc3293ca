"""Periodic-torus spectral grid, transforms, differential operators, projectors.

Fields live in Fourier space.  The coefficient convention, fixed once for the
whole package and asserted by the Parseval test, is

    f(x) = sum_k c(k) exp(i xi_k . x),      xi_k = (2 pi / L) k,

i.e. coefficients are the unnormalized FFT divided by n^d.  With this
convention ``||f||_{L^2(torus)}^2 = L^d * sum_k |c(k)|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np


class DimensionMismatchError(ValueError):
    """Raised when field shapes or component counts do not match the grid."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, L)^2.

    ``n_per_dim`` must be a power of two >= 8.  Mode index k runs over the
    standard FFT ordering; the Nyquist row carries k = -n/2.
    """

    n_per_dim: int
    domain_length: float = 2.0 * np.pi
    dim: int = 2

    def __post_init__(self):
        n = self.n_per_dim
        if n < 8 or (n & (n - 1)) != 0:
            raise ValueError(f"n_per_dim must be a power of two >= 8, got {n}")
        if self.dim != 2:
            raise ValueError("only dim = 2 grids are supported for simulation")
        if self.domain_length <= 0:
            raise ValueError("domain_length must be positive")

    @property
    def shape(self):
        return (self.n_per_dim,) * self.dim

    @property
    def dx(self) -> float:
        return self.domain_length / self.n_per_dim

    @cached_property
    def k_int(self) -> np.ndarray:
        """Integer mode numbers per axis, FFT ordering, shape (dim, n, n)."""
        n = self.n_per_dim
        k1 = np.fft.fftfreq(n, d=1.0 / n)
        kx, ky = np.meshgrid(k1, k1, indexing="ij")
        return np.stack([kx, ky])

    @cached_property
    def xi(self) -> np.ndarray:
        """Physical frequencies xi = 2 pi k / L, shape (dim, n, n)."""
        return (2.0 * np.pi / self.domain_length) * self.k_int

    @cached_property
    def xi_sq(self) -> np.ndarray:
        return np.sum(self.xi**2, axis=0)

    @cached_property
    def xi_norm(self) -> np.ndarray:
        return np.sqrt(self.xi_sq)

    @cached_property
    def unit_xi(self) -> np.ndarray:
        """xi / |xi| with the zero mode set to the zero vector."""
        denom = self.xi_norm.copy()
        denom[0, 0] = 1.0
        return self.xi / denom

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep |k| < n/3 per axis (Nyquist always dropped)."""
        n = self.n_per_dim
        keep = np.abs(self.k_int) < (n / 3.0)
        return np.logical_and.reduce(keep, axis=0)

    @cached_property
    def coords(self) -> np.ndarray:
        """Physical coordinates, shape (dim, n, n)."""
        n = self.n_per_dim
        x1 = np.arange(n) * self.dx
        xx, yy = np.meshgrid(x1, x1, indexing="ij")
        return np.stack([xx, yy])

    @cached_property
    def _herm_index(self) -> np.ndarray:
        return (-np.arange(self.n_per_dim)) % self.n_per_dim


@dataclass(frozen=True)
class SpectralField:
    """Immutable bundle of Fourier coefficients on a grid.

    ``data`` has shape (ncomp, n, n); ncomp is 1 for scalars and dim for
    vectors.  ``parity = "real"`` asserts the physical-space field is real,
    i.e. coefficients are Hermitian-symmetric.  Fields produced by nonlinear
    (pointwise) operations are dealiased, which zeroes the Nyquist rows;
    purely linear per-mode operations preserve whatever band the input has.
    """

    grid: Grid
    data: np.ndarray
    parity: str = "real"

    def __post_init__(self):
        if self.data.ndim != self.grid.dim + 1 or self.data.shape[1:] != self.grid.shape:
            raise DimensionMismatchError(
                f"data shape {self.data.shape} does not match grid {self.grid.shape}"
            )
        if self.data.shape[0] not in (1, self.grid.dim):
            raise DimensionMismatchError(
                f"component count must be 1 or {self.grid.dim}, got {self.data.shape[0]}"
            )
        self.data.flags.writeable = False

    @property
    def ncomp(self) -> int:
        return self.data.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.ncomp == 1

    @property
    def is_vector(self) -> bool:
        return self.ncomp == self.grid.dim

    @classmethod
    def zero(cls, grid: Grid, ncomp: int = 1) -> "SpectralField":
        return cls(grid, np.zeros((ncomp,) + grid.shape, dtype=complex))

    def with_data(self, data: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, data, self.parity)

    def copy(self) -> "SpectralField":
        return self.with_data(self.data.copy())

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.grid, self.data[i : i + 1].copy(), self.parity)

    def to_physical(self) -> np.ndarray:
        """Inverse transform; returns real samples for parity="real" fields."""
        n = self.grid.n_per_dim
        values = np.fft.ifft2(self.data, axes=(-2, -1)) * (n**self.grid.dim)
        if self.parity == "real":
            values = values.real
        out = values[0] if self.is_scalar else values
        return out

    def l2_norm(self) -> float:
        """L^2(torus) norm, all components combined."""
        scale = self.grid.domain_length ** (self.grid.dim / 2.0)
        return scale * float(np.sqrt(np.sum(np.abs(self.data) ** 2)))

    def mean(self):
        """Spatial mean per component (the k = 0 coefficient)."""
        m = self.data[:, 0, 0]
        if self.parity == "real":
            m = m.real
        return m[0] if self.is_scalar else m

    def dealiased(self) -> "SpectralField":
        return self.with_data(self.data * self.grid.dealias_mask)

    def hermitian_symmetrized(self) -> "SpectralField":
        return self.with_data(0.5 * (self.data + self._conj_flip()))

    def hermitian_residual(self) -> float:
        """max_k |c(-k) - conj(c(k))| relative to the largest coefficient."""
        scale = max(float(np.max(np.abs(self.data))), 1e-300)
        return float(np.max(np.abs(self.data - self._conj_flip()))) / scale

    def _conj_flip(self) -> np.ndarray:
        idx = self.grid._herm_index
        return np.conj(self.data[:, idx][:, :, idx])

    # Small algebra helpers; these are linear, so parity and band survive.
    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return self.with_data(self.data + other.data)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return self.with_data(self.data - other.data)

    def __mul__(self, scalar: float) -> "SpectralField":
        return self.with_data(self.data * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self.with_data(-self.data)

    def _check_compatible(self, other: "SpectralField"):
        if self.grid is not other.grid and self.grid != other.grid:
            raise DimensionMismatchError("fields live on different grids")
        if self.ncomp != other.ncomp:
            raise DimensionMismatchError("component counts differ")


def transform_forward(grid: Grid, values: np.ndarray) -> SpectralField:
    """Physical samples -> SpectralField.  values: (n, n) or (ncomp, n, n)."""
    arr = np.asarray(values)
    if arr.ndim == grid.dim:
        arr = arr[np.newaxis]
    if arr.shape[1:] != grid.shape:
        raise DimensionMismatchError(
            f"sample shape {arr.shape} does not match grid {grid.shape}"
        )
    parity = "real" if np.isrealobj(values) else "complex"
    coeff = np.fft.fft2(arr, axes=(-2, -1)) / (grid.n_per_dim**grid.dim)
    return SpectralField(grid, coeff, parity)


def transform_inverse(f: SpectralField) -> np.ndarray:
    return f.to_physical()


def gradient(f: SpectralField) -> SpectralField:
    """Gradient of a scalar: component m carries i*xi_m*c(k)."""
    if not f.is_scalar:
        raise DimensionMismatchError("gradient expects a scalar field")
    data = 1j * f.grid.xi * f.data[0]
    return SpectralField(f.grid, data, f.parity)


def divergence(v: SpectralField) -> SpectralField:
    if not v.is_vector:
        raise DimensionMismatchError("divergence expects a vector field")
    data = np.sum(1j * v.grid.xi * v.data, axis=0)[np.newaxis]
    return SpectralField(v.grid, data, v.parity)


def laplacian(f: SpectralField) -> SpectralField:
    return f.with_data(-f.grid.xi_sq * f.data)


def project_leray(v: SpectralField) -> SpectralField:
    """Divergence-free projection, applied per mode; zero mode is untouched."""
    if not v.is_vector:
        raise DimensionMismatchError("project_leray expects a vector field")
    xi_hat = v.grid.unit_xi
    parallel = np.sum(xi_hat * v.data, axis=0)
    return v.with_data(v.data - xi_hat * parallel)


def project_compressible(v: SpectralField) -> SpectralField:
    """Complementary (gradient-part) projection; zero mode maps to zero."""
    if not v.is_vector:
        raise DimensionMismatchError("project_compressible expects a vector field")
    xi_hat = v.grid.unit_xi
    parallel = np.sum(xi_hat * v.data, axis=0)
    return v.with_data(xi_hat * parallel)


def refined_physical(f: SpectralField, pad: int) -> np.ndarray:
    """Physical samples on a pad-times finer grid (zero-padded spectrum)."""
    n = f.grid.n_per_dim
    fine_n = pad * n
    k = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    fine = np.zeros((f.ncomp, fine_n, fine_n), dtype=complex)
    fine[np.ix_(range(f.ncomp), k % fine_n, k % fine_n)] = f.data
    values = np.fft.ifft2(fine, axes=(-2, -1)) * fine_n**f.grid.dim
    if f.parity == "real":
        values = values.real
    return values[0] if f.is_scalar else values


def restrict_to_grid(grid: Grid, fine_values: np.ndarray) -> SpectralField:
    """Transform fine-grid samples and keep the coarse grid's modes."""
    arr = np.asarray(fine_values)
    if arr.ndim == grid.dim:
        arr = arr[np.newaxis]
    fine_n = arr.shape[-1]
    coeff = np.fft.fft2(arr, axes=(-2, -1)) / fine_n**grid.dim
    k = np.fft.fftfreq(grid.n_per_dim, d=1.0 / grid.n_per_dim).astype(int)
    data = coeff[np.ix_(range(arr.shape[0]), k % fine_n, k % fine_n)]
    parity = "real" if np.isrealobj(fine_values) else "complex"
    return SpectralField(grid, data, parity)


def apply_pointwise(func, *fields: SpectralField, dealias: bool = True,
                    pad: int = 1) -> SpectralField:
    """Evaluate func on physical samples of the inputs; transform back.

    This is the pseudo-spectral product path: the result is dealiased by
    the 2/3 rule (which also zeroes the Nyquist rows) unless disabled.
    ``pad > 1`` evaluates on a zero-padded finer grid before restricting,
    which removes the residual aliasing of triple-and-higher composites
    (the solver itself runs with the plain 2/3 contract; padding is used
    by identity checks that need composite products alias-free).
    """
    grid = fields[0].grid
    if pad == 1:
        samples = [f.to_physical() for f in fields]
        result = transform_forward(grid, np.asarray(func(*samples)))
    else:
        samples = [refined_physical(f, pad) for f in fields]
        result = restrict_to_grid(grid, np.asarray(func(*samples)))
    return result.dealiased() if dealias else result


def pointwise_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased pseudo-spectral product (scalar*scalar or scalar*vector)."""
    if f.is_scalar:
        return apply_pointwise(lambda a, b: a * b, f, g)
    if g.is_scalar:
        return apply_pointwise(lambda a, b: a * b, g, f)
    raise DimensionMismatchError("pointwise_product needs at least one scalar factor")
