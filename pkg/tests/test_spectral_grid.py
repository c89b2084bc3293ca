"""Transforms, spectral operators, and projector contracts."""

import numpy as np
import pytest

from relaxflow.spectral_grid import (
    DimensionMismatchError,
    Grid,
    SpectralField,
    apply_pointwise,
    divergence,
    gradient,
    laplacian,
    project_compressible,
    project_leray,
    refined_physical,
    transform_forward,
    transform_inverse,
)


@pytest.fixture
def grid():
    return Grid(n_per_dim=32)


def random_field(grid, rng, ncomp=1, kmax=None, div_free=False):
    """Band-limited random real field (content within the dealias band)."""
    kmax = kmax if kmax is not None else grid.n_per_dim // 4
    data = np.zeros((ncomp,) + grid.shape, dtype=complex)
    k_norm = np.sqrt(np.sum(grid.k_int**2, axis=0))
    mask = (k_norm > 0) & (k_norm <= kmax)
    for c in range(ncomp):
        data[c][mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(
            mask.sum()
        )
    f = SpectralField(grid, data).hermitian_symmetrized()
    return project_leray(f) if div_free else f


class TestTransforms:
    def test_constant_maps_to_dc_mode(self, grid):
        f = transform_forward(grid, np.ones(grid.shape))
        assert abs(f.data[0, 0, 0] - 1.0) < 1e-14
        rest = f.data.copy()
        rest[0, 0, 0] = 0.0
        assert np.max(np.abs(rest)) < 1e-14

    def test_single_harmonic_two_conjugate_modes(self, grid):
        x = grid.coords[0]
        f = transform_forward(grid, np.sin(2 * np.pi * x / grid.domain_length))
        expected = np.zeros(grid.shape, dtype=complex)
        expected[1, 0] = -0.5j
        expected[-1, 0] = 0.5j
        assert np.max(np.abs(f.data[0] - expected)) < 1e-14

    def test_roundtrip_against_direct_dft_at_n8(self):
        # Oracle: direct DFT summation, frozen convention c_k = sum f e^{-i xi x} / n^d.
        grid = Grid(n_per_dim=8)
        rng = np.random.default_rng(0)
        values = rng.standard_normal(grid.shape)
        f = transform_forward(grid, values)

        n = grid.n_per_dim
        direct = np.zeros(grid.shape, dtype=complex)
        x = grid.coords
        for i in range(n):
            for j in range(n):
                xi = grid.xi[:, i, j]
                phase = np.exp(-1j * (xi[0] * x[0] + xi[1] * x[1]))
                direct[i, j] = np.sum(values * phase) / n**2
        assert np.max(np.abs(f.data[0] - direct)) < 1e-12

        back = transform_inverse(f)
        assert np.max(np.abs(back - values)) / np.max(np.abs(values)) < 1e-12

    def test_sample_count_mismatch_raises(self, grid):
        with pytest.raises(DimensionMismatchError):
            transform_forward(grid, np.ones((grid.n_per_dim, grid.n_per_dim + 1)))

    def test_hermitian_symmetry_of_real_transforms(self, grid):
        rng = np.random.default_rng(1)
        f = transform_forward(grid, rng.standard_normal(grid.shape))
        assert f.hermitian_residual() < 1e-12


def fd4_derivative(values, axis, h):
    """4th-order centered finite difference on a periodic axis."""
    return (
        -np.roll(values, -2, axis=axis)
        + 8.0 * np.roll(values, -1, axis=axis)
        - 8.0 * np.roll(values, 1, axis=axis)
        + np.roll(values, 2, axis=axis)
    ) / (12.0 * h)


class TestDerivatives:
    def test_gradient_of_harmonic(self, grid):
        L = grid.domain_length
        x = grid.coords[0]
        f = transform_forward(grid, np.sin(2 * np.pi * x / L))
        g = gradient(f).to_physical()
        expected = (2 * np.pi / L) * np.cos(2 * np.pi * x / L)
        assert np.max(np.abs(g[0] - expected)) < 1e-12
        assert np.max(np.abs(g[1])) < 1e-12

    def test_gradient_of_constant_is_zero(self, grid):
        f = transform_forward(grid, np.full(grid.shape, 2.5))
        assert np.max(np.abs(gradient(f).data)) < 1e-14

    def test_gradient_matches_fd_oracle_on_refined_grid(self, grid):
        # Oracle: 4th-order centered differences of the exact band-limited
        # interpolant on a 4x refined grid, restricted to coarse points.
        rng = np.random.default_rng(2)
        f = random_field(grid, rng, kmax=5)
        pad = 4
        h = grid.dx / pad
        fine = refined_physical(f, pad)
        for axis in range(2):
            fd = fd4_derivative(fine, axis, h)[::pad, ::pad]
            spectral = gradient(f).to_physical()[axis]
            err = np.max(np.abs(fd - spectral))
            # 4th-order bound: |f^(5)| h^4 / 30 with |f^(5)| <= kmax^5 * amp.
            bound = (5**5) * np.max(np.abs(fine)) * h**4 / 30.0 * 4.0
            assert err < bound
            # Refinement by 2 shrinks the defect ~16x (oracle is the moving part).
            fine8 = refined_physical(f, 2 * pad)
            fd8 = fd4_derivative(fine8, axis, h / 2)[:: 2 * pad, :: 2 * pad]
            err8 = np.max(np.abs(fd8 - spectral))
            assert err8 < err / 12.0

    def test_gradient_requires_scalar(self, grid):
        with pytest.raises(DimensionMismatchError):
            gradient(SpectralField.zero(grid, 2))

    def test_divergence_of_gradient_is_laplacian(self, grid):
        rng = np.random.default_rng(3)
        f = random_field(grid, rng)
        lhs = divergence(gradient(f))
        rhs = laplacian(f)
        assert np.max(np.abs((lhs - rhs).data)) < 1e-12

    def test_divergence_of_rotational_field_vanishes(self, grid):
        rng = np.random.default_rng(4)
        psi = random_field(grid, rng)
        g = gradient(psi).data
        v = SpectralField(grid, np.stack([-g[1], g[0]]))
        scale = max(np.max(np.abs(v.data)), 1e-300)
        assert divergence(v).l2_norm() / scale < 1e-12

    def test_divergence_matches_fd_oracle(self, grid):
        rng = np.random.default_rng(5)
        v = random_field(grid, rng, ncomp=2, kmax=5)
        pad = 4
        h = grid.dx / pad
        fine = refined_physical(v, pad)
        fd = (fd4_derivative(fine[0], 0, h) + fd4_derivative(fine[1], 1, h))[
            ::pad, ::pad
        ]
        spectral = divergence(v).to_physical()
        bound = 2 * (5**5) * np.max(np.abs(fine)) * h**4 / 30.0 * 4.0
        assert np.max(np.abs(fd - spectral)) < bound

    def test_laplacian_of_harmonic(self, grid):
        L = grid.domain_length
        x = grid.coords[0]
        phys = np.sin(2 * np.pi * x / L)
        f = transform_forward(grid, phys)
        expected = -((2 * np.pi / L) ** 2) * phys
        assert np.max(np.abs(laplacian(f).to_physical() - expected)) < 1e-12

    def test_laplacian_of_constant_is_zero(self, grid):
        f = transform_forward(grid, np.full(grid.shape, 1.0))
        assert np.max(np.abs(laplacian(f).data)) < 1e-14


class TestProjectors:
    def test_divergence_free_field_unchanged(self, grid):
        rng = np.random.default_rng(6)
        v = random_field(grid, rng, ncomp=2, div_free=True)
        out = project_leray(v)
        assert np.max(np.abs((out - v).data)) < 1e-12 * np.max(np.abs(v.data))

    def test_gradients_are_annihilated(self, grid):
        rng = np.random.default_rng(7)
        g = gradient(random_field(grid, rng))
        out = project_leray(g)
        assert np.max(np.abs(out.data)) < 1e-12 * np.max(np.abs(g.data))

    def test_idempotence(self, grid):
        rng = np.random.default_rng(8)
        v = random_field(grid, rng, ncomp=2)
        once = project_leray(v)
        twice = project_leray(once)
        assert np.max(np.abs((twice - once).data)) < 1e-14 * np.max(np.abs(v.data))

    def test_compressible_keeps_gradients(self, grid):
        rng = np.random.default_rng(9)
        g = gradient(random_field(grid, rng))
        out = project_compressible(g)
        assert np.max(np.abs((out - g).data)) < 1e-12 * np.max(np.abs(g.data))

    def test_compressible_kills_divergence_free(self, grid):
        rng = np.random.default_rng(10)
        v = random_field(grid, rng, ncomp=2, div_free=True)
        assert np.max(np.abs(project_compressible(v).data)) < 1e-12 * np.max(
            np.abs(v.data)
        )

    def test_complementary_sum_identity(self, grid):
        rng = np.random.default_rng(11)
        v = random_field(grid, rng, ncomp=2)
        recon = project_leray(v) + project_compressible(v)
        assert np.max(np.abs((recon - v).data)) < 1e-14 * np.max(np.abs(v.data))

    def test_projector_algebra_property(self, grid):
        # P + P^T = Id, P P^T = 0, P^2 = P on a batch of random fields.
        rng = np.random.default_rng(12)
        for _ in range(10):
            v = random_field(grid, rng, ncomp=2)
            scale = np.max(np.abs(v.data))
            p = project_leray(v)
            pt = project_compressible(v)
            assert np.max(np.abs((p + pt - v).data)) < 1e-14 * scale
            assert np.max(np.abs(project_leray(pt).data)) < 1e-14 * scale
            assert np.max(np.abs((project_leray(p) - p).data)) < 1e-14 * scale
            assert divergence(p).l2_norm() < 1e-12 * max(scale, 1.0)

    def test_zero_mode_passes_through(self, grid):
        data = np.zeros((2,) + grid.shape, dtype=complex)
        data[:, 0, 0] = [1.0, -2.0]
        v = SpectralField(grid, data)
        assert np.max(np.abs((project_leray(v) - v).data)) < 1e-15
        assert np.max(np.abs(project_compressible(v).data)) < 1e-15


class TestNormsAndUtilities:
    def test_parseval(self, grid):
        rng = np.random.default_rng(13)
        f = random_field(grid, rng)
        phys = f.to_physical()
        quadrature = np.sqrt(np.sum(phys**2) * grid.dx**2)
        assert abs(quadrature - f.l2_norm()) < 1e-12 * quadrature

    def test_dealias_mask_zeroes_nyquist(self, grid):
        assert not grid.dealias_mask[grid.n_per_dim // 2, 0]
        assert not grid.dealias_mask[0, grid.n_per_dim // 2]
        assert grid.dealias_mask[1, 1]

    def test_apply_pointwise_product_matches_quadratic_dealias(self, grid):
        # Quadratic products of fields inside the 2/3 band are alias-free.
        rng = np.random.default_rng(14)
        f = random_field(grid, rng, kmax=5)
        g = random_field(grid, rng, kmax=5)
        plain = apply_pointwise(lambda a, b: a * b, f, g)
        padded = apply_pointwise(lambda a, b: a * b, f, g, pad=2)
        assert np.max(np.abs((plain - padded).data)) < 1e-14

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            Grid(n_per_dim=6)
        with pytest.raises(ValueError):
            Grid(n_per_dim=24)
        with pytest.raises(ValueError):
            Grid(n_per_dim=32, domain_length=-1.0)

    def test_field_immutable(self, grid):
        f = SpectralField.zero(grid)
        with pytest.raises(ValueError):
            f.data[0, 0, 0] = 1.0
