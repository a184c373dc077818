import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.energy.functional import entropy_energy
from src.kernels_entropies.entropies import LinearEntropy, PowerEntropy
from src.measures.density_io import load_density, save_density
from src.measures.particle_ensemble import ParticleEnsemble, sample_particles
from src.measures.radial_density import (RadialDensity, dilate, from_profile, gaussian, moment, radial_grid,
                                         rearrange_decreasing, rescale_mass, uniform_ball, unit_ball_volume)
from src.utils.error_handler import DensityError, NonFinitePositionError, ValidationError
from tests.strategies import normalized, radial_densities


class TestUniformBall:
    def test_unit_interval_values(self):
        rho = uniform_ball(1.0, 1, 64)
        assert np.allclose(rho.values[:32], 0.5, rtol=0, atol=1e-15)
        assert np.all(rho.values[32:] == 0)

    def test_disk_of_radius_two(self):
        rho = uniform_ball(2.0, 2, 64)
        assert np.allclose(rho.values[:32], 1 / (4 * np.pi), rtol=1e-14)

    @pytest.mark.parametrize('r', [0.5, 1.0, 3.0])
    @pytest.mark.parametrize('d', [1, 2, 3])
    def test_unit_mass(self, r, d):
        assert abs(uniform_ball(r, d, 128).mass() - 1) < 1e-12

    def test_ball_not_aligned_with_grid(self):
        rho = uniform_ball(1.0, 3, 30, r_max=1.55)
        assert abs(rho.mass() - 1) < 1e-12
        assert rho.support_radius() == pytest.approx(1.0333333333, rel=1e-9)

    def test_rejects_coarse_grid(self):
        with pytest.raises(ValidationError, match="grid too coarse"):
            uniform_ball(1.0, 1, 4)

    def test_unit_ball_volumes(self):
        assert unit_ball_volume(1) == pytest.approx(2.0)
        assert unit_ball_volume(2) == pytest.approx(np.pi)
        assert unit_ball_volume(3) == pytest.approx(4 * np.pi / 3)


class TestDensityValidation:
    def test_rejects_negative_values(self):
        grid = radial_grid(1.0, 8)
        with pytest.raises(DensityError, match="nonnegative"):
            RadialDensity(1, grid, np.full(8, -0.5))

    def test_rejects_wrong_mass(self):
        with pytest.raises(DensityError, match="total mass"):
            RadialDensity(1, radial_grid(1.0, 8), np.ones(8))

    def test_rejects_nonuniform_grid(self):
        grid = np.array([0.0, 0.1, 0.3, 0.6, 1.0])
        with pytest.raises(DensityError, match="uniform"):
            RadialDensity(1, grid, np.full(4, 0.5))

    def test_atom_counts_toward_mass(self):
        rho = RadialDensity(1, radial_grid(1.0, 8), np.full(8, 0.35), atom_mass=0.3)
        assert rho.mass() == pytest.approx(1.0)

    def test_values_are_read_only(self, unit_interval):
        with pytest.raises(ValueError):
            unit_interval.values[0] = 1.0


class TestDilation:
    @pytest.mark.parametrize('d', [1, 2, 3])
    def test_dilated_ball_is_ball(self, d):
        dilated = dilate(uniform_ball(1.0, d, 64), 2.5)
        expected = uniform_ball(2.5, d, 64)
        assert np.allclose(dilated.grid, expected.grid, rtol=1e-12)
        assert np.allclose(dilated.values, expected.values, rtol=1e-10, atol=0)

    def test_identity(self, bumpy_disk):
        assert dilate(bumpy_disk, 1.0) is bumpy_disk

    def test_second_moment_scaling(self, bumpy_disk):
        assert moment(dilate(bumpy_disk, 2.0), 2) == pytest.approx(4 * moment(bumpy_disk, 2), rel=1e-8)

    @pytest.mark.parametrize('alpha', [0.5, 1.0, 3.0])
    def test_moment_homogeneity(self, bumpy_disk, alpha):
        assert moment(dilate(bumpy_disk, 0.3), alpha) == pytest.approx(0.3 ** alpha * moment(bumpy_disk, alpha),
                                                                       rel=1e-10)

    def test_mass_preserved(self, bumpy_disk):
        assert abs(dilate(bumpy_disk, 7.0).mass() - 1) < 1e-10

    def test_rejects_nonpositive_factor(self, unit_interval):
        with pytest.raises(ValidationError):
            dilate(unit_interval, 0.0)


class TestMoments:
    def test_interval(self, unit_interval):
        assert moment(unit_interval, 2) == pytest.approx(1 / 3, rel=1e-12)

    def test_ball(self):
        assert moment(uniform_ball(1.0, 3, 128), 2) == pytest.approx(3 / 5, rel=1e-12)

    def test_rejects_nonpositive_order(self, unit_interval):
        with pytest.raises(ValidationError):
            moment(unit_interval, 0)


class TestRescaleMass:
    def test_identity(self, unit_disk):
        assert rescale_mass(unit_disk, 1.0) is unit_disk

    def test_half_mass(self, unit_disk):
        half = rescale_mass(unit_disk, 0.5)
        assert half.mass() == pytest.approx(0.5)
        assert not half.unit_mass

    def test_dilate_then_rescale_scales_entropy(self, bumpy_disk):
        r0 = 2 ** 0.5
        U = PowerEntropy(2.0)
        transformed = rescale_mass(dilate(bumpy_disk, r0), r0 ** 2)
        assert entropy_energy(transformed, U) == pytest.approx(r0 ** 2 * entropy_energy(bumpy_disk, U), rel=1e-12)


class TestRearrangement:
    def test_decreasing_input_unchanged(self, unit_disk):
        assert rearrange_decreasing(unit_disk) is unit_disk

    def test_annulus_becomes_interval(self):
        grid = radial_grid(2.0, 64)
        annulus = RadialDensity(1, grid, np.where(grid[:-1] >= 1.0, 0.5, 0.0))
        assert np.array_equal(rearrange_decreasing(annulus).values, uniform_ball(1.0, 1, 64).values)

    @given(radial_densities(d=1))
    @settings(max_examples=50, deadline=None)
    def test_equimeasurable_on_the_line(self, rho):
        star = rearrange_decreasing(rho)
        assert np.all(np.diff(star.values) <= 0)
        for U in (LinearEntropy(), PowerEntropy(2.0), PowerEntropy(0.5)):
            assert entropy_energy(star, U) == pytest.approx(entropy_energy(rho, U), rel=1e-8, abs=1e-8)

    @given(st.integers(2, 3).flatmap(lambda d: radial_densities(d=d)))
    @settings(max_examples=50, deadline=None)
    def test_equimeasurable_in_higher_dimension(self, rho):
        star = rearrange_decreasing(rho)
        assert abs(star.mass() - 1) < 1e-10
        assert np.all(np.diff(star.values) <= 0)
        for U in (LinearEntropy(), PowerEntropy(2.0), PowerEntropy(3.0), PowerEntropy(0.5)):
            assert entropy_energy(star, U) == pytest.approx(entropy_energy(rho, U), rel=1e-8, abs=1e-8)

    @pytest.mark.parametrize('d', [2, 3])
    def test_single_occupied_shell_keeps_its_level(self, d):
        values = np.zeros(16)
        values[9] = 1.0
        rho = normalized(values, d)
        star = rearrange_decreasing(rho)
        assert star.values[0] == rho.values[9]
        assert star.shell_volumes()[0] == pytest.approx(rho.shell_volumes()[9], rel=1e-12)
        U = PowerEntropy(2.0)
        assert entropy_energy(star, U) == pytest.approx(entropy_energy(rho, U), rel=1e-10)

    def test_rearranged_grid_keeps_extent(self, bumpy_disk):
        star = rearrange_decreasing(bumpy_disk)
        assert not star.uniform_grid
        assert star.r_max == bumpy_disk.r_max
        assert np.allclose(np.sort(star.shell_volumes()), np.sort(bumpy_disk.shell_volumes()), rtol=1e-10)
        assert star.coarsened().mass() == pytest.approx(1.0, abs=1e-12)

    @given(radial_densities(d=2))
    @settings(max_examples=30, deadline=None)
    def test_idempotent(self, rho):
        once = rearrange_decreasing(rho)
        assert np.array_equal(rearrange_decreasing(once).values, once.values)

    def test_atom_rejected(self):
        rho = RadialDensity(1, radial_grid(1.0, 8), np.full(8, 0.35), atom_mass=0.3)
        with pytest.raises(DensityError):
            rearrange_decreasing(rho)


class TestProfiles:
    def test_gaussian_is_normalized(self):
        rho = gaussian(0.5, 2, 512)
        assert abs(rho.mass() - 1) < 1e-12
        assert rho.r_max == pytest.approx(8 * np.sqrt(0.5))

    def test_gaussian_second_moment(self):
        assert moment(gaussian(1.0, 3, 2048), 2) == pytest.approx(3.0, rel=1e-5)

    def test_profile_without_mass(self):
        with pytest.raises(DensityError):
            from_profile(lambda r: np.zeros_like(r), 1, 1.0, 16)

    def test_trimmed_keeps_mass(self, unit_interval):
        trimmed = unit_interval.trimmed()
        assert trimmed.size == unit_interval.size // 2
        assert trimmed.mass() == pytest.approx(1.0)

    def test_coarsened_keeps_mass(self, bumpy_disk):
        coarse = bumpy_disk.coarsened()
        assert coarse.size == bumpy_disk.size // 2
        assert coarse.mass() == pytest.approx(1.0, abs=1e-12)


class TestSampling:
    def test_fraction_inside_inner_disk(self):
        N = 10_000
        ensemble = sample_particles(uniform_ball(1.0, 2, 256), N, seed=11)
        inside = np.mean(np.linalg.norm(ensemble.positions, axis=1) < 0.5)
        assert abs(inside - 0.25) < 3 / np.sqrt(N)

    def test_same_seed_same_ensemble(self, unit_disk):
        first = sample_particles(unit_disk, 100, seed=5)
        second = sample_particles(unit_disk, 100, seed=5)
        assert np.array_equal(first.positions, second.positions)

    def test_two_particles(self, unit_interval):
        ensemble = sample_particles(unit_interval, 2, seed=0)
        assert ensemble.positions.shape == (2, 1)
        assert np.all(np.isfinite(ensemble.positions))

    def test_atom_draws_sit_at_origin(self):
        rho = RadialDensity(1, radial_grid(1.0, 8), np.zeros(8), atom_mass=1.0)
        assert np.all(sample_particles(rho, 50, seed=1).positions == 0)

    def test_rejects_single_particle(self, unit_interval):
        with pytest.raises(ValidationError):
            sample_particles(unit_interval, 1, seed=0)

    def test_generator_resumes_stream(self, unit_disk):
        ensemble = sample_particles(unit_disk, 10, seed=3)
        assert ensemble.generator().random() == ensemble.generator().random()

    def test_non_finite_positions_rejected(self):
        state = np.random.default_rng(0).bit_generator.state
        with pytest.raises(NonFinitePositionError):
            ParticleEnsemble(np.array([[0.0], [np.inf]]), state)


class TestDensityFiles:
    def test_round_trip(self, tmp_path, bumpy_disk):
        path = str(tmp_path / 'rho.csv')
        save_density(bumpy_disk, path)
        loaded = load_density(path)
        assert loaded.dimension == 2
        assert np.array_equal(loaded.values, bumpy_disk.values)
        assert np.allclose(loaded.grid, bumpy_disk.grid, rtol=1e-15)

    def test_missing_sidecar(self, tmp_path, unit_interval):
        path = tmp_path / 'rho.csv'
        save_density(unit_interval, str(path))
        (tmp_path / 'rho.csv.meta').unlink()
        with pytest.raises(DensityError, match="sidecar"):
            load_density(str(path))

    def test_rescaled_density_round_trip(self, tmp_path, unit_interval):
        path = str(tmp_path / 'half.csv')
        save_density(rescale_mass(unit_interval, 0.5), path)
        assert load_density(path).mass() == pytest.approx(0.5)

    def test_rearranged_density_round_trip(self, tmp_path, bumpy_disk):
        path = str(tmp_path / 'star.csv')
        star = rearrange_decreasing(bumpy_disk)
        save_density(star, path)
        loaded = load_density(path)
        assert not loaded.uniform_grid
        assert np.array_equal(loaded.grid, star.grid)
        assert np.array_equal(loaded.values, star.values)
