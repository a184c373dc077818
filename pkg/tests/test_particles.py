import numpy as np
import pytest

from src.kernels_entropies.entropies import LinearEntropy
from src.kernels_entropies.kernels import PowerLaw
from src.measures.particle_ensemble import ParticleEnsemble, sample_particles
from src.measures.radial_density import uniform_ball
from src.particles.simulation import (SUMMARY_COLUMNS, SimConfig, advance, empirical_energy, histogram_bins,
                                      pair_interaction, pairwise_forces, pooled_ensemble, run, snapshot_frame, step)
from src.utils.error_handler import NonFinitePositionError, ValidationError


def _ensemble(positions, seed=0):
    return ParticleEnsemble(np.asarray(positions, dtype=float), np.random.default_rng(seed).bit_generator.state,
                            seed=seed)


@pytest.fixture
def two_body():
    return _ensemble([[-1.0], [1.0]])


class TestTwoBody:
    def test_contraction_per_step(self, two_body):
        config = SimConfig(N=2, d=1, kernel=PowerLaw(2.0), epsilon=0.0, dt=0.1, T=0.1)
        advanced = step(two_body, config)
        assert advanced.positions[1, 0] - advanced.positions[0, 0] == pytest.approx(2 * 0.9, rel=1e-14)
        assert advanced.steps == 1 and advanced.time == pytest.approx(0.1)

    def test_matches_ode(self, two_body):
        dt = 0.01
        config = SimConfig(N=2, d=1, kernel=PowerLaw(2.0), epsilon=0.0, dt=dt, T=1.0)
        result = run(config, initial=two_body)
        final = result.snapshots[-1].positions[:, 0]
        assert abs((final[1] - final[0]) - 2 * np.exp(-1.0)) < 2 * dt


class TestForces:
    def test_antisymmetric(self):
        positions = np.random.default_rng(1).standard_normal((40, 2))
        drift, coincident = pairwise_forces(positions, PowerLaw(1.5), block=7)
        assert np.allclose(drift.sum(axis=0), 0.0, atol=1e-12)
        assert coincident == 0

    def test_blocks_agree(self):
        positions = np.random.default_rng(2).standard_normal((30, 3))
        whole, _ = pairwise_forces(positions, PowerLaw(-0.5), block=512)
        split, _ = pairwise_forces(positions, PowerLaw(-0.5), block=4)
        assert np.allclose(whole, split, rtol=1e-12, atol=0)

    def test_coincident_singular_pair(self):
        ensemble = _ensemble([[0.0], [0.0], [1.0]])
        config = SimConfig(N=3, d=1, kernel=PowerLaw(-0.5), epsilon=0.0, dt=0.01, T=0.01)
        assert advance(ensemble, config).coincident_pairs == 1
        value, excluded = pair_interaction(ensemble, PowerLaw(-0.5))
        assert excluded == 1
        assert np.isfinite(value)

    def test_overflow_detected(self):
        ensemble = _ensemble([[-1e200], [1e200]])
        config = SimConfig(N=2, d=1, kernel=PowerLaw(3.0), epsilon=0.0, dt=0.1, T=0.1)
        with pytest.raises(NonFinitePositionError):
            step(ensemble, config)


class TestRun:
    def test_center_of_mass_without_noise(self):
        config = SimConfig(N=50, d=2, kernel=PowerLaw(2.0), epsilon=0.0, dt=1e-3, T=0.05, seed=4)
        result = run(config)
        start, end = result.snapshots[0], result.snapshots[-1]
        assert np.allclose(end.center_of_mass(), start.center_of_mass(), atol=1e-12)

    def test_interaction_decreases_without_noise(self):
        config = SimConfig(N=50, d=2, kernel=PowerLaw(2.0), epsilon=0.0, dt=1e-3, T=0.05, seed=4)
        interaction = run(config).summary['interaction'].to_numpy()
        assert np.all(np.diff(interaction) <= 0)

    def test_reproducible(self):
        config = SimConfig(N=20, d=2, kernel=PowerLaw(1.5), epsilon=0.3, dt=0.01, T=0.1, seed=9)
        first, second = run(config), run(config)
        for a, b in zip(first.snapshots, second.snapshots):
            assert np.array_equal(a.positions, b.positions)

    def test_resume_from_snapshot(self):
        config = SimConfig(N=10, d=1, kernel=PowerLaw(2.0), epsilon=0.5, dt=0.01, T=0.02, seed=3)
        full = run(config)
        half = SimConfig(N=10, d=1, kernel=PowerLaw(2.0), epsilon=0.5, dt=0.01, T=0.01, seed=3)
        resumed = step(run(half).snapshots[-1], half)
        assert np.array_equal(resumed.positions, full.snapshots[-1].positions)

    def test_snapshot_count(self):
        config = SimConfig(N=5, d=1, kernel=PowerLaw(2.0), epsilon=0.1, dt=0.01, T=0.1, snapshot_stride=5)
        result = run(config)
        assert len(result.snapshots) == 3
        assert list(result.summary.columns) == SUMMARY_COLUMNS
        assert result.summary['t'].tolist() == pytest.approx([0.0, 0.05, 0.1])

    def test_center_of_mass_diffuses(self):
        epsilon, T, N, d, seeds = 0.5, 1.0, 20, 2, 32
        shifts = []
        for seed in range(seeds):
            config = SimConfig(N=N, d=d, kernel=PowerLaw(2.0), epsilon=epsilon, dt=0.05, T=T, seed=seed)
            result = run(config)
            shifts.append(result.snapshots[-1].center_of_mass() - result.snapshots[0].center_of_mass())
        shifts = np.concatenate(shifts)
        # pairwise forces cancel, so each coordinate of the mean is N(0, 2 eps T / N)
        variance = 2 * epsilon * T / N
        samples = len(shifts)
        assert abs(shifts.mean()) <= 3 * np.sqrt(variance / samples)
        assert abs(np.mean(shifts ** 2) - variance) <= 3 * variance * np.sqrt(2 / samples)

    def test_stability_threshold(self):
        assert SimConfig(N=2, d=1, kernel=PowerLaw(2.0), epsilon=0.0, dt=0.1, T=0.1).stability_dt() == 1.0
        assert SimConfig(N=2, d=1, kernel=PowerLaw(1.5), epsilon=0.0, dt=0.1, T=0.1).stability_dt() is None

    def test_initial_shape_checked(self, two_body):
        config = SimConfig(N=3, d=1, kernel=PowerLaw(2.0), epsilon=0.0, dt=0.1, T=0.1)
        with pytest.raises(ValidationError):
            run(config, initial=two_body)

    @pytest.mark.parametrize('kwargs', [{'N': 1}, {'dt': 0.0}, {'T': 0.001}, {'epsilon': -1.0},
                                        {'snapshot_stride': 0}, {'N': 10 ** 6}])
    def test_config_validation(self, kwargs):
        arguments = {'N': 4, 'd': 1, 'kernel': PowerLaw(2.0), 'epsilon': 0.1, 'dt': 0.01, 'T': 0.1}
        arguments.update(kwargs)
        with pytest.raises(ValidationError):
            SimConfig(**arguments)

    @pytest.mark.slow
    def test_ornstein_uhlenbeck_variance(self):
        # each coordinate relaxes to variance eps (N-1)/N about the center of mass
        late_means = []
        for seed in range(32):
            config = SimConfig(N=200, d=1, kernel=PowerLaw(2.0), epsilon=0.5, dt=0.01, T=50.0, seed=seed,
                               snapshot_stride=10)
            summary = run(config).summary
            late_means.append(summary['variance_about_com'][summary['t'] >= 25.0].mean())
        assert np.mean(late_means) == pytest.approx(0.4975, rel=0.1)


class TestEmpiricalEnergy:
    def test_pair_at_distance_two(self):
        value, excluded = pair_interaction(_ensemble([[0.0], [2.0]]), PowerLaw(2.0))
        assert value == pytest.approx(0.5)
        assert excluded == 0

    def test_samples_of_interval(self):
        ensemble = sample_particles(uniform_ball(1.0, 1, 256), 10_000, seed=0)
        value, _ = pair_interaction(ensemble, PowerLaw(2.0))
        assert value == pytest.approx(1 / 6, rel=0.03)

    def test_histogram_bins(self):
        assert histogram_bins(10, 1) == 16
        assert histogram_bins(10_000, 1) == 100

    def test_too_few_bins(self, two_body):
        with pytest.raises(ValidationError):
            empirical_energy(two_body, PowerLaw(2.0), LinearEntropy(), 1.0, bins=4)

    def test_breakdown(self):
        ensemble = sample_particles(uniform_ball(1.0, 1, 256), 2000, seed=5)
        breakdown = empirical_energy(ensemble, PowerLaw(2.0), LinearEntropy(), 0.5)
        assert breakdown.total == pytest.approx(breakdown.interaction + 0.5 * breakdown.entropy)
        # entropy of the uniform density on [-1, 1] is -log 2
        assert breakdown.entropy == pytest.approx(-np.log(2.0), abs=0.05)


class TestSnapshots:
    def test_pooled_ensemble_centers(self):
        snapshots = [_ensemble([[1.0], [3.0]]), _ensemble([[-5.0], [-3.0]])]
        pooled = pooled_ensemble(snapshots)
        assert pooled.size == 4
        assert np.allclose(pooled.positions[:, 0], [-1.0, 1.0, -1.0, 1.0])

    def test_pool_needs_snapshots(self):
        with pytest.raises(ValidationError):
            pooled_ensemble([])

    def test_frame_layout(self):
        frame = snapshot_frame([_ensemble([[0.0, 1.0], [2.0, 3.0]])])
        assert list(frame.columns) == ['t', 'particle_id', 'x_1', 'x_2']
        assert frame['particle_id'].tolist() == [0, 1]
