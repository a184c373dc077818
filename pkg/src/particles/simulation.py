import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.settings import Config
from src.energy.functional import EnergyBreakdown
from src.kernels_entropies.entropies import EntropySpec
from src.kernels_entropies.kernels import KernelSpec
from src.measures.particle_ensemble import ParticleEnsemble, sample_particles
from src.measures.radial_density import gaussian
from src.utils.error_handler import NonFinitePositionError, ValidationError
from src.utils.monitoring import ProcessingTimer, performance_monitor

SUMMARY_COLUMNS = ['t', 'interaction', 'variance_about_com']


@dataclass(frozen=True)
class SimConfig:
    """Euler-Maruyama run of dX_i = -(1/N) sum_j grad W(X_i - X_j) dt + sqrt(2 eps) dB_i"""
    N: int
    d: int
    kernel: KernelSpec
    epsilon: float
    dt: float
    T: float
    seed: int = 0
    snapshot_stride: int = 1
    initial_variance: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValidationError(f"need at least two particles, got N={self.N}")
        if self.N > Config.PARTICLE_MAX_N:
            raise ValidationError(f"N={self.N} exceeds the O(N^2) limit {Config.PARTICLE_MAX_N}")
        if int(self.d) != self.d or self.d < 1:
            raise ValidationError(f"dimension must be a positive integer, got {self.d}")
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if not self.T >= self.dt:
            raise ValidationError(f"horizon T={self.T} must be at least dt={self.dt}")
        if not self.epsilon >= 0:
            raise ValidationError(f"epsilon must be nonnegative, got {self.epsilon}")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ValidationError(f"snapshot_stride must be a positive integer, got {self.snapshot_stride}")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def stability_dt(self) -> Optional[float]:
        """1/Lip(grad W) when grad W is globally Lipschitz"""
        lipschitz = getattr(self.kernel, 'lipschitz_constant', lambda: None)()
        return None if not lipschitz else 1.0 / lipschitz


def _block_forces(positions: np.ndarray, W: KernelSpec, start: int, stop: int) -> Tuple[np.ndarray, int]:
    """Sum over j of grad W(X_i - X_j) for targets start <= i < stop"""
    z = positions[start:stop, None, :] - positions[None, :, :]
    distance = np.sqrt(np.sum(z ** 2, axis=2))
    apart = distance > 0
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        coefficient = np.where(apart, W.force_coefficient(np.where(apart, distance, 1.0)), 0.0)
    coincident = 0
    if W.force_singular:
        own = np.arange(start, stop)
        coincident = int(np.count_nonzero(~apart)) - len(own)
    return np.einsum('ij,ijk->ik', coefficient, z), coincident


def pairwise_forces(positions: np.ndarray, W: KernelSpec, block: int = None) -> Tuple[np.ndarray, int]:
    """Mean-field drift -(1/N) sum_j grad W(X_i - X_j) and the number of coincident singular pairs.

    Coincident pairs under a singular force contribute nothing for that step.
    """
    block = Config.PARTICLE_BLOCK if block is None else block
    N = positions.shape[0]
    starts = range(0, N, block)
    with ThreadPoolExecutor(max_workers=max(1, Config.THREADS)) as executor:
        parts = list(executor.map(lambda s: _block_forces(positions, W, s, min(s + block, N)), starts))
    forces = np.concatenate([force for force, _ in parts])
    # ordered pairs were counted from both ends
    coincident = sum(count for _, count in parts) // 2
    return -forces / N, coincident


@dataclass(frozen=True)
class StepResult:
    ensemble: ParticleEnsemble
    coincident_pairs: int


def advance(ensemble: ParticleEnsemble, config: SimConfig) -> StepResult:
    rng = ensemble.generator()
    # noise is drawn before the force so the stream order never depends on the kernel
    noise = rng.standard_normal(ensemble.positions.shape)
    drift, coincident = pairwise_forces(ensemble.positions, config.kernel)
    positions = ensemble.positions + config.dt * drift + np.sqrt(2 * config.epsilon * config.dt) * noise

    step_index = ensemble.steps + 1
    if not np.all(np.isfinite(positions)):
        raise NonFinitePositionError(f"non-finite particle position at step {step_index}")
    if coincident:
        logging.debug(f"Step {step_index}: {coincident} coincident pairs had their singular force dropped")
    advanced = ParticleEnsemble(positions, rng.bit_generator.state, ensemble.time + config.dt,
                                step_index, ensemble.seed)
    return StepResult(advanced, coincident)


def step(ensemble: ParticleEnsemble, config: SimConfig) -> ParticleEnsemble:
    """One Euler-Maruyama step of the interacting particle system"""
    return advance(ensemble, config).ensemble


def _pair_sum(positions: np.ndarray, W: KernelSpec, block: int) -> Tuple[float, int]:
    """Sum of W(X_i - X_j) over i != j, skipping coincident pairs of a singular kernel"""
    N = positions.shape[0]
    total, excluded = 0.0, 0
    for start in range(0, N, block):
        stop = min(start + block, N)
        distance = np.sqrt(np.sum((positions[start:stop, None, :] - positions[None, :, :]) ** 2, axis=2))
        off_diagonal = np.ones_like(distance, dtype=bool)
        off_diagonal[np.arange(stop - start), np.arange(start, stop)] = False
        usable = off_diagonal
        if W.singular_at_origin:
            usable = off_diagonal & (distance > 0)
            excluded += int(np.count_nonzero(off_diagonal & (distance == 0)))
        total += float(np.sum(W.profile(distance[usable])))
    return total, excluded // 2


def pair_interaction(ensemble: ParticleEnsemble, W: KernelSpec) -> Tuple[float, int]:
    """(1/(2N^2)) sum_{i != j} W(X_i - X_j) and the number of excluded pairs"""
    total, excluded = _pair_sum(ensemble.positions, W, Config.PARTICLE_BLOCK)
    return total / (2 * ensemble.size ** 2), excluded


def histogram_bins(N: int, d: int) -> int:
    return max(Config.MIN_HISTOGRAM_BINS, int(np.ceil(N ** (1 / (d + 1)))))


def empirical_energy(ensemble: ParticleEnsemble, W: KernelSpec, U: EntropySpec, epsilon: float,
                     bins: int = None) -> EnergyBreakdown:
    """Free energy of the empirical measure, with the entropy taken from a histogram estimate"""
    bins = histogram_bins(ensemble.size, ensemble.dimension) if bins is None else bins
    if bins < Config.MIN_HISTOGRAM_BINS:
        raise ValidationError(f"need at least {Config.MIN_HISTOGRAM_BINS} histogram bins, got {bins}")
    interaction, excluded = pair_interaction(ensemble, W)

    density, edges = np.histogramdd(ensemble.positions, bins=bins, density=True)
    cell_volume = float(np.prod([np.diff(e)[0] for e in edges]))
    entropy = float(np.sum(U.value(density)) * cell_volume)
    if excluded:
        logging.warning(f"Empirical energy excluded {excluded} coincident pairs")
    return EnergyBreakdown.compose(interaction, entropy, epsilon, excluded_pairs=excluded)


@dataclass(frozen=True)
class RunResult:
    snapshots: List[ParticleEnsemble]
    summary: pd.DataFrame
    stability_dt: Optional[float]
    coincident_pairs: int


def _summary_row(ensemble: ParticleEnsemble, W: KernelSpec) -> dict:
    interaction, _ = pair_interaction(ensemble, W)
    return {'t': ensemble.time, 'interaction': interaction, 'variance_about_com': ensemble.variance_about_com()}


def run(config: SimConfig, initial: ParticleEnsemble = None) -> RunResult:
    """Integrate to the horizon, keeping every snapshot_stride-th state"""
    if initial is None:
        initial = sample_particles(gaussian(config.initial_variance, config.d), config.N, config.seed)
    if initial.size != config.N or initial.dimension != config.d:
        raise ValidationError(f"initial ensemble has shape {initial.positions.shape}, "
                              f"expected ({config.N}, {config.d})")
    stability = config.stability_dt()
    if stability is not None and config.dt >= stability:
        logging.warning(f"dt={config.dt:g} is not below the stability threshold {stability:g}")

    ensemble = initial
    snapshots = [ensemble]
    rows = [_summary_row(ensemble, config.kernel)]
    coincident = 0
    with ProcessingTimer(performance_monitor, 'particle_run'):
        for n in range(1, config.steps + 1):
            result = advance(ensemble, config)
            ensemble = result.ensemble
            coincident += result.coincident_pairs
            if n % config.snapshot_stride == 0 or n == config.steps:
                snapshots.append(ensemble)
                rows.append(_summary_row(ensemble, config.kernel))

    logging.info(f"Particle run finished: N={config.N}, {config.steps} steps, t={ensemble.time:.6g}, "
                 f"{coincident} coincident pairs")
    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    return RunResult(snapshots, summary, stability, coincident)


def pooled_ensemble(snapshots: Sequence[ParticleEnsemble], center: bool = True) -> ParticleEnsemble:
    """All particles of a window of snapshots as one ensemble, each snapshot centered at its mean"""
    if not snapshots:
        raise ValidationError("no snapshots to pool")
    blocks = [s.positions - s.center_of_mass() if center else s.positions for s in snapshots]
    last = snapshots[-1]
    return replace(last, positions=np.concatenate(blocks))


def snapshot_frame(snapshots: Sequence[ParticleEnsemble]) -> pd.DataFrame:
    """Long table t, particle_id, x_1..x_d"""
    d = snapshots[0].dimension
    frames = []
    for snapshot in snapshots:
        frame = pd.DataFrame(snapshot.positions, columns=[f'x_{k + 1}' for k in range(d)])
        frame.insert(0, 'particle_id', np.arange(snapshot.size))
        frame.insert(0, 't', snapshot.time)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)