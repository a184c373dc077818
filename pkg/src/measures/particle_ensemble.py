import copy
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from src.utils.error_handler import DensityError, NonFinitePositionError, ValidationError
from .radial_density import RadialDensity


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """N particle positions in R^d together with the generator state that drives them"""
    positions: np.ndarray
    rng_state: Dict[str, Any]
    time: float = 0.0
    steps: int = 0
    seed: Optional[int] = None

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float)
        if positions.ndim == 1:
            positions = positions[:, None]
        if positions.ndim != 2 or positions.shape[0] < 2:
            raise ValidationError(f"an ensemble needs at least two particles, got shape {positions.shape}")
        if not np.all(np.isfinite(positions)):
            raise NonFinitePositionError(f"non-finite particle position at step {self.steps}")
        if self.time < 0:
            raise ValidationError(f"time must be nonnegative, got {self.time}")
        positions.setflags(write=False)
        object.__setattr__(self, 'positions', positions)
        object.__setattr__(self, 'rng_state', copy.deepcopy(self.rng_state))

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned where this ensemble left its stream"""
        bit_generator = getattr(np.random, self.rng_state['bit_generator'])()
        bit_generator.state = copy.deepcopy(self.rng_state)
        return np.random.Generator(bit_generator)

    def center_of_mass(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def variance_about_com(self) -> float:
        centered = self.positions - self.center_of_mass()
        return float(np.mean(np.sum(centered ** 2, axis=1)))


def sample_particles(rho: RadialDensity, N: int, seed: int) -> ParticleEnsemble:
    """I.i.d. draws from rho: inverse CDF in radius, uniform direction"""
    if int(N) != N or N < 2:
        raise ValidationError(f"need at least two particles, got N={N}")
    masses = rho.cell_masses()
    if rho.atom_mass <= 0 and not np.any(masses > 0):
        raise DensityError("cannot sample from a density without mass")

    rng = np.random.default_rng(seed)
    cumulative = rho.atom_mass + np.concatenate(([0.0], np.cumsum(masses)))
    u = rng.random(N) * cumulative[-1]
    # draws below the atom mass clamp to the origin
    radii = np.interp(u, cumulative, rho.grid)

    directions = rng.standard_normal((N, rho.dimension))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    positions = radii[:, None] * directions

    logging.debug(f"Sampled {N} particles in dimension {rho.dimension} with seed {seed}")
    return ParticleEnsemble(positions, rng.bit_generator.state, seed=seed)
