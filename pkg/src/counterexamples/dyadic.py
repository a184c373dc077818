import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from config.settings import Config
from src.energy.interaction import shell_pair_average
from src.kernels_entropies.kernels import PowerLaw
from src.measures.radial_density import RadialDensity, radial_grid, unit_ball_volume
from src.utils.error_handler import ValidationError

LOG2 = np.log(2.0)
# beyond this ring separation the inner shell acts as a point
MAX_SEPARATION = 64


def _check_parameters(gamma: float, beta: float, m: float, d: int, K: int):
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    if not beta > 0:
        raise ValidationError(f"the dyadic construction needs beta > 0, got {beta}")
    if not 0 < m < 1:
        raise ValidationError(f"the dyadic construction needs 0 < m < 1, got {m}")
    if int(d) != d or d < 1:
        raise ValidationError(f"dimension must be a positive integer, got {d}")
    if int(K) != K or K < 0:
        raise ValidationError(f"truncation K must be a nonnegative integer, got {K}")


def is_admissible(gamma: float, beta: float, m: float, d: int) -> bool:
    """beta < gamma < d(1-m)/m: moments converge while the m-integral diverges"""
    return beta < gamma < d * (1 - m) / m


def _log_normalization(gamma: float, K: int) -> float:
    # log of sum_{l<=K} 2^(-l gamma)
    return float(np.log(-np.expm1(-(K + 1) * gamma * LOG2)) - np.log(-np.expm1(-gamma * LOG2)))


def log_ring_masses(gamma: float, K: int) -> np.ndarray:
    k = np.arange(K + 1)
    return -k * gamma * LOG2 - _log_normalization(gamma, K)


def _log_ring_volumes(d: int, k: np.ndarray) -> np.ndarray:
    return np.log(unit_ball_volume(d)) + d * k * LOG2 + np.log(2.0 ** d - 1)


@dataclass(frozen=True)
class DyadicDensity:
    """Mass 2^(-k gamma)/Z spread uniformly on each ring 2^k <= |x| < 2^(k+1), k = 0..K"""
    gamma: float
    dimension: int
    K: int

    @property
    def ring_masses(self) -> np.ndarray:
        return np.exp(log_ring_masses(self.gamma, self.K))

    def realize(self, cells_per_ring: int = None) -> RadialDensity:
        """The density on a uniform grid with cells_per_ring cells across the innermost ring"""
        cells = Config.DYADIC_CELLS_PER_RING if cells_per_ring is None else cells_per_ring
        d, K = self.dimension, self.K
        M = cells * 2 ** (K + 1)
        grid = radial_grid(2.0 ** (K + 1), M)
        values = np.zeros(M)
        masses = self.ring_masses
        for k in range(K + 1):
            volume = unit_ball_volume(d) * (2.0 ** (d * (k + 1)) - 2.0 ** (d * k))
            values[cells * 2 ** k:cells * 2 ** (k + 1)] = masses[k] / volume
        return RadialDensity(d, grid, values)


@dataclass(frozen=True)
class DyadicSeries:
    moment_partial_sums: np.ndarray
    entropy_partial_sums: np.ndarray
    log_entropy_partial_sums: np.ndarray
    admissible: bool


def dyadic_series(gamma: float, beta: float, m: float, d: int, K: int) -> DyadicSeries:
    """Ring-by-ring partial sums of the beta-moment and of the m-integral of the K-truncation"""
    _check_parameters(gamma, beta, m, d, K)
    k = np.arange(K + 1)
    log_rho = log_ring_masses(gamma, K)

    # mean of |x|^beta over the ring 2^k <= |x| < 2^(k+1)
    log_c1 = np.log(d * (2.0 ** (d + beta) - 1) / ((d + beta) * (2.0 ** d - 1)))
    log_moment_terms = log_rho + log_c1 + k * beta * LOG2
    log_entropy_terms = m * log_rho + (1 - m) * _log_ring_volumes(d, k)

    with np.errstate(over='ignore'):
        moment = np.exp(np.logaddexp.accumulate(log_moment_terms))
        log_entropy = np.logaddexp.accumulate(log_entropy_terms)
        entropy = np.exp(log_entropy)
    return DyadicSeries(moment, entropy, log_entropy, is_admissible(gamma, beta, m, d))


@lru_cache(maxsize=None)
def _log_shell_pair_averages(beta: float, d: int) -> np.ndarray:
    """log of the mean of |x-y|^beta/beta for x in ring 0 scaled by 2^-n and y in ring 0"""
    W = PowerLaw(beta)
    averages = [shell_pair_average(W, d, (2.0 ** -n, 2.0 ** (1 - n)), (1.0, 2.0))
                for n in range(MAX_SEPARATION + 1)]
    return np.log(np.array(averages))


def _log_geometric_sum(log_q: float, count: np.ndarray) -> np.ndarray:
    """log of sum_{k<count} q^k"""
    count = np.asarray(count, dtype=float)
    if abs(log_q) < 1e-15:
        return np.log(count)
    if log_q < 0:
        return np.log(-np.expm1(count * log_q)) - np.log(-np.expm1(log_q))
    return count * log_q + np.log(-np.expm1(-count * log_q)) - np.log(np.expm1(log_q))


@dataclass(frozen=True)
class DyadicEnergy:
    K: int
    log_interaction: float
    log_m_integral: float
    energy: float


def dyadic_free_energy(gamma: float, beta: float, m: float, d: int, epsilon: float, K: int) -> DyadicEnergy:
    """W_beta + eps E_m of the K-truncation, assembled in log space.

    Rings are scaled copies of one another, so the interaction of rings k and
    k+n equals 2^((k+n) beta) times the pair average at separation n.
    """
    _check_parameters(gamma, beta, m, d, K)
    log_pairs = _log_shell_pair_averages(beta, d)
    n = np.arange(K + 1)
    log_norm = _log_normalization(gamma, K)
    # sum_k rho_k rho_{k+n} 2^((k+n) beta) = Z^-2 2^(n(beta-gamma)) sum_{k<=K-n} 2^(k(beta-2gamma))
    log_rings = (n * (beta - gamma) * LOG2 + _log_geometric_sum((beta - 2 * gamma) * LOG2, K - n + 1)
                 - 2 * log_norm)
    multiplicity = np.where(n > 0, np.log(2.0), 0.0)
    log_interaction = float(np.log(0.5) + logsumexp(log_pairs[np.minimum(n, MAX_SEPARATION)]
                                                    + log_rings + multiplicity))

    log_m_integral = float(dyadic_series(gamma, beta, m, d, K).log_entropy_partial_sums[-1])
    log_diffusion = np.log(epsilon / (1 - m)) + log_m_integral

    with np.errstate(over='ignore'):
        if log_diffusion > log_interaction:
            magnitude = log_diffusion + np.log(-np.expm1(log_interaction - log_diffusion))
            energy = -float(np.exp(magnitude))
        else:
            magnitude = log_interaction + np.log(-np.expm1(log_diffusion - log_interaction))
            energy = float(np.exp(magnitude))
    return DyadicEnergy(K, log_interaction, log_m_integral, energy)


@dataclass(frozen=True)
class UnboundednessCertificate:
    certified: bool
    K: Optional[int]
    admissible: bool
    energies: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def min_energy(self) -> float:
        return min(energy for _, energy in self.energies)


def certify_unbounded(gamma: float, beta: float, m: float, d: int, epsilon: float,
                      bound: float = None, k_max: int = None) -> UnboundednessCertificate:
    """Smallest K in 8, 16, ... with free energy below -bound.

    Only admissible triples can be certified; others are still evaluated so
    the energy sequence can be inspected.
    """
    bound = Config.DIVERGENCE_THRESHOLD if bound is None else bound
    k_max = Config.DYADIC_K_MAX if k_max is None else k_max
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if not bound > 0:
        raise ValidationError(f"bound must be positive, got {bound}")
    _check_parameters(gamma, beta, m, d, k_max)
    admissible = is_admissible(gamma, beta, m, d)

    energies = []
    K = Config.DYADIC_K_START
    while K <= k_max:
        result = dyadic_free_energy(gamma, beta, m, d, epsilon, K)
        energies.append((K, result.energy))
        logging.debug(f"Dyadic truncation K={K}: energy {result.energy:.6g}")
        if admissible and result.energy < -bound:
            logging.info(f"Certified unbounded energy at K={K} (energy {result.energy:.6g} < {-bound:g})")
            return UnboundednessCertificate(True, K, admissible, energies)
        K *= 2

    if admissible:
        logging.warning(f"No truncation up to K={k_max} fell below {-bound:g}")
    return UnboundednessCertificate(False, None, admissible, energies)
