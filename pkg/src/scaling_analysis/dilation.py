import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np
from scipy.special import betainc

from config.settings import Config
from src.energy.angular import graded_rule
from src.energy.functional import entropy_energy
from src.energy.interaction import interaction_energy
from src.kernels_entropies.entropies import EntropySpec, PowerEntropy
from src.kernels_entropies.kernels import KernelSpec, Logarithmic, PowerLaw, TabulatedRadial
from src.measures.radial_density import RadialDensity, dilate, unit_ball_volume
from src.utils.error_handler import DerivativeUnavailableError, NumericalFailure, ValidationError

RAY_LEVELS = 40
RAY_NODES = 10
COARSE_RAY_NODES = 6


def ball_distance_density(t: np.ndarray, d: int) -> np.ndarray:
    """Density of |X - Y| for X, Y independent and uniform on the unit ball of R^d"""
    t = np.asarray(t, dtype=float)
    x = np.clip(1 - t ** 2 / 4, 0.0, 1.0)
    return d * t ** (d - 1) * betainc((d + 1) / 2, 0.5, x)


@lru_cache(maxsize=None)
def _distance_rule(d: int, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Quadrature for functions of |X - Y| on [0, 2], graded toward both endpoints"""
    x, w = graded_rule(RAY_LEVELS, nodes)
    t = np.concatenate((x, 2 - x[::-1]))
    weights = np.concatenate((w, w[::-1])) * ball_distance_density(t, d)
    t.setflags(write=False)
    weights.setflags(write=False)
    return t, weights


def _ray_average(profile, d: int, r: float, nodes: int = RAY_NODES) -> float:
    t, weights = _distance_rule(d, nodes)
    with np.errstate(divide='ignore'):
        return float(np.dot(profile(r * t), weights))


def ray_interaction(W: KernelSpec, d: int, r: float) -> Tuple[float, float]:
    """Interaction energy of the uniform ball of radius r, with an error estimate"""
    W.check_integrable(d)
    W.check_range(2 * r)
    fine = 0.5 * _ray_average(W.profile, d, r)
    coarse = 0.5 * _ray_average(W.profile, d, r, COARSE_RAY_NODES)
    return fine, abs(fine - coarse)


def ray_virial(W: KernelSpec, d: int, r: float) -> float:
    """(1/2) E[grad W(r(X - Y)).r(X - Y)] over the unit ball"""
    W.check_integrable(d)
    if isinstance(W, TabulatedRadial) and 2 * r > W.r_max * (1 + 1e-12):
        raise DerivativeUnavailableError(f"virial needs the kernel up to {2 * r:.6g}, beyond R_max={W.r_max:.6g}")
    return 0.5 * _ray_average(W.virial, d, r)


@lru_cache(maxsize=None)
def unit_ball_interaction(W: KernelSpec, d: int) -> float:
    """Interaction constant I of the unit ball, computed once per kernel and dimension"""
    value, error = ray_interaction(W, d, 1.0)
    logging.debug(f"Unit-ball interaction for {W} in d={d}: {value:.15g} (error {error:.1e})")
    return value


def _entropy_on_ray(U: EntropySpec, epsilon: float, d: int, r: np.ndarray) -> np.ndarray:
    if epsilon == 0:
        return np.zeros_like(r)
    return epsilon * U.mccann_u(d, r * unit_ball_volume(d) ** (1 / d))


def _check_grid(r_grid) -> np.ndarray:
    r = np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or len(r) == 0 or np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ValidationError("scan radii must be positive and increasing")
    return r


def dilation_energy_scan(W: KernelSpec, U: EntropySpec, epsilon: float, d: int,
                         r_grid) -> List[Tuple[float, float]]:
    """Free energy of the normalized uniform ball of radius r for each r in the grid"""
    r = _check_grid(r_grid)
    W.check_integrable(d)
    entropy = _entropy_on_ray(U, epsilon, d, r)

    if isinstance(W, PowerLaw):
        interaction = r ** W.beta * unit_ball_interaction(W, d)
    elif isinstance(W, Logarithmic):
        interaction = unit_ball_interaction(W, d) + 0.5 * np.log(r)
    else:
        with ThreadPoolExecutor(max_workers=max(1, Config.THREADS)) as executor:
            interaction = np.array([value for value, _ in executor.map(lambda x: ray_interaction(W, d, x), r)])
    return list(zip(r.tolist(), (interaction + entropy).tolist()))


def dilation_derivative(W: KernelSpec, U: EntropySpec, epsilon: float, d: int, r: float) -> float:
    """d/dr of the free energy along the dilation ray"""
    if not r > 0:
        raise ValidationError(f"dilation radius must be positive, got {r}")
    W.check_integrable(d)
    if isinstance(W, PowerLaw):
        virial = W.beta * r ** W.beta * unit_ball_interaction(W, d)
    elif isinstance(W, Logarithmic):
        virial = 0.5
    else:
        virial = ray_virial(W, d, r)
    diffusion = 0.0 if epsilon == 0 else epsilon * U.scaling_v(d, r * unit_ball_volume(d) ** (1 / d))
    return (virial - diffusion) / r


@dataclass(frozen=True)
class OptimalDilation:
    r0: float
    virial_residual: float
    energy: float
    interaction: float
    entropy: float


def optimal_dilation(rho: RadialDensity, beta: float, m: float, epsilon: float, d: int) -> OptimalDilation:
    """Closed-form optimum of r^beta W(rho) + eps r^(d(1-m)) E_m(rho) over dilations"""
    if d != rho.dimension:
        raise ValidationError(f"dimension {d} does not match the density's {rho.dimension}")
    k = d * (1 - m)
    if not m > 1:
        raise ValidationError(f"optimal dilation needs m > 1, got {m}")
    if not k < beta < 0:
        raise ValidationError(f"optimal dilation needs d(1-m) < beta < 0, got beta={beta}, d(1-m)={k}")
    if not epsilon > 0:
        raise ValidationError(f"optimal dilation needs epsilon > 0, got {epsilon}")

    W, U = PowerLaw(beta), PowerEntropy(m)
    interaction = interaction_energy(rho, W)
    entropy = entropy_energy(rho, U)
    if not interaction < 0:
        raise ValidationError(f"interaction energy must be negative, got {interaction}")
    if not 0 < entropy < np.inf:
        raise ValidationError(f"entropy must be positive and finite, got {entropy}")

    r0 = (-epsilon * k * entropy / (beta * interaction)) ** (1 / (beta - k))
    optimum = dilate(rho, r0)
    w0 = interaction_energy(optimum, W)
    e0 = entropy_energy(optimum, U)
    residual = abs(w0 - epsilon * d * (m - 1) / beta * e0) / abs(w0)
    energy = w0 + epsilon * e0
    if not energy < 0:
        raise NumericalFailure(f"free energy at the optimal dilation is {energy}, expected negative")
    logging.info(f"Optimal dilation r0={r0:.10g}, virial residual {residual:.2e}, energy {energy:.10g}")
    return OptimalDilation(r0, residual, energy, w0, e0)
