import logging
from dataclasses import dataclass, astuple
from typing import Optional

import numpy as np

from src.kernels_entropies.entropies import EntropySpec, LinearEntropy
from src.kernels_entropies.kernels import KernelSpec, Logarithmic, PowerLaw
from src.measures.radial_density import RadialDensity
from src.utils.error_handler import DensityError, ValidationError
from .interaction import interaction_energy, interaction_energy_with_error

CSV_HEADER = 'interaction,entropy,epsilon,total,err_est'


@dataclass(frozen=True)
class EnergyBreakdown:
    interaction: float
    entropy: float
    epsilon: float
    total: float
    quadrature_error_estimate: float = 0.0
    # pairs dropped from an empirical estimate for coinciding under a singular kernel
    excluded_pairs: int = 0

    @classmethod
    def compose(cls, interaction: float, entropy: float, epsilon: float,
                error: float = 0.0, excluded_pairs: int = 0) -> 'EnergyBreakdown':
        # epsilon = 0 keeps an infinite entropy out of the total
        diffusion = epsilon * entropy if epsilon != 0 else 0.0
        return cls(interaction, entropy, epsilon, interaction + diffusion, error, excluded_pairs)

    def to_row(self) -> tuple:
        return astuple(self)[:5]


def entropy_energy(rho: RadialDensity, U: EntropySpec) -> float:
    """Integral of U(rho) over R^d plus atom_mass * U_s; +inf is a legitimate value"""
    absolutely_continuous = float(np.sum(U.value(rho.values) * rho.shell_volumes()))
    if rho.atom_mass > 0:
        return absolutely_continuous + rho.atom_mass * U.singular_slope
    return absolutely_continuous


def free_energy(rho: RadialDensity, W: KernelSpec, U: EntropySpec, epsilon: float,
                estimate_error: bool = True) -> EnergyBreakdown:
    """Interaction plus epsilon times entropy"""
    if epsilon < 0:
        raise ValidationError(f"epsilon must be nonnegative, got {epsilon}")
    if estimate_error:
        interaction, error = interaction_energy_with_error(rho, W)
    else:
        interaction, error = interaction_energy(rho, W), 0.0
    entropy = entropy_energy(rho, U)
    breakdown = EnergyBreakdown.compose(interaction, entropy, epsilon, error)
    logging.debug(f"Free energy {breakdown.total:.10g} (interaction {interaction:.10g}, "
                  f"entropy {entropy:.10g}, error estimate {error:.2e})")
    return breakdown


def _lp_integral(rho: RadialDensity, p: float) -> float:
    return float(np.sum(rho.values ** p * rho.shell_volumes()))


def hls_ratio(rho: RadialDensity, lam: float, m: Optional[float] = None) -> float:
    """Double integral of |x - y|^lam over the integral of rho^(1 - lam/d).

    With m above the critical exponent the denominator becomes
    ||rho||_m^((1 - theta) m_c), the interpolated form with
    1/m_c = theta + (1 - theta)/m.
    """
    d = rho.dimension
    if not -d < lam < 0:
        raise ValidationError(f"lambda must lie in (-d, 0), got {lam} for d={d}")
    if rho.atom_mass > 0:
        raise DensityError("HLS diagnostics need an atom-free density")
    m_c = 1 - lam / d
    numerator = 2 * lam * interaction_energy(rho, PowerLaw(lam))

    if m is None or m == m_c:
        return numerator / _lp_integral(rho, m_c)
    if m < m_c:
        raise ValidationError(f"m must be at least the critical exponent {m_c}, got {m}")
    theta = (1 / m_c - 1 / m) / (1 - 1 / m)
    norm_m = _lp_integral(rho, m) ** (1 / m)
    return numerator / norm_m ** ((1 - theta) * m_c)


def log_hls_gap(rho: RadialDensity, d: Optional[int] = None) -> float:
    """(1/d) int rho log rho + double integral of log|x - y|; bounded below by the log-HLS inequality"""
    if d is not None and d != rho.dimension:
        raise ValidationError(f"dimension {d} does not match the density's {rho.dimension}")
    if rho.atom_mass > 0:
        raise DensityError("log-HLS diagnostics need an atom-free density")
    d = rho.dimension
    entropy = entropy_energy(rho, LinearEntropy())
    return entropy / d + 2 * interaction_energy(rho, Logarithmic())
