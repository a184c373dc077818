import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from config.settings import Config
from src.counterexamples.dyadic import certify_unbounded
from src.kernels_entropies.entropies import EntropySpec, LinearEntropy, PowerEntropy
from src.kernels_entropies.kernels import KernelSpec, Logarithmic, PowerLaw, TabulatedRadial, asymptotic_slope
from src.measures.radial_density import unit_ball_volume
from src.utils.error_handler import ValidationError
from .dilation import dilation_energy_scan, ray_interaction


class Verdict(Enum):
    UNBOUNDED_AT_INFINITY = 'UnboundedBelowAtInfinity'
    UNBOUNDED_AT_ZERO = 'UnboundedBelowAtZero'
    MINIMIZER_EXISTS = 'MinimizerExists'
    CRITICAL = 'Critical'
    INCONCLUSIVE = 'Inconclusive'


@dataclass(frozen=True)
class RegimeVerdict:
    verdict: Verdict
    epsilon_c: Optional[float] = None
    trace: Tuple[str, ...] = ()
    # set when the dilation test, not a construction, produced the verdict
    from_dilation: bool = False

    def __post_init__(self):
        if self.verdict is Verdict.CRITICAL and not (self.epsilon_c is not None
                                                      and np.isfinite(self.epsilon_c) and self.epsilon_c > 0):
            raise ValidationError(f"a critical verdict needs a finite positive epsilon_c, got {self.epsilon_c}")

    @property
    def unbounded(self) -> bool:
        return self.verdict in (Verdict.UNBOUNDED_AT_INFINITY, Verdict.UNBOUNDED_AT_ZERO)

    def summary(self) -> str:
        if self.verdict is Verdict.CRITICAL:
            return f"{self.verdict.value}(epsilon_c={self.epsilon_c:.17g})"
        return self.verdict.value


def homogeneous_threshold(beta: float, m: float, d: int) -> float:
    """Fair-competition constant 2^(beta-1) / (d omega_d^(1-m))"""
    return 2.0 ** (beta - 1) / (d * unit_ball_volume(d) ** (1 - m))


def _same(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def _verdict(verdict: Verdict, trace: List[str], epsilon_c: float = None, from_dilation: bool = False) -> RegimeVerdict:
    logging.info(f"Regime verdict: {verdict.value}" + (f" (epsilon_c={epsilon_c:.6g})" if epsilon_c else ''))
    return RegimeVerdict(verdict, epsilon_c, tuple(trace), from_dilation)


def _fast_diffusion(beta: float, m: float, d: int, epsilon: float, trace: List[str]) -> RegimeVerdict:
    """Region d(1-m) <= beta < d(1-m)/m, decided by the dyadic construction.

    A certified construction is reported as UnboundedBelowAtInfinity, not
    AtZero: its rings push mass out to ever larger radii. The choice is
    recorded with the regime decisions in DESIGN.md.
    """
    gamma = 0.5 * (beta + d * (1 - m) / m)
    trace.append(f"fast diffusion: d(1-m)={d * (1 - m):.6g} <= beta={beta:.6g} < d(1-m)/m={d * (1 - m) / m:.6g}; "
                 f"dyadic rings with gamma={gamma:.6g}")
    certificate = certify_unbounded(gamma, beta, m, d, epsilon)
    if certificate.certified:
        trace.append(f"dyadic certificate: K={certificate.K}, energy {certificate.energies[-1][1]:.6g} "
                     f"< -{Config.DIVERGENCE_THRESHOLD:g}; mass escapes to infinity")
        return _verdict(Verdict.UNBOUNDED_AT_INFINITY, trace)
    trace.append(f"dyadic construction not certified up to K={Config.DYADIC_K_MAX} "
                 f"(minimum energy {certificate.min_energy:.6g})")
    return _verdict(Verdict.INCONCLUSIVE, trace)


def _classify_power_power(W: PowerLaw, U: PowerEntropy, epsilon: float, d: int, trace: List[str]) -> RegimeVerdict:
    beta, m = W.beta, U.m
    k = d * (1 - m)
    trace.append(f"power kernel beta={beta:.6g}, power entropy m={m:.6g}, d(1-m)={k:.6g}, epsilon={epsilon:.6g}")

    if _same(beta, k):
        threshold = homogeneous_threshold(beta, m, d)
        trace.append(f"fair competition: beta = d(1-m), threshold 2^(beta-1)/(d omega_d^(1-m)) = {threshold:.10g}")
        if m < 1 and epsilon > threshold:
            trace.append("hypothesis at infinity holds: epsilon exceeds the threshold with m < 1")
            return _verdict(Verdict.UNBOUNDED_AT_INFINITY, trace, from_dilation=True)
        if m > 1 and epsilon < threshold:
            trace.append("hypothesis at zero holds: epsilon below the threshold with m > 1")
            return _verdict(Verdict.UNBOUNDED_AT_ZERO, trace, from_dilation=True)
        if m < 1:
            return _fast_diffusion(beta, m, d, epsilon, trace)
        trace.append("fair competition on the stable side of the threshold: no theorem decides")
        return _verdict(Verdict.INCONCLUSIVE, trace)

    if beta < k:
        trace.append("aggregation dominated: beta < d(1-m)")
        if beta > 0:
            trace.append("entropy term r^(d(1-m))/(m-1) -> -inf as r -> inf")
            return _verdict(Verdict.UNBOUNDED_AT_INFINITY, trace, from_dilation=True)
        trace.append("interaction term r^beta W -> -inf as r -> 0")
        return _verdict(Verdict.UNBOUNDED_AT_ZERO, trace, from_dilation=True)

    if m > 1 and beta < 0:
        trace.append("diffusion dominated with d(1-m) < beta < 0 < m-1: global minimizer exists")
        return _verdict(Verdict.MINIMIZER_EXISTS, trace)
    if m < 1 and beta < k / m:
        return _fast_diffusion(beta, m, d, epsilon, trace)
    trace.append("no dilation hypothesis or construction applies to this cell")
    return _verdict(Verdict.INCONCLUSIVE, trace)


def _classify_linear(L: float, epsilon: float, d: int, trace: List[str]) -> RegimeVerdict:
    """Linear diffusion against a kernel with asymptotic virial L"""
    epsilon_c = L / (2 * d)
    trace.append(f"asymptotic virial L={L:.10g}, critical diffusion L/(2d)={epsilon_c:.10g}")
    if np.isfinite(epsilon_c) and abs(epsilon - epsilon_c) <= Config.CRITICAL_TOL:
        if epsilon_c > 0:
            trace.append("epsilon equals L/(2d) within tolerance")
            return _verdict(Verdict.CRITICAL, trace, epsilon_c)
        trace.append("L = 0 and epsilon = 0: no theorem decides")
        return _verdict(Verdict.INCONCLUSIVE, trace)
    if epsilon < epsilon_c:
        trace.append("epsilon < L/(2d): the family is tight up to translations, a minimizer exists")
        return _verdict(Verdict.MINIMIZER_EXISTS, trace)
    trace.append("epsilon > L/(2d): hypothesis at infinity holds")
    return _verdict(Verdict.UNBOUNDED_AT_INFINITY, trace, from_dilation=True)


def hypothesis_profiles(W: KernelSpec, U: EntropySpec, epsilon: float, d: int, r_grid) -> pd.DataFrame:
    """Quantities of the two dilation hypotheses on a grid of radii.

    h_infinity = sup_{(0,2r]} virial / 2 - eps v, h_zero = inf_{(0,2r]} virial / 2 - eps v.
    """
    r = np.asarray(r_grid, dtype=float)
    doubled = 2 * r
    if isinstance(W, TabulatedRadial):
        nodes = W.radii[(W.radii > 0) & (W.radii <= doubled[-1])]
        points = np.union1d(nodes, doubled)
    else:
        points = doubled
    virial = W.virial(points)
    running_max = np.maximum.accumulate(virial)
    running_min = np.minimum.accumulate(virial)
    at = np.searchsorted(points, doubled)
    v = U.scaling_v(d, r * unit_ball_volume(d) ** (1 / d)) if epsilon != 0 else np.zeros_like(r)
    return pd.DataFrame({
        'r': r,
        'sup_virial': running_max[at],
        'inf_virial': running_min[at],
        'v': v,
        'h_infinity': 0.5 * running_max[at] - epsilon * v,
        'h_zero': 0.5 * running_min[at] - epsilon * v,
    })


def _scan_radii(W: KernelSpec) -> np.ndarray:
    r_max = Config.SCAN_R_MAX
    if isinstance(W, TabulatedRadial):
        r_max = min(r_max, W.r_max / 2)
    return np.geomspace(Config.SCAN_R_MIN, r_max, Config.SCAN_POINTS)


def _classify_numeric(W: KernelSpec, U: EntropySpec, epsilon: float, d: int, trace: List[str]) -> RegimeVerdict:
    r = _scan_radii(W)
    profiles = hypothesis_profiles(W, U, epsilon, d, r)
    last = r >= r[-1] / 10
    first = r <= r[0] * 10
    trace.append(f"numeric hypotheses on r in [{r[0]:.3g}, {r[-1]:.3g}] with {len(r)} points")

    # the quadrature behind the ray energies must be trustworthy at both ends
    for radius in (r[0], r[-1]):
        value, error = ray_interaction(W, d, radius)
        if error > Config.QUADRATURE_REL_TOL * max(abs(value), 1.0):
            trace.append(f"quadrature error {error:.3g} at r={radius:.3g} exceeds the relative tolerance")
            return _verdict(Verdict.INCONCLUSIVE, trace)

    h_inf = profiles['h_infinity'][last]
    h_zero = profiles['h_zero'][first]
    if np.all(h_inf < 0):
        trace.append(f"hypothesis at infinity: max over the last decade {h_inf.max():.6g} < 0")
        return _verdict(Verdict.UNBOUNDED_AT_INFINITY, trace, from_dilation=True)
    if np.all(h_zero > 0):
        trace.append(f"hypothesis at zero: min over the first decade {h_zero.min():.6g} > 0")
        return _verdict(Verdict.UNBOUNDED_AT_ZERO, trace, from_dilation=True)
    trace.append(f"neither hypothesis holds (last-decade max {h_inf.max():.6g}, first-decade min {h_zero.min():.6g})")
    return _verdict(Verdict.INCONCLUSIVE, trace)


def classify_regime(W: KernelSpec, U: EntropySpec, epsilon: float, d: int) -> RegimeVerdict:
    """Decide existence or nonexistence of minimizers for the free energy"""
    if epsilon < 0:
        raise ValidationError(f"epsilon must be nonnegative, got {epsilon}")
    W.check_integrable(d)
    trace = [f"kernel {W!r}, entropy {U!r}, d={d}, epsilon={epsilon:.17g}"]

    if epsilon == 0 and not isinstance(W, TabulatedRadial):
        if isinstance(W, PowerLaw) and W.beta > 0:
            trace.append("no diffusion and W >= 0 with W(0) = 0: a Dirac mass minimizes")
            return _verdict(Verdict.MINIMIZER_EXISTS, trace)
        trace.append("no diffusion and W -> -inf at the origin: concentration lowers the energy without bound")
        return _verdict(Verdict.UNBOUNDED_AT_ZERO, trace, from_dilation=True)

    if isinstance(W, PowerLaw) and isinstance(U, PowerEntropy):
        return _classify_power_power(W, U, epsilon, d, trace)

    if isinstance(W, PowerLaw) and isinstance(U, LinearEntropy):
        if W.beta < 0:
            trace.append("aggregation dominated: beta < 0 = d(1-m) in the linear limit; r^beta W -> -inf as r -> 0")
            return _verdict(Verdict.UNBOUNDED_AT_ZERO, trace, from_dilation=True)
        return _classify_linear(asymptotic_slope(W).value, epsilon, d, trace)

    if isinstance(W, Logarithmic) and isinstance(U, LinearEntropy):
        epsilon_c = 1 / (2 * d)
        trace.append(f"logarithmic kernel: E(rho_r) is affine in log r with slope 1/2 - epsilon d = "
                     f"{0.5 - epsilon * d:.10g}; critical diffusion 1/(2d) = {epsilon_c:.17g}")
        if abs(epsilon - epsilon_c) <= Config.CRITICAL_TOL:
            return _verdict(Verdict.CRITICAL, trace, epsilon_c)
        if epsilon < epsilon_c:
            return _verdict(Verdict.UNBOUNDED_AT_ZERO, trace, from_dilation=True)
        return _verdict(Verdict.UNBOUNDED_AT_INFINITY, trace, from_dilation=True)

    if isinstance(W, Logarithmic) and isinstance(U, PowerEntropy):
        k = d * (1 - U.m)
        trace.append(f"logarithmic kernel (beta = 0), power entropy m={U.m:.6g}, d(1-m)={k:.6g}")
        if k > 0:
            trace.append("aggregation dominated: 0 < d(1-m); entropy term -> -inf as r -> inf")
            return _verdict(Verdict.UNBOUNDED_AT_INFINITY, trace, from_dilation=True)
        trace.append("beta = 0 lies outside the existence theorem's range d(1-m) < beta < 0")
        return _verdict(Verdict.INCONCLUSIVE, trace)

    # tabulated kernels
    if isinstance(U, LinearEntropy):
        slope = asymptotic_slope(W)
        trace.append(f"asymptotic slope: {slope.detail}")
        if slope.determined:
            return _classify_linear(slope.value, epsilon, d, trace)
        trace.append("asymptotic slope undetermined; falling back to the dilation hypotheses")
    return _classify_numeric(W, U, epsilon, d, trace)


@dataclass(frozen=True)
class Corroboration:
    corroborated: bool
    mode: str
    r_reached: float
    energy_reached: float


def _local_slopes(r: np.ndarray, energy: np.ndarray) -> np.ndarray:
    return np.diff(energy) / np.diff(np.log(r))


def corroborate_with_scan(verdict: RegimeVerdict, W: KernelSpec, U: EntropySpec, epsilon: float, d: int,
                          max_decades: int = 60, slope_spread: float = 0.05) -> Corroboration:
    """Check a dilation-based unbounded verdict against the energy along the ray.

    The scan extends by decades until the energy drops below the divergence
    threshold, or until it shows a constant negative slope in log r.
    """
    if not verdict.unbounded:
        raise ValidationError(f"only unbounded verdicts can be corroborated, got {verdict.verdict.value}")
    toward_infinity = verdict.verdict is Verdict.UNBOUNDED_AT_INFINITY
    limit = W.r_max / 2 if isinstance(W, TabulatedRadial) else np.inf
    threshold = -Config.DIVERGENCE_THRESHOLD

    reached = (1.0, np.nan)
    for decades in range(6, max_decades + 1, 6):
        far = 10.0 ** (decades if toward_infinity else -decades)
        if toward_infinity:
            far = min(far, limit)
        r = np.geomspace(1.0, far, Config.SCAN_POINTS)
        r = np.sort(r)
        scan = np.array([energy for _, energy in dilation_energy_scan(W, U, epsilon, d, r)])
        ordered = scan if toward_infinity else scan[::-1]
        reached = (float(far), float(ordered[-1]))
        tail = ordered[len(ordered) // 2:]
        if ordered[-1] < threshold and np.all(np.diff(tail) <= 0):
            return Corroboration(True, 'threshold', *reached)

        radii = r if toward_infinity else r[::-1]
        slopes = _local_slopes(radii[len(radii) // 2:], tail)
        direction = slopes if toward_infinity else -slopes
        # energy falling at a steady rate per decade along the ray
        if np.all(direction < 0) and np.ptp(direction) <= slope_spread * np.abs(direction).min():
            return Corroboration(True, 'log-slope', *reached)
        if far >= limit:
            break
    logging.warning(f"Scan did not corroborate {verdict.verdict.value}: reached r={reached[0]:.3g}, "
                    f"energy {reached[1]:.6g}")
    return Corroboration(False, 'none', *reached)
