import logging
from typing import Callable, List, Tuple

import numpy as np
import pandas as pd

from src.counterexamples.dyadic import DyadicDensity, certify_unbounded, dyadic_series
from src.energy.functional import entropy_energy, free_energy
from src.energy.interaction import interaction_energy, interaction_moment
from src.kernels_entropies.entropies import LinearEntropy, PowerEntropy
from src.kernels_entropies.kernels import Logarithmic, PowerLaw, TabulatedRadial, kernel_value, tabulation_grid
from src.measures.radial_density import (dilate, from_profile, gaussian, moment, rearrange_decreasing, rescale_mass,
                                         uniform_ball)
from src.measures.particle_ensemble import sample_particles
from src.particles.simulation import SimConfig, run, step
from src.scaling_analysis.dilation import dilation_derivative, dilation_energy_scan, optimal_dilation
from src.scaling_analysis.regimes import Verdict, classify_regime
from src.steady_state.fixed_point import solve_fixed_point
from src.utils.error_handler import error_handler, with_error_handling

PROPERTY_COLUMNS = ['property', 'passed', 'detail']
GRID = 256


def _bump_density(seed: int, d: int = 1):
    """A reproducible non-monotone radial density"""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.5, 3.0, 3)
    widths = rng.uniform(0.2, 0.6, 3)
    return from_profile(lambda r: sum(np.exp(-(r - c) ** 2 / (2 * w ** 2)) for c, w in zip(centers, widths)),
                        d, 4.0, GRID)


def mass_conservation() -> Tuple[bool, str]:
    densities = [uniform_ball(1.0, d, GRID) for d in (1, 2, 3)] + [gaussian(0.5, 2, GRID)]
    densities += [dilate(rho, 2.5) for rho in densities] + [rearrange_decreasing(_bump_density(1, 2))]
    worst = max(abs(rho.mass() - 1) for rho in densities)
    return worst < 1e-10, f"max mass defect {worst:.2e}"


def dilation_group_law() -> Tuple[bool, str]:
    rho = _bump_density(2, 2)
    composed, direct = dilate(dilate(rho, 1.5), 0.4), dilate(rho, 0.6)
    gap = max(np.max(np.abs(composed.grid - direct.grid)), np.max(np.abs(composed.values - direct.values)))
    return gap < 1e-10, f"max deviation {gap:.2e}"


def rearrangement_idempotence() -> Tuple[bool, str]:
    once = rearrange_decreasing(_bump_density(3, 2))
    twice = rearrange_decreasing(once)
    return bool(np.array_equal(once.values, twice.values)), "rearrange(rearrange(rho)) == rearrange(rho)"


def equimeasurability() -> Tuple[bool, str]:
    gaps = []
    for d in (1, 2):
        rho = _bump_density(4, d)
        star = rearrange_decreasing(rho)
        gaps += [abs(entropy_energy(star, U) - entropy_energy(rho, U))
                 for U in (PowerEntropy(0.5), LinearEntropy(), PowerEntropy(2.0), PowerEntropy(3.0))]
    return max(gaps) < 1e-8, f"max entropy difference {max(gaps):.2e}"


def quadratic_interaction() -> Tuple[bool, str]:
    value = interaction_energy(uniform_ball(1.0, 1, GRID), PowerLaw(2.0))
    return abs(value - 1 / 6) < 1e-10, f"W_2(uniform ball) = {value:.15g}, expected 1/6"


def logarithmic_dilation_shift() -> Tuple[bool, str]:
    rho = uniform_ball(1.0, 2, GRID)
    shift = interaction_energy(dilate(rho, 2.0), Logarithmic()) - interaction_energy(rho, Logarithmic())
    return abs(shift - 0.5 * np.log(2)) < 1e-6, f"shift {shift:.10g}, expected {0.5 * np.log(2):.10g}"


def rearrangement_lowers_energy() -> Tuple[bool, str]:
    W, U = PowerLaw(-0.5), PowerEntropy(2.0)
    rho = _bump_density(5, 2)
    before = free_energy(rho, W, U, 1.0, estimate_error=False).total
    after = free_energy(rearrange_decreasing(rho), W, U, 1.0, estimate_error=False).total
    return after <= before + 1e-9, f"E(rho*) = {after:.10g}, E(rho) = {before:.10g}"


def keller_segel_critical_noise() -> Tuple[bool, str]:
    verdict = classify_regime(Logarithmic(), LinearEntropy(), 0.25, 2)
    passed = verdict.verdict is Verdict.CRITICAL and abs(verdict.epsilon_c - 0.25) < 1e-12
    return passed, verdict.summary()


def diffusion_dominated_existence() -> Tuple[bool, str]:
    verdict = classify_regime(PowerLaw(-0.5), PowerEntropy(2.0), 1.0, 2)
    return verdict.verdict is Verdict.MINIMIZER_EXISTS, verdict.summary()


def dyadic_masses_and_certificate() -> Tuple[bool, str]:
    masses = DyadicDensity(1.5, 2, 40).ring_masses
    certificate = certify_unbounded(1.5, 1.0, 0.5, 2, 1.0)
    passed = abs(masses.sum() - 1) < 1e-12 and certificate.certified
    return passed, f"ring mass sum {masses.sum():.15g}, certified at K={certificate.K}"


def flatness_bound_respected() -> Tuple[bool, str]:
    W = TabulatedRadial.from_function(lambda r: np.minimum(r ** 2, 4.0), tabulation_grid(6.0, inner=6.0,
                                                                                          inner_points=1201))
    report = solve_fixed_point(W, 1.0, 1, 3.0, GRID)
    top = float(report.density.values.max())
    return top <= report.flatness_bound + 1e-10, f"sup {top:.10g}, bound {report.flatness_bound:.10g}"


def center_of_mass_invariance() -> Tuple[bool, str]:
    ensemble = sample_particles(gaussian(1.0, 2, GRID), 64, seed=7)
    config = SimConfig(N=64, d=2, kernel=PowerLaw(1.5), epsilon=0.0, dt=1e-3, T=1e-3)
    moved = ensemble
    for _ in range(20):
        moved = step(moved, config)
    drift = float(np.max(np.abs(moved.center_of_mass() - ensemble.center_of_mass())))
    return drift < 1e-12, f"center of mass drift {drift:.2e}"


def scaling_laws() -> Tuple[bool, str]:
    rho = _bump_density(6, 2)
    r0 = np.sqrt(2.0)
    c = r0 ** 2
    transformed = rescale_mass(dilate(rho, r0), c)
    W, U = PowerLaw(-0.5), PowerEntropy(2.0)
    gaps = [abs(interaction_energy(transformed, W) / (c ** 2 * r0 ** W.beta * interaction_energy(rho, W)) - 1),
            abs(entropy_energy(transformed, U) / (c ** 2 * r0 ** -2 * entropy_energy(rho, U)) - 1),
            abs(moment(dilate(rho, r0), 1.5) / (r0 ** 1.5 * moment(rho, 1.5)) - 1)]
    return max(gaps) < 1e-8, f"max relative deviation {max(gaps):.2e}"


def moment_sandwich() -> Tuple[bool, str]:
    worst = -np.inf
    for d in (1, 2):
        rho = _bump_density(7, d)
        for alpha in (0.5, 1.0, 2.0, 3.0):
            bound = 2 * max(1.0, 2 ** (alpha - 1)) * moment(rho, alpha)
            worst = max(worst, interaction_moment(rho, alpha) - bound)
    return worst <= 1e-8, f"max excess over the moment bound {worst:.2e}"


def triangle_variant() -> Tuple[bool, str]:
    rng = np.random.default_rng(8)
    x = rng.standard_normal((10_000, 2)) * rng.uniform(0.01, 10.0, (10_000, 1))
    y = rng.standard_normal((10_000, 2)) * rng.uniform(0.01, 10.0, (10_000, 1))
    worst = 0.0
    for alpha in (0.5, 1.0, 2.0, 3.0):
        lhs = np.linalg.norm(x - y, axis=1) ** alpha
        rhs = max(1.0, 2 ** (alpha - 1)) * (np.linalg.norm(x, axis=1) ** alpha + np.linalg.norm(y, axis=1) ** alpha)
        worst = max(worst, float(np.max(lhs / rhs)))
    return worst <= 1 + 1e-12, f"max ratio {worst:.12g} over 10^4 pairs"


def scaling_function_derivative() -> Tuple[bool, str]:
    r = np.geomspace(0.1, 10.0, 9)
    h = 1e-5 * r
    worst = 0.0
    for U in (PowerEntropy(0.5), LinearEntropy(), PowerEntropy(2.0), PowerEntropy(3.0)):
        for d in (1, 2, 3):
            difference = -r * (U.mccann_u(d, r + h) - U.mccann_u(d, r - h)) / (2 * h)
            v = U.scaling_v(d, r)
            worst = max(worst, float(np.max(np.abs(difference - v) / np.maximum(1.0, np.abs(v)))))
    return worst < 1e-6, f"max deviation of v from -r u' {worst:.2e}"


def pressure_monotone() -> Tuple[bool, str]:
    r = np.geomspace(1e-6, 1e3, 400)
    failures = []
    for U in (LinearEntropy(), PowerEntropy(1.5), PowerEntropy(2.0), PowerEntropy(3.0)):
        p = U.pressure(r)
        if np.any(p < 0) or np.any(np.diff(p) < -1e-12 * np.abs(p[1:])):
            failures.append(repr(U))
    return not failures, f"failing entropies: {', '.join(failures) or 'none'}"


def kernel_homogeneity() -> Tuple[bool, str]:
    s = np.geomspace(0.01, 100.0, 21)
    worst = 0.0
    for beta in (-1.5, -0.5, 0.5, 1.0, 2.0, 3.0):
        W = PowerLaw(beta)
        for lam in (0.3, 2.0, 7.5):
            expected = lam ** beta * kernel_value(W, s)
            worst = max(worst, float(np.max(np.abs(kernel_value(W, lam * s) / expected - 1))))
    return worst < 1e-12, f"max relative deviation {worst:.2e}"


def dilation_derivative_consistency() -> Tuple[bool, str]:
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(10):
        d = int(rng.integers(1, 4))
        beta = float(rng.choice([rng.uniform(-d + 0.2, -0.1), rng.uniform(0.1, 3.0)]))
        m = rng.uniform(0.3, 3.0)
        U = LinearEntropy() if abs(m - 1) < 0.05 else PowerEntropy(m)
        W, epsilon, r = PowerLaw(beta), rng.uniform(0.0, 2.0), rng.uniform(0.2, 5.0)
        h = 1e-4 * r
        (_, left), (_, right) = dilation_energy_scan(W, U, epsilon, d, [r - h, r + h])
        exact = dilation_derivative(W, U, epsilon, d, r)
        scale = max(1.0, abs(exact), abs(left) / r)
        worst = max(worst, abs((right - left) / (2 * h) - exact) / scale)
    return worst <= 1e-5, f"max scaled deviation {worst:.2e}"


def virial_identity() -> Tuple[bool, str]:
    cases = [(gaussian(1.0, 1, 128), -0.5, 2.0), (uniform_ball(1.0, 2, 128), -0.5, 2.0),
             (gaussian(0.5, 3, 128), -1.0, 1.5)]
    results = [optimal_dilation(rho, beta, m, 1.0, rho.dimension) for rho, beta, m in cases]
    worst = max(result.virial_residual for result in results)
    passed = worst < 1e-6 and all(result.energy < 0 for result in results)
    return passed, f"max virial residual {worst:.2e}"


def steady_state_residual() -> Tuple[bool, str]:
    report = solve_fixed_point(PowerLaw(2.0), 0.5, 1, 8.0, 1024)
    passed = report.converged and report.el_residual_sup <= 1e-3 and report.positivity_bound > 0
    passed = passed and float(report.density.values.min()) > 0
    return passed, f"residual {report.el_residual_sup:.2e}, positivity bound {report.positivity_bound:.3e}"


def run_determinism() -> Tuple[bool, str]:
    config = SimConfig(N=20, d=2, kernel=PowerLaw(1.5), epsilon=0.3, dt=0.01, T=0.1, seed=9)
    first, second = run(config), run(config)
    identical = all(np.array_equal(a.positions, b.positions) for a, b in zip(first.snapshots, second.snapshots))
    return identical, f"{len(first.snapshots)} snapshots compared bitwise"


def center_of_mass_drift() -> Tuple[bool, str]:
    epsilon, T, N, d = 0.5, 1.0, 20, 2
    shifts = []
    for seed in range(32):
        config = SimConfig(N=N, d=d, kernel=PowerLaw(2.0), epsilon=epsilon, dt=0.05, T=T, seed=seed)
        result = run(config)
        shifts.append(result.snapshots[-1].center_of_mass() - result.snapshots[0].center_of_mass())
    shifts = np.concatenate(shifts)
    variance = 2 * epsilon * T / N
    samples = len(shifts)
    passed = abs(shifts.mean()) <= 3 * np.sqrt(variance / samples)
    passed = passed and abs(np.mean(shifts ** 2) - variance) <= 3 * variance * np.sqrt(2 / samples)
    return bool(passed), f"drift variance {np.mean(shifts ** 2):.4g}, expected {variance:.4g}"


def dyadic_ratios() -> Tuple[bool, str]:
    gamma, beta, m, d = 1.5, 1.0, 0.5, 2
    series = dyadic_series(gamma, beta, m, d, 40)
    moments = np.diff(series.moment_partial_sums)[1:8]
    entropies = np.diff(series.entropy_partial_sums)[1:8]
    gaps = [np.max(np.abs(moments[1:] / moments[:-1] / 2 ** -(gamma - beta) - 1)),
            np.max(np.abs(entropies[1:] / entropies[:-1] / 2 ** -(m * gamma - d * (1 - m)) - 1))]
    return max(gaps) < 1e-12, f"max relative deviation {max(gaps):.2e}"


PROPERTIES: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
    ('mass_conservation', mass_conservation),
    ('dilation_group_law', dilation_group_law),
    ('rearrangement_idempotence', rearrangement_idempotence),
    ('equimeasurability', equimeasurability),
    ('quadratic_interaction', quadratic_interaction),
    ('logarithmic_dilation_shift', logarithmic_dilation_shift),
    ('rearrangement_lowers_energy', rearrangement_lowers_energy),
    ('keller_segel_critical_noise', keller_segel_critical_noise),
    ('diffusion_dominated_existence', diffusion_dominated_existence),
    ('dyadic_masses_and_certificate', dyadic_masses_and_certificate),
    ('flatness_bound_respected', flatness_bound_respected),
    ('center_of_mass_invariance', center_of_mass_invariance),
    ('scaling_laws', scaling_laws),
    ('moment_sandwich', moment_sandwich),
    ('triangle_variant', triangle_variant),
    ('scaling_function_derivative', scaling_function_derivative),
    ('pressure_monotone', pressure_monotone),
    ('kernel_homogeneity', kernel_homogeneity),
    ('dilation_derivative_consistency', dilation_derivative_consistency),
    ('virial_identity', virial_identity),
    ('steady_state_residual', steady_state_residual),
    ('run_determinism', run_determinism),
    ('center_of_mass_drift', center_of_mass_drift),
    ('dyadic_ratios', dyadic_ratios),
]


def property_table() -> pd.DataFrame:
    """Evaluate every invariant; a property that raises is recorded as failed"""
    rows = []
    for name, check in PROPERTIES:
        outcome = with_error_handling(error_handler, f"property_{name}")(check)()
        if isinstance(outcome, dict):
            passed, detail = False, f"error: {outcome['error']}"
        else:
            passed, detail = bool(outcome[0]), outcome[1]
        level = logging.INFO if passed else logging.WARNING
        logging.log(level, f"Property {name}: {'pass' if passed else 'FAIL'} ({detail})")
        rows.append({'property': name, 'passed': passed, 'detail': detail})
    return pd.DataFrame(rows, columns=PROPERTY_COLUMNS)
