import logging
import sys
from typing import Callable, Dict

import numpy as np
import pandas as pd

from src.counterexamples.dyadic import certify_unbounded, dyadic_free_energy, dyadic_series
from src.energy.functional import CSV_HEADER, free_energy
from src.measures.density_io import save_density
from src.particles.simulation import SimConfig, run as run_particles, snapshot_frame
from src.scaling_analysis.dilation import dilation_derivative, dilation_energy_scan
from src.scaling_analysis.regimes import classify_regime, corroborate_with_scan
from src.steady_state.fixed_point import REPORT_HEADER, solve_fixed_point
from src.utils.error_handler import EXIT_NUMERICAL, EXIT_OK, error_handler
from src.utils.monitoring import ProcessingTimer, performance_monitor
from .config_parser import RunConfig, build_density, build_entropy, build_kernel
from .properties import property_table
from .reports import metadata_line, output_path, write_csv, write_text


def run_energy(config: RunConfig) -> int:
    rho = build_density(config)
    breakdown = free_energy(rho, build_kernel(config), build_entropy(config), config.epsilon)
    frame = pd.DataFrame([breakdown.to_row()], columns=CSV_HEADER.split(','))
    write_csv(frame, output_path(config, 'energy.csv'), config)
    print(f"total={breakdown.total:.17g}")
    return EXIT_OK


def run_scan(config: RunConfig) -> int:
    W, U = build_kernel(config), build_entropy(config)
    radii = np.geomspace(config.scan_r_min, config.scan_r_max, config.scan_points)
    scan = dilation_energy_scan(W, U, config.epsilon, config.d, radii)
    rows = [{'r': r, 'energy': energy, 'derivative': dilation_derivative(W, U, config.epsilon, config.d, r)}
            for r, energy in scan]
    write_csv(pd.DataFrame(rows, columns=['r', 'energy', 'derivative']), output_path(config, 'scan.csv'), config)
    return EXIT_OK


def run_classify(config: RunConfig) -> int:
    W, U = build_kernel(config), build_entropy(config)
    verdict = classify_regime(W, U, config.epsilon, config.d)
    corroborated = ''
    if verdict.unbounded and verdict.from_dilation:
        corroboration = corroborate_with_scan(verdict, W, U, config.epsilon, config.d)
        corroborated = corroboration.mode if corroboration.corroborated else 'no'
    frame = pd.DataFrame([{'verdict': verdict.verdict.value,
                           'epsilon_c': verdict.epsilon_c if verdict.epsilon_c is not None else np.nan,
                           'corroborated': corroborated}], columns=['verdict', 'epsilon_c', 'corroborated'])
    write_csv(frame, output_path(config, 'classify.csv'), config)
    write_text(verdict.trace, output_path(config, 'classify_trace.txt'), config)
    print(verdict.summary())
    return EXIT_OK


def run_steady(config: RunConfig) -> int:
    W = build_kernel(config)
    report = solve_fixed_point(W, config.epsilon, config.d, config.steady_R, config.grid_M,
                               config.steady_damping, config.steady_max_iter)
    density_path = output_path(config, 'steady_density.csv')
    save_density(report.density, density_path)
    with open(density_path, 'a', encoding='utf-8') as handle:
        handle.write(metadata_line(config))
    frame = pd.DataFrame([report.to_row()], columns=REPORT_HEADER.split(','))
    write_csv(frame, output_path(config, 'steady.csv'), config)
    print(','.join(format(value, '.17g') for value in report.to_row()))
    return EXIT_OK


def run_particle_system(config: RunConfig) -> int:
    sim = SimConfig(N=config.particles_N, d=config.d, kernel=build_kernel(config), epsilon=config.epsilon,
                    dt=config.particles_dt, T=config.particles_T, seed=config.seed,
                    snapshot_stride=config.particles_stride,
                    initial_variance=config.particles_initial_variance)
    result = run_particles(sim)
    write_csv(snapshot_frame(result.snapshots), output_path(config, 'particles_snapshots.csv'), config)
    write_csv(result.summary, output_path(config, 'particles_summary.csv'), config)
    stability = 'none' if result.stability_dt is None else format(result.stability_dt, '.17g')
    print(f"stability_dt={stability},coincident_pairs={result.coincident_pairs}")
    return EXIT_OK


def run_counterexample(config: RunConfig) -> int:
    gamma, beta, m, d = config.dyadic_gamma, config.dyadic_beta, config.dyadic_m, config.d
    certificate = certify_unbounded(gamma, beta, m, d, config.epsilon, config.dyadic_bound, config.dyadic_k_max)
    rows = []
    for K, energy in certificate.energies:
        series = dyadic_series(gamma, beta, m, d, K)
        rows.append({'K': K, 'moment_sum': series.moment_partial_sums[-1],
                     'entropy_sum': series.entropy_partial_sums[-1], 'energy': energy})
    write_csv(pd.DataFrame(rows, columns=['K', 'moment_sum', 'entropy_sum', 'energy']),
              output_path(config, 'counterexample.csv'), config)
    if certificate.certified:
        print(f"certified,K={certificate.K}")
    else:
        print(f"not-found,min_energy={certificate.min_energy:.17g}")
    return EXIT_OK


def run_properties(config: RunConfig) -> int:
    table = property_table()
    write_csv(table, output_path(config, 'properties.csv'), config)
    failed = int((~table['passed']).sum())
    print(f"{len(table) - failed}/{len(table)} properties passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


COMMAND_HANDLERS: Dict[str, Callable[[RunConfig], int]] = {
    'energy': run_energy,
    'scan': run_scan,
    'classify': run_classify,
    'steady': run_steady,
    'particles': run_particle_system,
    'counterexample': run_counterexample,
    'properties': run_properties,
}


def run(config: RunConfig) -> int:
    """Dispatch one command; failures become an exit status and an `error_code,message` line"""
    logging.info(f"Running command {config.command}")
    try:
        with ProcessingTimer(performance_monitor, f"command_{config.command}"):
            return COMMAND_HANDLERS[config.command](config)
    except Exception as e:
        record = error_handler.handle_processing_error(config.command, e)
        print(error_handler.format_error_line(e), file=sys.stderr)
        return record['exit_code']
