import logging

import pandas as pd
import pytest

from config.settings import Config
from main import main, parse_overrides, split_arguments
from src.cli.config_parser import RunConfig, build_density, build_entropy, build_kernel, config_hash, parse_config, \
    serialize_config
from src.cli.runner import run
from src.kernels_entropies.entropies import PowerEntropy
from src.kernels_entropies.kernels import Logarithmic
from src.utils.error_handler import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, ConfigError

CLASSIFY_LOG = """
command = classify
kernel.variant = log   # Keller-Segel
entropy.variant = linear
epsilon = 0.25
d = 2
"""


def _config(tmp_path, text: str) -> RunConfig:
    return parse_config(text, {'output': str(tmp_path / 'out')})


class TestParseConfig:
    def test_classify_config(self, tmp_path):
        config = _config(tmp_path, CLASSIFY_LOG)
        assert config.command == 'classify'
        assert config.epsilon == 0.25 and config.d == 2
        assert isinstance(build_kernel(config), Logarithmic)

    def test_missing_dimension(self):
        with pytest.raises(ConfigError, match="missing required key 'd'"):
            parse_config("command = energy\nkernel.variant = log\nepsilon = 1\n")

    def test_beta_below_minus_d(self):
        text = "command = energy\nkernel.variant = power\nkernel.beta = -3\nepsilon = 1\nd = 2\n"
        with pytest.raises(ConfigError, match="line 3: beta must exceed -d") as excinfo:
            parse_config(text)
        assert excinfo.value.line == 3

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("command = energy\nkernel.colour = red\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate key"):
            parse_config("command = energy\nd = 1\nd = 2\n")

    def test_bad_number(self):
        with pytest.raises(ConfigError, match="epsilon expects float"):
            parse_config("command = energy\nkernel.variant = log\nepsilon = lots\nd = 1\n")

    def test_overrides_win(self):
        config = parse_config(CLASSIFY_LOG, {'epsilon': '0.5', 'entropy.variant': 'power', 'entropy.m': '2'})
        assert config.epsilon == 0.5
        assert build_entropy(config) == PowerEntropy(2.0)

    def test_power_entropy_needs_exponent(self):
        with pytest.raises(ConfigError, match="entropy.m"):
            parse_config(CLASSIFY_LOG, {'entropy.variant': 'power'})

    def test_round_trip(self, tmp_path):
        config = _config(tmp_path, CLASSIFY_LOG + "density.variant = gaussian\ndensity.variance = 0.3\n")
        again = parse_config(serialize_config(config))
        assert again == config
        assert config_hash(again) == config_hash(config)

    def test_hash_changes_with_parameters(self, tmp_path):
        first = _config(tmp_path, CLASSIFY_LOG)
        second = parse_config(CLASSIFY_LOG, {'output': str(tmp_path / 'out'), 'epsilon': '0.3'})
        assert config_hash(first) != config_hash(second)

    def test_density_builder(self, tmp_path):
        config = _config(tmp_path, CLASSIFY_LOG + "grid.M = 64\ndensity.radius = 2\n")
        rho = build_density(config)
        assert rho.dimension == 2 and rho.size == 64
        assert rho.support_radius() == pytest.approx(2.0)


class TestOverrides:
    def test_equals_and_separate_forms(self):
        assert parse_overrides(['--kernel.beta=-0.5', '--d', '2']) == {'kernel.beta': '-0.5', 'd': '2'}

    def test_stray_argument(self):
        with pytest.raises(ValueError):
            parse_overrides(['energy.csv'])

    def test_dangling_flag(self):
        with pytest.raises(ValueError):
            parse_overrides(['--epsilon'])

    def test_split_keeps_command_away_from_override_values(self):
        app_args, override_args = split_arguments(['--kernel.beta', '-0.5', '--config', 'run.cfg', 'classify'])
        assert app_args == ['--config', 'run.cfg', 'classify']
        assert override_args == ['--kernel.beta', '-0.5']

    def test_split_equals_forms(self):
        app_args, override_args = split_arguments(['--log-level=ERROR', '--d=2', 'energy'])
        assert app_args == ['--log-level=ERROR', 'energy']
        assert override_args == ['--d=2']


class TestCommands:
    def test_classify_prints_verdict(self, tmp_path, capsys):
        config = _config(tmp_path, CLASSIFY_LOG)
        assert run(config) == EXIT_OK
        assert capsys.readouterr().out.strip() == 'Critical(epsilon_c=0.25)'
        table = pd.read_csv(tmp_path / 'out' / 'classify.csv', comment='#')
        assert table['verdict'][0] == 'Critical'
        trace = (tmp_path / 'out' / 'classify_trace.txt').read_text().splitlines()
        assert trace[-1].startswith(f"# {Config.VERSION},")

    def test_scan_header(self, tmp_path):
        text = "command = scan\nkernel.variant = power\nkernel.beta = 2\nepsilon = 1\nd = 1\nscan.points = 11\n"
        config = _config(tmp_path, text)
        assert run(config) == EXIT_OK
        lines = (tmp_path / 'out' / 'scan.csv').read_text().splitlines()
        assert lines[0] == 'r,energy,derivative'
        assert len(lines) == 1 + 11 + 1

    def test_energy_output_reproducible(self, tmp_path):
        text = "command = energy\nkernel.variant = power\nkernel.beta = -0.5\nentropy.variant = power\n" \
               "entropy.m = 2\nepsilon = 1\nd = 2\ngrid.M = 128\n"
        config = _config(tmp_path, text)
        path = tmp_path / 'out' / 'energy.csv'
        run(config)
        first = path.read_bytes()
        run(config)
        assert path.read_bytes() == first
        assert first.decode().splitlines()[-1] == f"# {Config.VERSION},{config_hash(config)}"

    def test_steady_overflow_exit(self, tmp_path, capsys):
        text = "command = steady\nkernel.variant = power\nkernel.beta = 2\nepsilon = 0.001\nd = 1\n" \
               "steady.R = 8\ngrid.M = 256\n"
        assert run(_config(tmp_path, text)) == EXIT_NUMERICAL
        assert 'exponential_overflow,' in capsys.readouterr().err

    def test_steady_writes_density(self, tmp_path):
        text = "command = steady\nkernel.variant = power\nkernel.beta = 2\nepsilon = 0.5\nd = 1\n" \
               "steady.R = 6\ngrid.M = 256\n"
        assert run(_config(tmp_path, text)) == EXIT_OK
        report = pd.read_csv(tmp_path / 'out' / 'steady.csv', comment='#')
        assert list(report.columns) == ['C', 'residual', 'iters', 'converged', 'flatness_bound']
        assert report['converged'][0] == 1
        assert (tmp_path / 'out' / 'steady_density.csv').exists()

    def test_counterexample_rejects_slow_diffusion(self, tmp_path, capsys):
        text = "command = counterexample\ndyadic.gamma = 1.5\ndyadic.beta = 1\ndyadic.m = 1.5\nepsilon = 1\nd = 2\n"
        assert run(_config(tmp_path, text)) == EXIT_VALIDATION
        assert 'validation_error,' in capsys.readouterr().err

    def test_counterexample_certified(self, tmp_path, capsys):
        text = "command = counterexample\ndyadic.gamma = 1.5\ndyadic.beta = 1\ndyadic.m = 0.5\nepsilon = 1\nd = 2\n"
        assert run(_config(tmp_path, text)) == EXIT_OK
        assert capsys.readouterr().out.startswith('certified,K=')
        table = pd.read_csv(tmp_path / 'out' / 'counterexample.csv', comment='#')
        assert table['energy'].iloc[-1] < -1e3

    def test_particles(self, tmp_path, capsys):
        text = "command = particles\nkernel.variant = power\nkernel.beta = 2\nepsilon = 0.1\nd = 2\n" \
               "particles.N = 8\nparticles.T = 0.1\nparticles.stride = 5\n"
        assert run(_config(tmp_path, text)) == EXIT_OK
        assert capsys.readouterr().out.strip() == 'stability_dt=1,coincident_pairs=0'
        summary = pd.read_csv(tmp_path / 'out' / 'particles_summary.csv', comment='#')
        assert len(summary) == 3
        snapshots = pd.read_csv(tmp_path / 'out' / 'particles_snapshots.csv', comment='#')
        assert list(snapshots.columns) == ['t', 'particle_id', 'x_1', 'x_2']
        assert len(snapshots) == 3 * 8

    @pytest.mark.slow
    def test_properties(self, tmp_path, capsys):
        config = _config(tmp_path, "command = properties\n")
        assert run(config) == EXIT_OK
        table = pd.read_csv(tmp_path / 'out' / 'properties.csv', comment='#')
        assert set(table['property']) == {
            'mass_conservation', 'dilation_group_law', 'rearrangement_idempotence', 'equimeasurability',
            'quadratic_interaction', 'logarithmic_dilation_shift', 'rearrangement_lowers_energy',
            'keller_segel_critical_noise', 'diffusion_dominated_existence', 'dyadic_masses_and_certificate',
            'flatness_bound_respected', 'center_of_mass_invariance', 'scaling_laws', 'moment_sandwich',
            'triangle_variant', 'scaling_function_derivative', 'pressure_monotone', 'kernel_homogeneity',
            'dilation_derivative_consistency', 'virial_identity', 'steady_state_residual', 'run_determinism',
            'center_of_mass_drift', 'dyadic_ratios',
        }
        assert len(table) == len(set(table['property']))
        failed = table.loc[~table['passed'], 'property'].tolist()
        assert not failed


class TestMain:
    @pytest.fixture(autouse=True)
    def log_dir(self, tmp_path, monkeypatch):
        monkeypatch.setattr(Config, 'LOG_DIR', str(tmp_path / 'logs'))
        root = logging.getLogger()
        handlers, level = root.handlers[:], root.level
        yield
        for handler in root.handlers[:]:
            if handler not in handlers:
                handler.close()
        root.handlers[:] = handlers
        root.setLevel(level)

    def test_config_file_with_overrides(self, tmp_path, capsys):
        path = tmp_path / 'run.cfg'
        path.write_text(CLASSIFY_LOG)
        status = main(['--config', str(path), '--log-level', 'WARNING', f"--output={tmp_path / 'out'}",
                       '--epsilon=1'])
        assert status == EXIT_OK
        assert capsys.readouterr().out.strip() == 'UnboundedBelowAtInfinity'

    def test_command_argument(self, tmp_path, capsys):
        path = tmp_path / 'run.cfg'
        path.write_text(CLASSIFY_LOG.replace('command = classify', 'command = energy'))
        status = main(['classify', '--config', str(path), '--log-level', 'WARNING', f"--output={tmp_path / 'out'}"])
        assert status == EXIT_OK
        assert 'Critical' in capsys.readouterr().out

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        path = tmp_path / 'run.cfg'
        path.write_text("command = energy\nkernel.variant = power\nkernel.beta = -3\nepsilon = 1\nd = 2\n")
        assert main(['--config', str(path), '--log-level', 'ERROR']) == EXIT_VALIDATION
        assert 'config_error,line 3: beta must exceed -d' in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(['--config', str(tmp_path / 'absent.cfg')]) == EXIT_VALIDATION
        assert capsys.readouterr().err.startswith('config_error,')

    def test_thread_cap(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text(CLASSIFY_LOG)
        main(['--config', str(path), '--threads', '0', '--log-level', 'ERROR', f"--output={tmp_path / 'out'}"])
        assert Config.THREADS == 1

    def test_separate_overrides_before_command(self, tmp_path, capsys):
        status = main(['--log-level', 'WARNING', '--kernel.variant', 'log', '--entropy.variant', 'linear',
                       '--d', '2', '--epsilon', '0.25', '--output', str(tmp_path / 'out'), 'classify'])
        assert status == EXIT_OK
        assert capsys.readouterr().out.strip() == 'Critical(epsilon_c=0.25)'
