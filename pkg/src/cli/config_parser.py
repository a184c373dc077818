import hashlib
import logging
import os
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Mapping, Optional, Tuple

from config.settings import Config
from src.kernels_entropies.entropies import EntropySpec, LinearEntropy, PowerEntropy
from src.kernels_entropies.kernels import KernelSpec, Logarithmic, PowerLaw, TabulatedRadial
from src.measures.density_io import load_density
from src.measures.radial_density import RadialDensity, gaussian, uniform_ball
from src.utils.error_handler import ConfigError

COMMANDS = ('energy', 'scan', 'classify', 'steady', 'particles', 'counterexample', 'properties')
KERNEL_VARIANTS = ('power', 'log', 'tabulated')
ENTROPY_VARIANTS = ('power', 'linear')
DENSITY_VARIANTS = ('uniform', 'gaussian', 'file')


def _key(name: str, key: str = None, default: Any = None):
    return field(default=default, metadata={'key': key or name})


@dataclass(frozen=True)
class RunConfig:
    """One batch run, read from flat `key = value` text with dotted keys"""
    command: str = _key('command')
    kernel_variant: Optional[str] = _key('kernel_variant', 'kernel.variant')
    kernel_beta: Optional[float] = _key('kernel_beta', 'kernel.beta')
    kernel_path: Optional[str] = _key('kernel_path', 'kernel.path')
    entropy_variant: str = _key('entropy_variant', 'entropy.variant', 'linear')
    entropy_m: Optional[float] = _key('entropy_m', 'entropy.m')
    epsilon: Optional[float] = _key('epsilon')
    d: Optional[int] = _key('d')
    grid_M: int = _key('grid_M', 'grid.M', 1024)
    grid_r_max: Optional[float] = _key('grid_r_max', 'grid.r_max')
    density_variant: str = _key('density_variant', 'density.variant', 'uniform')
    density_radius: float = _key('density_radius', 'density.radius', 1.0)
    density_variance: float = _key('density_variance', 'density.variance', 1.0)
    density_path: Optional[str] = _key('density_path', 'density.path')
    scan_r_min: float = _key('scan_r_min', 'scan.r_min', 1e-2)
    scan_r_max: float = _key('scan_r_max', 'scan.r_max', 1e2)
    scan_points: int = _key('scan_points', 'scan.points', 101)
    steady_R: float = _key('steady_R', 'steady.R', 4.0)
    steady_damping: float = _key('steady_damping', 'steady.damping', Config.DEFAULT_DAMPING)
    steady_max_iter: int = _key('steady_max_iter', 'steady.max_iter', Config.MAX_ITER)
    particles_N: int = _key('particles_N', 'particles.N', 200)
    particles_dt: float = _key('particles_dt', 'particles.dt', 0.01)
    particles_T: float = _key('particles_T', 'particles.T', 1.0)
    particles_stride: int = _key('particles_stride', 'particles.stride', 10)
    particles_initial_variance: float = _key('particles_initial_variance', 'particles.initial_variance', 1.0)
    dyadic_gamma: Optional[float] = _key('dyadic_gamma', 'dyadic.gamma')
    dyadic_beta: Optional[float] = _key('dyadic_beta', 'dyadic.beta')
    dyadic_m: Optional[float] = _key('dyadic_m', 'dyadic.m')
    dyadic_bound: float = _key('dyadic_bound', 'dyadic.bound', Config.DIVERGENCE_THRESHOLD)
    dyadic_k_max: int = _key('dyadic_k_max', 'dyadic.k_max', Config.DYADIC_K_MAX)
    seed: int = _key('seed', default=0)
    output: str = _key('output', default=Config.OUTPUT_DIR)


FIELD_BY_KEY = {f.metadata['key']: f for f in fields(RunConfig)}

_REQUIRED = {
    'energy': ('kernel.variant', 'epsilon', 'd'),
    'scan': ('kernel.variant', 'epsilon', 'd'),
    'classify': ('kernel.variant', 'epsilon', 'd'),
    'steady': ('kernel.variant', 'epsilon', 'd'),
    'particles': ('kernel.variant', 'epsilon', 'd'),
    'counterexample': ('dyadic.gamma', 'dyadic.beta', 'dyadic.m', 'epsilon', 'd'),
    'properties': (),
}


def _field_type(f) -> type:
    # Optional[X] -> X
    args = [arg for arg in getattr(f.type, '__args__', ()) if arg is not type(None)]
    return args[0] if args else f.type


def _convert(key: str, raw: str, line: Optional[int]) -> Any:
    kind = _field_type(FIELD_BY_KEY[key])
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key} expects {kind.__name__}, got {raw!r}", line)


def _read_assignments(text: str) -> Dict[str, Tuple[str, int]]:
    assignments = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        content = raw_line.split('#', 1)[0].strip()
        if not content:
            continue
        if '=' not in content:
            raise ConfigError(f"expected `key = value`, got {content!r}", number)
        key, value = (part.strip() for part in content.split('=', 1))
        if key not in FIELD_BY_KEY:
            raise ConfigError(f"unknown key {key!r}", number)
        if key in assignments:
            raise ConfigError(f"duplicate key {key!r} (first set on line {assignments[key][1]})", number)
        if not value:
            raise ConfigError(f"empty value for {key!r}", number)
        assignments[key] = (value, number)
    return assignments


def _validate(config: RunConfig, lines: Mapping[str, Optional[int]]):
    if config.command is None:
        raise ConfigError("missing required key 'command'")
    if config.command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}, got {config.command!r}",
                          lines.get('command'))
    for key in _REQUIRED[config.command]:
        if getattr(config, FIELD_BY_KEY[key].name) is None:
            raise ConfigError(f"missing required key '{key}' for command {config.command}")

    def fail(key: str, message: str):
        raise ConfigError(message, lines.get(key))

    if config.d is not None and config.d < 1:
        fail('d', f"d must be a positive integer, got {config.d}")
    if config.epsilon is not None and config.epsilon < 0:
        fail('epsilon', f"epsilon must be nonnegative, got {config.epsilon}")

    if config.kernel_variant is not None:
        if config.kernel_variant not in KERNEL_VARIANTS:
            fail('kernel.variant', f"kernel.variant must be one of {', '.join(KERNEL_VARIANTS)}")
        if config.kernel_variant == 'power':
            if config.kernel_beta is None:
                raise ConfigError("missing required key 'kernel.beta' for a power kernel")
            if config.kernel_beta == 0:
                fail('kernel.beta', "kernel.beta must be nonzero; use kernel.variant = log")
            if config.d is not None and config.kernel_beta <= -config.d:
                fail('kernel.beta', f"beta must exceed -d (beta={config.kernel_beta:g}, d={config.d})")
        if config.kernel_variant == 'tabulated':
            if config.kernel_path is None:
                raise ConfigError("missing required key 'kernel.path' for a tabulated kernel")
            if not os.path.exists(config.kernel_path):
                fail('kernel.path', f"kernel file {config.kernel_path} does not exist")

    if config.entropy_variant not in ENTROPY_VARIANTS:
        fail('entropy.variant', f"entropy.variant must be one of {', '.join(ENTROPY_VARIANTS)}")
    if config.entropy_variant == 'power':
        if config.entropy_m is None:
            raise ConfigError("missing required key 'entropy.m' for a power entropy")
        if not config.entropy_m > 0 or config.entropy_m == 1:
            fail('entropy.m', f"entropy.m must be positive and different from 1, got {config.entropy_m}")

    if config.density_variant not in DENSITY_VARIANTS:
        fail('density.variant', f"density.variant must be one of {', '.join(DENSITY_VARIANTS)}")
    if config.density_variant == 'file':
        if config.density_path is None:
            raise ConfigError("missing required key 'density.path' for a file density")
        if not os.path.exists(config.density_path):
            fail('density.path', f"density file {config.density_path} does not exist")

    for key in ('grid.M', 'scan.points', 'particles.N', 'particles.stride', 'steady.max_iter', 'dyadic.k_max'):
        if getattr(config, FIELD_BY_KEY[key].name) < 1:
            fail(key, f"{key} must be positive")
    for key in ('density.radius', 'density.variance', 'scan.r_min', 'steady.R', 'particles.dt', 'particles.T',
                'dyadic.bound', 'particles.initial_variance'):
        if not getattr(config, FIELD_BY_KEY[key].name) > 0:
            fail(key, f"{key} must be positive")
    if not config.scan_r_max > config.scan_r_min:
        fail('scan.r_max', "scan.r_max must exceed scan.r_min")
    if not 0 < config.steady_damping <= 1:
        fail('steady.damping', "steady.damping must lie in (0, 1]")


def parse_config(text: str, overrides: Mapping[str, str] = None) -> RunConfig:
    """Validated RunConfig from config text; overrides (e.g. command-line flags) win over the text"""
    assignments = _read_assignments(text)
    values = {key: _convert(key, raw, line) for key, (raw, line) in assignments.items()}
    lines = {key: line for key, (_, line) in assignments.items()}
    for key, raw in (overrides or {}).items():
        if key not in FIELD_BY_KEY:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _convert(key, raw, None)
        lines[key] = None

    config = RunConfig(**{FIELD_BY_KEY[key].name: value for key, value in values.items()})
    _validate(config, lines)
    logging.debug(f"Parsed run configuration for command {config.command}")
    return config


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return format(value, '.17g')
    return str(value)


def serialize_config(config: RunConfig) -> str:
    """Config text that parses back to the same RunConfig"""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if value is not None:
            lines.append(f"{f.metadata['key']} = {_format_value(value)}")
    return '\n'.join(lines) + '\n'


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(serialize_config(config).encode('utf-8')).hexdigest()[:16]


def build_kernel(config: RunConfig) -> KernelSpec:
    if config.kernel_variant == 'power':
        return PowerLaw(config.kernel_beta)
    if config.kernel_variant == 'log':
        return Logarithmic()
    if config.kernel_variant == 'tabulated':
        return TabulatedRadial.from_csv(config.kernel_path)
    raise ConfigError("no kernel configured")


def build_entropy(config: RunConfig) -> EntropySpec:
    if config.entropy_variant == 'power':
        return PowerEntropy(config.entropy_m)
    return LinearEntropy()


def build_density(config: RunConfig) -> RadialDensity:
    if config.density_variant == 'file':
        return load_density(config.density_path)
    if config.density_variant == 'gaussian':
        return gaussian(config.density_variance, config.d, config.grid_M, config.grid_r_max)
    return uniform_ball(config.density_radius, config.d, config.grid_M, config.grid_r_max)
