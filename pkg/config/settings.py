import os
from dotenv import load_dotenv

load_dotenv()

class Config:
    VERSION = '1.0.0'

    # Radial grids
    GRID_SIZE = int(os.getenv('GRID_SIZE', 4096))
    MIN_GRID_SIZE = 8
    MASS_TOL = float(os.getenv('MASS_TOL', 1e-10))
    SPACING_TOL = 1e-12

    # Steady-state solver
    FP_TOL = float(os.getenv('FP_TOL', 1e-10))
    EL_TOL = float(os.getenv('EL_TOL', 1e-3))
    SUPPORT_FLOOR = 1e-12
    DEFAULT_DAMPING = float(os.getenv('DEFAULT_DAMPING', 0.5))
    MAX_ITER = int(os.getenv('MAX_ITER', 5000))
    # exp() overflows a double just above 709
    MAX_EXPONENT = 700.0

    # Dilation scans and regime classification
    SCAN_POINTS = int(os.getenv('SCAN_POINTS', 500))
    SCAN_R_MIN = float(os.getenv('SCAN_R_MIN', 1e-6))
    SCAN_R_MAX = float(os.getenv('SCAN_R_MAX', 1e6))
    CRITICAL_TOL = 1e-9
    QUADRATURE_REL_TOL = 1e-3
    DIVERGENCE_THRESHOLD = float(os.getenv('DIVERGENCE_THRESHOLD', 1e3))
    ASYMPTOTIC_OSCILLATION_TOL = 1e-3

    # Dyadic counterexample
    DYADIC_K_START = 8
    DYADIC_K_MAX = int(os.getenv('DYADIC_K_MAX', 4096))
    DYADIC_CELLS_PER_RING = 32

    # Particles
    PARTICLE_MAX_N = int(os.getenv('PARTICLE_MAX_N', 10000))
    PARTICLE_BLOCK = 512
    MIN_HISTOGRAM_BINS = 16

    # Processing settings
    THREADS = int(os.getenv('THREADS', os.cpu_count() or 1))
    LOG_DIR = os.getenv('LOG_DIR', 'logs')
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'output')
