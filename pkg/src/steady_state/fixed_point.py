import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from config.settings import Config
from src.energy.interaction import RadialConvolution, potential
from src.kernels_entropies.entropies import EntropySpec, LinearEntropy
from src.kernels_entropies.kernels import KernelSpec
from src.measures.radial_density import RadialDensity, radial_grid, unit_ball_volume
from src.utils.error_handler import DensityError, ExponentialOverflowError, ValidationError
from src.utils.monitoring import ProcessingTimer, performance_monitor


@dataclass(frozen=True)
class ELResidual:
    equality_residual: float
    inequality_margin: float
    multiplier: float


@dataclass(frozen=True)
class SteadyStateReport:
    """Outcome of the damped fixed-point iteration on the ball B_R"""
    density: RadialDensity
    multiplier: float
    el_residual_sup: float
    inequality_margin: float
    iterations: int
    converged: bool
    flatness_bound: float
    positivity_bound: float
    damping: float

    def to_row(self) -> tuple:
        return (self.multiplier, self.el_residual_sup, self.iterations, int(self.converged), self.flatness_bound)


REPORT_HEADER = 'C,residual,iters,converged,flatness_bound'


def el_residual(rho: RadialDensity, W: KernelSpec, U: EntropySpec, epsilon: float) -> ELResidual:
    """Euler-Lagrange residuals of rho.

    On the numerical support eps U'(rho) + W*rho should equal a constant C;
    outside it the same expression should stay at or above C.
    """
    if rho.atom_mass > 0:
        raise DensityError("Euler-Lagrange residuals need an atom-free density")
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    values = rho.values
    top = float(values.max())
    support = values > Config.SUPPORT_FLOOR * top
    if top <= 0 or not np.any(support):
        raise DensityError("density has empty support")

    phi = potential(rho, W)
    expression = epsilon * U.derivative(values) + phi
    weights = rho.cell_masses()[support]
    multiplier = float(np.dot(expression[support], weights) / weights.sum())
    equality = float(np.max(np.abs(expression[support] - multiplier)))

    outside = ~support
    margin = float(np.min(expression[outside] - multiplier)) if np.any(outside) else np.inf
    return ELResidual(equality, margin, multiplier)


def flatness_bound(W: KernelSpec, epsilon: float, d: int, R: float) -> float:
    """|B_R|^-1 exp((sup w - inf w)/eps) over [0, 2R]; +inf for kernels unbounded there"""
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    low, high = W.bounds_on(2 * R)
    volume = unit_ball_volume(d) * R ** d
    if not (np.isfinite(low) and np.isfinite(high)):
        return np.inf
    with np.errstate(over='ignore'):
        return float(np.exp((high - low) / epsilon) / volume)


def _gibbs(phi: np.ndarray, epsilon: float, volumes: np.ndarray) -> np.ndarray:
    """Normalized exp(-phi/eps) on the grid, computed with the shifted exponent"""
    spread = (phi.max() - phi.min()) / epsilon
    if not np.isfinite(spread) or spread > Config.MAX_EXPONENT:
        raise ExponentialOverflowError(f"exponent range {spread:.6g} exceeds {Config.MAX_EXPONENT:g} "
                                       f"(sup of W*rho/eps = {phi.max() / epsilon:.6g})")
    g = np.exp(-(phi - phi.min()) / epsilon)
    return g / np.dot(g, volumes)


def solve_fixed_point(W: KernelSpec, epsilon: float, d: int, R: float, M: int = None,
                      damping: float = None, max_iter: int = None) -> SteadyStateReport:
    """Steady state of linear diffusion against W on B_R.

    Iterates rho <- (1 - theta) rho + theta exp(-W*rho/eps)/Z starting from
    the uniform density; theta is halved after two consecutive reversals of
    the update direction. The reported density is the Gibbs map of the last
    iterate.
    """
    M = Config.GRID_SIZE if M is None else M
    theta = Config.DEFAULT_DAMPING if damping is None else damping
    max_iter = Config.MAX_ITER if max_iter is None else max_iter
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if not R > 0:
        raise ValidationError(f"domain radius must be positive, got {R}")
    if not 0 < theta <= 1:
        raise ValidationError(f"damping must lie in (0, 1], got {theta}")
    if int(max_iter) != max_iter or max_iter < 1:
        raise ValidationError(f"max_iter must be a positive integer, got {max_iter}")

    grid = radial_grid(R, M)
    volumes = unit_ball_volume(d) * np.diff(grid ** d)
    with ProcessingTimer(performance_monitor, 'steady_state_assembly'):
        convolution = RadialConvolution(W, d, grid)

    current = np.full(M, 1.0 / (unit_ball_volume(d) * R ** d))
    previous_step: Optional[np.ndarray] = None
    reversals = 0
    update = np.inf
    iterations = 0

    with ProcessingTimer(performance_monitor, 'steady_state_iteration'):
        for iterations in range(1, max_iter + 1):
            target = _gibbs(convolution.apply(current), epsilon, volumes)
            step = theta * (target - current)
            update = float(np.max(np.abs(step)))
            current = current + step
            logging.debug(f"Fixed-point iteration {iterations}: update {update:.3e}, theta {theta:g}")
            if update < Config.FP_TOL:
                break
            if previous_step is not None and np.dot(step, previous_step) < 0:
                reversals += 1
                if reversals == 2:
                    theta /= 2
                    reversals = 0
                    logging.debug(f"Update direction reversed twice; damping lowered to {theta:g}")
            else:
                reversals = 0
            previous_step = step

    phi = convolution.apply(current)
    final = _gibbs(phi, epsilon, volumes)
    density = RadialDensity(d, grid, final)
    residual = el_residual(density, W, LinearEntropy(), epsilon)
    converged = update < Config.FP_TOL and residual.equality_residual <= Config.EL_TOL
    bound = flatness_bound(W, epsilon, d, R)

    # rho = exp((C - eps - W*rho)/eps) for U'(rho) = 1 + log rho
    phi_final = convolution.apply(final)
    with np.errstate(over='ignore', under='ignore'):
        positivity = float(np.exp((residual.multiplier - epsilon - phi_final.max()) / epsilon))

    if converged:
        logging.info(f"Fixed point converged after {iterations} iterations: C={residual.multiplier:.10g}, "
                     f"residual {residual.equality_residual:.2e}")
    else:
        logging.warning(f"Fixed point not converged after {iterations} iterations: update {update:.2e}, "
                        f"residual {residual.equality_residual:.2e}")
    return SteadyStateReport(density, residual.multiplier, residual.equality_residual, residual.inequality_margin,
                             iterations, converged, bound, positivity, theta)


def spreading_series(W: KernelSpec, epsilon: float, d: int, radii: Iterable[float], M: int = None) -> pd.DataFrame:
    """Sup of the bounded-domain steady state as the domain grows"""
    rows = []
    for R in radii:
        report = solve_fixed_point(W, epsilon, d, R, M)
        rows.append({'R': float(R),
                     'sup_density': float(report.density.values.max()),
                     'flatness_bound': report.flatness_bound,
                     'converged': report.converged})
    return pd.DataFrame(rows, columns=['R', 'sup_density', 'flatness_bound', 'converged'])
