import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Tuple

import numpy as np
from scipy.special import roots_legendre

from config.settings import Config
from src.kernels_entropies.kernels import KernelSpec, Logarithmic, PowerLaw, TabulatedRadial, virial_kernel
from src.measures.radial_density import RadialDensity, unit_ball_volume
from src.utils.error_handler import InfiniteSelfInteractionError, ValidationError
from .angular import angular_kernel, graded_rule

DIAGONAL_LEVELS = 20
DIAGONAL_NODES = 6
ROW_BLOCK = 256
SHELL_NODES = 24


def _workers() -> int:
    return max(1, Config.THREADS)


def _line_energy(rho: RadialDensity, W: KernelSpec) -> float:
    """Exact interaction of a piecewise-constant density on the line.

    Cell pairs enter through second differences of the even antiderivative
    F2; they depend on i - j and i + j only, so the double sum is a Toeplitz
    plus a Hankel product.
    """
    M, h = rho.size, rho.spacing
    _, F2 = W.antiderivatives(h * np.arange(2 * M + 1))
    # F2 is even, so F2(-h) = F2(h)
    F2_ext = np.concatenate(([F2[1]], F2))
    same = F2_ext[2:M + 2] - 2 * F2_ext[1:M + 1] + F2_ext[0:M]
    cross = F2[2:2 * M + 1] - 2 * F2[1:2 * M] + F2[0:2 * M - 1]

    values = rho.values
    toeplitz = np.concatenate((same[:0:-1], same))
    direct = np.convolve(values, toeplitz)[M - 1:2 * M - 1]
    mirrored = np.convolve(values[::-1], cross)[M - 1:2 * M - 1]
    return float(np.dot(values, direct + mirrored))


def _line_potential(grid: np.ndarray, values: np.ndarray, W: KernelSpec) -> np.ndarray:
    """Exact convolution w * rho at the cell midpoints of a line density"""
    M = len(values)
    h = grid[-1] / M
    F1, _ = W.antiderivatives(h * (np.arange(-M, 2 * M) + 0.5))
    # F1[k + M] = F1((k + 1/2) h)
    direct_coeffs = F1[1:2 * M] - F1[0:2 * M - 1]           # k = -(M-1) .. M-1
    mirrored_coeffs = F1[M + 1:3 * M] - F1[M:3 * M - 1]      # n = 0 .. 2M-2
    direct = np.convolve(values, direct_coeffs)[M - 1:2 * M - 1]
    mirrored = np.convolve(values[::-1], mirrored_coeffs)[M - 1:2 * M - 1]
    return direct + mirrored


def _diagonal_cell_integrals(W: KernelSpec, d: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integral of K(r, s) r^(d-1) s^(d-1) over each square [a, b]^2.

    The kernel is singular or has a cusp along r = s, so the offset
    u = r - s is integrated on panels graded toward 0.
    """
    xu, wu = graded_rule(DIAGONAL_LEVELS, DIAGONAL_NODES)
    ys, ws = roots_legendre(DIAGONAL_NODES)
    out = np.empty(len(a))
    for start in range(0, len(a), ROW_BLOCK):
        lo = a[start:start + ROW_BLOCK, None, None]
        h = (b - a)[start:start + ROW_BLOCK, None, None]
        u = h * xu[None, :, None]
        length = h - u
        s = lo + length * (ys[None, None, :] + 1) / 2
        weight = (h * wu[None, :, None]) * (length / 2 * ws[None, None, :])
        K = angular_kernel(W, d, s + u, s)
        integrand = K * (s + u) ** (d - 1) * s ** (d - 1)
        out[start:start + ROW_BLOCK] = 2 * np.sum(integrand * weight, axis=(1, 2))
    return out


def _self_cell_potential(W: KernelSpec, d: int, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Integral of K(c, s) s^(d-1) over s in [a, b], graded toward s = c from both sides"""
    xu, wu = graded_rule(DIAGONAL_LEVELS, DIAGONAL_NODES)
    left, right = (c - a)[:, None], (b - c)[:, None]
    s_left = c[:, None] - left * xu
    s_right = c[:, None] + right * xu
    K_left = angular_kernel(W, d, c[:, None], s_left)
    K_right = angular_kernel(W, d, c[:, None], s_right)
    return (np.sum(K_left * s_left ** (d - 1) * wu, axis=1) * left[:, 0]
            + np.sum(K_right * s_right ** (d - 1) * wu, axis=1) * right[:, 0])


def _off_diagonal_block(W: KernelSpec, d: int, centroids: np.ndarray, masses: np.ndarray, start: int) -> float:
    stop = min(start + ROW_BLOCK, len(masses))
    total = 0.0
    for i in range(start, stop):
        if i + 1 < len(masses):
            K = angular_kernel(W, d, centroids[i], centroids[i + 1:])
            total += masses[i] * float(np.dot(K, masses[i + 1:]))
    return total


def _shell_energy(rho: RadialDensity, W: KernelSpec) -> float:
    """Interaction of a radial density in d >= 2.

    Distinct shells meet at their centroids; each shell's self-interaction
    uses the graded diagonal rule.
    """
    d = rho.dimension
    masses = rho.cell_masses()
    centroids = rho.centroids
    a, b = rho.grid[:-1], rho.grid[1:]

    occupied = masses > 0
    diagonal = _diagonal_cell_integrals(W, d, a[occupied], b[occupied])
    density_sq = rho.values[occupied] ** 2
    diag_total = 0.5 * (d * unit_ball_volume(d)) ** 2 * float(np.dot(density_sq, diagonal))

    starts = range(0, len(masses), ROW_BLOCK)
    with ThreadPoolExecutor(max_workers=_workers()) as executor:
        blocks = list(executor.map(lambda start: _off_diagonal_block(W, d, centroids, masses, start), starts))
    # blocks come back in submission order, keeping the reduction deterministic
    return diag_total + float(sum(blocks))


def _continuous_energy(rho: RadialDensity, W: KernelSpec) -> float:
    if not np.any(rho.values > 0):
        return 0.0
    if rho.dimension == 1:
        return _line_energy(rho, W)
    return _shell_energy(rho, W)


def _atom_cross_term(rho: RadialDensity, W: KernelSpec) -> float:
    """Integral of w(|x|) against the absolutely continuous part"""
    d = rho.dimension
    if d == 1:
        F1, _ = W.antiderivatives(rho.grid)
        return float(np.dot(rho.values, 2 * np.diff(F1)))
    x, w = roots_legendre(DIAGONAL_NODES)
    a, b = rho.grid[:-1, None], rho.grid[1:, None]
    s = a + (b - a) * (x + 1) / 2
    shells = d * unit_ball_volume(d) * np.sum(W.profile(s) * s ** (d - 1) * (b - a) / 2 * w, axis=1)
    return float(np.dot(rho.values, shells))


def interaction_energy(rho: RadialDensity, W: KernelSpec) -> float:
    """(1/2) of the double integral of W(x - y) against rho x rho"""
    d = rho.dimension
    W.check_integrable(d)
    atom = rho.atom_mass
    if atom > 0 and W.singular_at_origin:
        raise InfiniteSelfInteractionError("an atom has infinite self-interaction under a kernel singular at 0")

    core = rho.trimmed()
    W.check_range(2 * core.r_max)
    energy = _continuous_energy(core, W)
    if atom > 0:
        energy += atom * _atom_cross_term(core, W) + 0.5 * atom ** 2 * float(W.profile(np.array(0.0)))
    return energy


def interaction_energy_with_error(rho: RadialDensity, W: KernelSpec) -> Tuple[float, float]:
    """Energy together with |E(M) - E(M/2)| from merging cell pairs"""
    fine = interaction_energy(rho, W)
    core = rho.trimmed()
    if core.size < 2:
        return fine, 0.0
    coarse = interaction_energy(core.coarsened(), W)
    return fine, abs(fine - coarse)


class RadialConvolution:
    """The map rho -> W * rho at cell centroids for a fixed grid.

    In one dimension the exact Toeplitz/Hankel coefficients are kept; otherwise
    a dense matrix of shell averages is assembled once.
    """

    def __init__(self, W: KernelSpec, d: int, grid: np.ndarray):
        W.check_integrable(d)
        W.check_range(2 * grid[-1])
        self.kernel = W
        self.dimension = d
        self.grid = np.asarray(grid, dtype=float)
        self.matrix = None
        if d >= 2:
            self.matrix = self._assemble()

    def _assemble(self) -> np.ndarray:
        d, grid, W = self.dimension, self.grid, self.kernel
        a, b = grid[:-1], grid[1:]
        centroids = d / (d + 1) * (b ** (d + 1) - a ** (d + 1)) / (b ** d - a ** d)
        volumes = unit_ball_volume(d) * (b ** d - a ** d)
        with np.errstate(divide='ignore', invalid='ignore'):
            matrix = angular_kernel(W, d, centroids[:, None], centroids[None, :]) * volumes[None, :]
        np.fill_diagonal(matrix, d * unit_ball_volume(d) * _self_cell_potential(W, d, a, b, centroids))
        logging.debug(f"Assembled {len(a)}x{len(a)} shell convolution matrix in dimension {d}")
        return matrix

    def apply(self, values: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ values
        return _line_potential(self.grid, values, self.kernel)


def potential(rho: RadialDensity, W: KernelSpec) -> np.ndarray:
    """W * rho at the cell centroids (midpoints on the line)"""
    phi = RadialConvolution(W, rho.dimension, rho.grid).apply(rho.values)
    if rho.atom_mass > 0:
        phi = phi + rho.atom_mass * W.profile(rho.centroids)
    return phi


def virial_energy(rho: RadialDensity, W: KernelSpec) -> float:
    """(1/2) of the double integral of grad W(x - y).(x - y)"""
    if isinstance(W, PowerLaw):
        return W.beta * interaction_energy(rho, W)
    if isinstance(W, Logarithmic):
        W.check_integrable(rho.dimension)
        if rho.atom_mass > 0:
            raise InfiniteSelfInteractionError("an atom has infinite self-interaction under a kernel singular at 0")
        return 0.5 * rho.mass() ** 2
    return interaction_energy(rho, virial_kernel(W))


def interaction_moment(rho: RadialDensity, alpha: float) -> float:
    """Double integral of |x - y|^alpha against rho x rho"""
    if alpha <= 0:
        raise ValidationError(f"moment order must be positive, got {alpha}")
    return 2 * alpha * interaction_energy(rho, PowerLaw(alpha))


def shell_pair_average(W: KernelSpec, d: int, shell_a: Tuple[float, float], shell_b: Tuple[float, float]) -> float:
    """Mean of W(x - y) for x, y uniform on two radial shells.

    The shells must coincide or have disjoint interiors.
    """
    (a0, a1), (b0, b1) = shell_a, shell_b
    if not (0 <= a0 < a1 and 0 <= b0 < b1):
        raise ValidationError(f"invalid shells {shell_a}, {shell_b}")
    norm_a = (a1 ** d - a0 ** d) / d
    norm_b = (b1 ** d - b0 ** d) / d

    if (a0, a1) == (b0, b1):
        integral = _diagonal_cell_integrals(W, d, np.array([a0]), np.array([a1]))[0]
        return float(integral / (norm_a * norm_b))
    if a1 > b0 and b1 > a0:
        raise ValidationError("shells overlap partially")

    x, w = roots_legendre(SHELL_NODES)
    r = a0 + (a1 - a0) * (x + 1) / 2
    s = b0 + (b1 - b0) * (x + 1) / 2
    wr = (a1 - a0) / 2 * w * r ** (d - 1)
    ws = (b1 - b0) / 2 * w * s ** (d - 1)
    K = angular_kernel(W, d, r[:, None], s[None, :])
    return float(wr @ K @ ws / (norm_a * norm_b))
