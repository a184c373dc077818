import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma, roots_legendre

from config.settings import Config
from src.utils.error_handler import DensityError, ValidationError


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d"""
    return float(np.pi ** (d / 2) / gamma(d / 2 + 1))


def _readonly(array) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class RadialDensity:
    """Radially symmetric density, piecewise constant on a radial grid.

    `grid` holds the M+1 cell edges r_0 = 0 < ... < r_M and `values` the M
    per-cell densities (mass per unit d-volume). `atom_mass` is a point mass
    at the origin. Densities built by `rescale_mass` carry `unit_mass=False`
    and skip the normalization check. Grids are uniform unless
    `uniform_grid=False`, which only rearrangement in d >= 2 produces.
    """
    dimension: int
    grid: np.ndarray
    values: np.ndarray
    atom_mass: float = 0.0
    unit_mass: bool = True
    uniform_grid: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'grid', _readonly(self.grid))
        object.__setattr__(self, 'values', _readonly(self.values))
        object.__setattr__(self, 'atom_mass', float(self.atom_mass))
        self._validate()

    def _validate(self):
        d, grid, values = self.dimension, self.grid, self.values
        if int(d) != d or d < 1:
            raise DensityError(f"dimension must be a positive integer, got {d}")
        if grid.ndim != 1 or len(grid) < 2:
            raise DensityError("grid needs at least two edges")
        if len(values) != len(grid) - 1:
            raise DensityError(f"expected {len(grid) - 1} cell values, got {len(values)}")
        if grid[0] != 0.0:
            raise DensityError(f"grid must start at 0, starts at {grid[0]}")
        steps = np.diff(grid)
        if np.any(steps <= 0):
            raise DensityError("grid must be strictly increasing")
        # uniform spacing, measured against the grid extent
        if self.uniform_grid and np.max(np.abs(steps - steps.mean())) > Config.SPACING_TOL * grid[-1]:
            raise DensityError("grid spacing is not uniform")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise DensityError("density values must be finite and nonnegative")
        if not np.isfinite(self.atom_mass) or self.atom_mass < 0:
            raise DensityError(f"atom mass must be nonnegative, got {self.atom_mass}")
        if self.unit_mass:
            if self.atom_mass > 1:
                raise DensityError(f"atom mass must lie in [0, 1], got {self.atom_mass}")
            total = self.mass()
            if abs(total - 1.0) > Config.MASS_TOL:
                raise DensityError(f"total mass {total:.15g} differs from 1")

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def spacing(self) -> float:
        if not self.uniform_grid:
            raise ValidationError("a non-uniform grid has no single spacing")
        return float(self.grid[-1] / self.size)

    @property
    def r_max(self) -> float:
        return float(self.grid[-1])

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.grid[:-1] + self.grid[1:])

    @property
    def centroids(self) -> np.ndarray:
        """Radial centroid of each shell under the r^(d-1) weight"""
        d = self.dimension
        a, b = self.grid[:-1], self.grid[1:]
        return d / (d + 1) * (b ** (d + 1) - a ** (d + 1)) / (b ** d - a ** d)

    def shell_volumes(self) -> np.ndarray:
        d = self.dimension
        return unit_ball_volume(d) * (self.grid[1:] ** d - self.grid[:-1] ** d)

    def cell_masses(self) -> np.ndarray:
        return self.values * self.shell_volumes()

    def mass(self) -> float:
        return float(self.atom_mass + np.sum(self.cell_masses()))

    def support_radius(self) -> float:
        """Outer edge of the last cell carrying mass"""
        nonzero = np.flatnonzero(self.values > 0)
        if len(nonzero) == 0:
            return 0.0
        return float(self.grid[nonzero[-1] + 1])

    def moment(self, alpha: float) -> float:
        """Integral of |x|^alpha against the density, exact on each cell"""
        if alpha <= 0:
            raise ValidationError(f"moment order must be positive, got {alpha}")
        d = self.dimension
        a, b = self.grid[:-1], self.grid[1:]
        shells = d * unit_ball_volume(d) * (b ** (alpha + d) - a ** (alpha + d)) / (alpha + d)
        return float(np.sum(self.values * shells))

    def with_values(self, values, atom_mass: Optional[float] = None) -> 'RadialDensity':
        return replace(self, values=values,
                       atom_mass=self.atom_mass if atom_mass is None else atom_mass)

    def trimmed(self) -> 'RadialDensity':
        """Drop trailing empty cells, keeping at least one"""
        occupied = np.flatnonzero(self.values > 0)
        keep = int(occupied[-1]) + 1 if len(occupied) else 1
        if keep == self.size:
            return self
        return replace(self, grid=self.grid[:keep + 1], values=self.values[:keep])

    def coarsened(self) -> 'RadialDensity':
        """Merge neighbouring cell pairs, conserving the mass of each pair"""
        masses = self.cell_masses()
        if self.size % 2:
            masses = np.append(masses, 0.0)
        if self.uniform_grid:
            grid = 2 * self.spacing * np.arange(len(masses) // 2 + 1)
        elif self.size % 2:
            # the odd trailing cell stays on its own
            grid = np.append(self.grid[0::2], self.grid[-1])
        else:
            grid = self.grid[0::2]
        d = self.dimension
        volumes = unit_ball_volume(d) * (grid[1:] ** d - grid[:-1] ** d)
        values = (masses[0::2] + masses[1::2]) / volumes
        return replace(self, grid=grid, values=values)


def radial_grid(r_max: float, M: int) -> np.ndarray:
    return r_max / M * np.arange(M + 1)


def _check_grid_size(M: int):
    if int(M) != M or M < Config.MIN_GRID_SIZE:
        raise ValidationError(f"grid too coarse: M={M}, need at least {Config.MIN_GRID_SIZE}")


def uniform_ball(r: float, d: int, M: int = None, r_max: Optional[float] = None) -> RadialDensity:
    """Normalized indicator of the ball of radius r on a grid over [0, r_max]"""
    M = Config.GRID_SIZE if M is None else M
    if not r > 0:
        raise ValidationError(f"ball radius must be positive, got {r}")
    _check_grid_size(M)
    r_max = 2.0 * r if r_max is None else r_max
    if r_max < r:
        raise ValidationError(f"grid extent {r_max} is smaller than the ball radius {r}")

    grid = radial_grid(r_max, M)
    a, b = grid[:-1], grid[1:]
    # fraction of each shell's volume lying inside the ball
    inside = np.clip(np.minimum(b, r) ** d - a ** d, 0.0, None) / (b ** d - a ** d)
    values = inside / (unit_ball_volume(d) * r ** d)
    return RadialDensity(d, grid, values)


def from_profile(profile: Callable[[np.ndarray], np.ndarray], d: int, r_max: float,
                 M: int = None, nodes: int = 4) -> RadialDensity:
    """Cell averages of a nonnegative radial profile, renormalized to unit mass.

    `profile` must accept numpy arrays of radii.
    """
    M = Config.GRID_SIZE if M is None else M
    _check_grid_size(M)
    if not r_max > 0:
        raise ValidationError(f"grid extent must be positive, got {r_max}")

    grid = radial_grid(r_max, M)
    x, w = roots_legendre(nodes)
    a, b = grid[:-1, None], grid[1:, None]
    r = a + (b - a) * (x + 1) / 2
    weights = w * r ** (d - 1)
    samples = np.asarray(profile(r), dtype=float)
    if np.any(samples < 0) or not np.all(np.isfinite(samples)):
        raise DensityError("profile must be finite and nonnegative on the grid")
    values = np.sum(samples * weights, axis=1) / np.sum(weights, axis=1)

    volumes = unit_ball_volume(d) * (grid[1:] ** d - grid[:-1] ** d)
    total = np.sum(values * volumes)
    if total <= 0:
        raise DensityError("profile carries no mass on the grid")
    return RadialDensity(d, grid, values / total)


def gaussian(variance: float, d: int, M: int = None, r_max: Optional[float] = None) -> RadialDensity:
    """Centered isotropic Gaussian truncated to [0, r_max] (default 8 standard deviations)"""
    if not variance > 0:
        raise ValidationError(f"variance must be positive, got {variance}")
    r_max = 8.0 * np.sqrt(variance) if r_max is None else r_max
    return from_profile(lambda r: np.exp(-r ** 2 / (2 * variance)), d, r_max, M)


def dilate(rho: RadialDensity, r: float) -> RadialDensity:
    """Push-forward under x -> r x"""
    if not r > 0:
        raise ValidationError(f"dilation factor must be positive, got {r}")
    if r == 1:
        return rho
    return replace(rho, grid=rho.grid * r, values=rho.values * r ** (-rho.dimension))


def rescale_mass(rho: RadialDensity, c: float) -> RadialDensity:
    """Multiply density and atom by c; the result is no longer a probability density"""
    if not c > 0:
        raise ValidationError(f"mass factor must be positive, got {c}")
    if c == 1:
        return rho
    return replace(rho, values=rho.values * c, atom_mass=rho.atom_mass * c, unit_mass=False)


def moment(rho: RadialDensity, alpha: float) -> float:
    return rho.moment(alpha)


def rearrange_decreasing(rho: RadialDensity) -> RadialDensity:
    """Symmetric decreasing rearrangement.

    The cells are sorted by value. In one dimension all shells have equal
    volume, so the sorted values stay on the same grid. Otherwise each sorted
    level is laid on a new shell of exactly its own volume, with edges
    r_k = (sum_{j <= k} |A_j| / omega_d)^(1/d), so every level set keeps its
    measure and the result is equimeasurable with rho.
    """
    if rho.atom_mass > 0:
        raise DensityError("cannot rearrange a density with an atom")
    values = rho.values
    if np.all(np.diff(values) <= 0):
        return rho

    order = np.argsort(-values, kind='stable')
    if rho.dimension == 1 and rho.uniform_grid:
        return rho.with_values(values[order])

    d = rho.dimension
    level_volume = np.cumsum(rho.shell_volumes()[order])
    grid = np.concatenate(([0.0], (level_volume / unit_ball_volume(d)) ** (1 / d)))
    grid[-1] = rho.r_max
    logging.debug(f"Rearranged density on {rho.size} shells in dimension {d}")
    return replace(rho, grid=grid, values=values[order], uniform_grid=False)
