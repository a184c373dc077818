import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy.interpolate import CubicHermiteSpline
from scipy.special import xlogy

from config.settings import Config
from src.utils.error_handler import KernelDomainError, NonIntegrableKernelError, ValidationError


def _as_output(values: np.ndarray, scalar: bool):
    return float(values) if scalar else values


def _radii(s) -> tuple:
    s = np.asarray(s, dtype=float)
    if np.any(np.isnan(s)) or np.any(s < 0):
        raise KernelDomainError("kernel radii must be nonnegative")
    return s, s.ndim == 0


class KernelSpec(ABC):
    """Radial interaction potential W(x) = w(|x|)"""

    @abstractmethod
    def profile(self, s: np.ndarray) -> np.ndarray:
        """w(s) on an array of nonnegative radii, with -inf at a singular origin"""

    @abstractmethod
    def derivative(self, s: np.ndarray) -> np.ndarray:
        """w'(s) for s > 0"""

    @abstractmethod
    def antiderivatives(self, u: np.ndarray):
        """Odd first and even second antiderivative of u -> w(|u|), vanishing at 0"""

    @property
    def singular_at_origin(self) -> bool:
        return False

    @property
    def force_singular(self) -> bool:
        """Whether grad W is unbounded near the origin"""
        return self.singular_at_origin

    def check_integrable(self, d: int):
        """Raise when w(|x|) is not locally integrable in R^d"""

    def check_range(self, s_max: float):
        """Raise when the kernel cannot be evaluated up to radius s_max"""

    def virial(self, s: np.ndarray) -> np.ndarray:
        return self.derivative(s) * s

    def force_coefficient(self, s: np.ndarray) -> np.ndarray:
        """w'(s)/s, so that grad W(z) = coefficient * z"""
        return self.derivative(s) / s

    def bounds_on(self, s_max: float) -> tuple:
        """(inf, sup) of w over [0, s_max]"""
        s = np.linspace(0.0, s_max, 4097)
        with np.errstate(divide='ignore'):
            w = self.profile(s)
        return float(np.min(w)), float(np.max(w))


@dataclass(frozen=True)
class PowerLaw(KernelSpec):
    """w(s) = s^beta / beta"""
    beta: float

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta == 0:
            raise ValidationError(f"power-law exponent must be finite and nonzero, got {self.beta}; "
                                  f"use Logarithmic for beta = 0")

    @property
    def singular_at_origin(self) -> bool:
        return self.beta < 0

    @property
    def force_singular(self) -> bool:
        return self.beta < 1

    def check_integrable(self, d: int):
        if self.beta <= -d:
            raise NonIntegrableKernelError(f"beta must exceed -d: beta={self.beta}, d={d}")

    def profile(self, s):
        with np.errstate(divide='ignore'):
            return np.power(s, self.beta) / self.beta

    def derivative(self, s):
        with np.errstate(divide='ignore'):
            return np.power(s, self.beta - 1)

    def virial(self, s):
        with np.errstate(divide='ignore'):
            return np.power(s, self.beta)

    def force_coefficient(self, s):
        with np.errstate(divide='ignore'):
            return np.power(s, self.beta - 2)

    def antiderivatives(self, u):
        b = self.beta
        if b <= -1:
            raise NonIntegrableKernelError(f"beta must exceed -1 in one dimension, got {b}")
        a = np.abs(u)
        first = np.sign(u) * a ** (b + 1) / (b * (b + 1))
        second = a ** (b + 2) / (b * (b + 1) * (b + 2))
        return first, second

    def bounds_on(self, s_max):
        edge = s_max ** self.beta / self.beta
        if self.beta < 0:
            return -np.inf, edge
        return 0.0, edge

    def lipschitz_constant(self) -> Optional[float]:
        """Lipschitz constant of grad W when it is globally Lipschitz"""
        return 1.0 if self.beta == 2 else None


@dataclass(frozen=True)
class Logarithmic(KernelSpec):
    """w(s) = log s"""

    @property
    def singular_at_origin(self) -> bool:
        return True

    def profile(self, s):
        with np.errstate(divide='ignore'):
            return np.log(s)

    def derivative(self, s):
        with np.errstate(divide='ignore'):
            return 1.0 / s

    def virial(self, s):
        return np.ones_like(np.asarray(s, dtype=float))

    def force_coefficient(self, s):
        with np.errstate(divide='ignore'):
            return 1.0 / s ** 2

    def antiderivatives(self, u):
        a = np.abs(u)
        first = xlogy(u, a) - u
        second = 0.5 * xlogy(u * u, a) - 0.75 * u * u
        return first, second

    def bounds_on(self, s_max):
        return -np.inf, float(np.log(s_max))


def fourth_order_derivative(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Five-point finite-difference derivative on an arbitrary increasing grid"""
    n = len(x)
    if n < 5:
        raise KernelDomainError("a tabulated kernel needs at least five radii")
    start = np.clip(np.arange(n) - 2, 0, n - 5)
    stencil = start[:, None] + np.arange(5)
    offsets = x[stencil] - x[:, None]
    scale = np.max(np.abs(offsets), axis=1, keepdims=True)
    t = offsets / scale
    # Taylor system: sum_j c_j t_j^k = delta_{k,1}
    vandermonde = t[:, None, :] ** np.arange(5)[None, :, None]
    rhs = np.zeros((n, 5))
    rhs[:, 1] = 1.0
    weights = np.linalg.solve(vandermonde, rhs[..., None])[..., 0]
    return np.sum(weights * y[stencil], axis=1) / scale[:, 0]


def tabulation_grid(r_max: float, inner: float = 1.0, inner_points: int = 201,
                    points_per_decade: int = 400) -> np.ndarray:
    """Uniform radii on [0, inner] continued geometrically up to r_max"""
    inner = min(inner, r_max)
    grid = np.linspace(0.0, inner, inner_points)
    if r_max > inner:
        decades = np.log10(r_max / inner)
        outer = inner * np.logspace(0.0, decades, max(2, int(np.ceil(decades * points_per_decade)) + 1))
        grid = np.concatenate((grid, outer[1:]))
    return grid


@dataclass(frozen=True, eq=False)
class TabulatedRadial(KernelSpec):
    """Kernel profile tabulated on radii 0 = r_0 < ... < r_n = R_max.

    The profile between nodes is the cubic Hermite interpolant of the values
    and derivatives. Missing derivatives are computed by fourth-order finite
    differences; supplied ones must agree with them to DERIVATIVE_TOL relative.
    """
    radii: np.ndarray
    values: np.ndarray
    derivatives: Optional[np.ndarray] = None
    spline: CubicHermiteSpline = field(init=False, repr=False)

    DERIVATIVE_TOL = 1e-4

    def __post_init__(self):
        radii = np.array(self.radii, dtype=float)
        values = np.array(self.values, dtype=float)
        if radii.ndim != 1 or radii.shape != values.shape:
            raise KernelDomainError("radii and values must be matching one-dimensional arrays")
        if radii[0] != 0.0 or np.any(np.diff(radii) <= 0):
            raise KernelDomainError("tabulated radii must start at 0 and increase strictly")
        if not np.all(np.isfinite(values)):
            raise KernelDomainError("tabulated kernel values must be finite")

        estimated = fourth_order_derivative(radii, values)
        if self.derivatives is None:
            derivatives = estimated
        else:
            derivatives = np.array(self.derivatives, dtype=float)
            scale = max(np.max(np.abs(derivatives)), np.finfo(float).tiny)
            mismatch = np.max(np.abs(estimated - derivatives)) / scale
            if mismatch > self.DERIVATIVE_TOL:
                raise KernelDomainError(f"tabulated derivative disagrees with the profile "
                                        f"(relative mismatch {mismatch:.2e})")

        for name, array in (('radii', radii), ('values', values), ('derivatives', derivatives)):
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        object.__setattr__(self, 'spline', CubicHermiteSpline(radii, values, derivatives))

    @classmethod
    def from_function(cls, w: Callable, radii, derivative: Optional[Callable] = None) -> 'TabulatedRadial':
        radii = np.asarray(radii, dtype=float)
        values = np.asarray(w(radii), dtype=float)
        derivatives = None if derivative is None else np.asarray(derivative(radii), dtype=float)
        return cls(radii, values, derivatives)

    @classmethod
    def from_csv(cls, path: str) -> 'TabulatedRadial':
        """Two-column CSV `r,w`; the derivative is computed at load"""
        frame = pd.read_csv(path, comment='#')
        if list(frame.columns[:2]) != ['r', 'w']:
            raise KernelDomainError(f"{path}: expected header r,w")
        logging.info(f"Loaded tabulated kernel with {len(frame)} radii from {path}")
        return cls(frame['r'].to_numpy(), frame['w'].to_numpy())

    @property
    def r_max(self) -> float:
        return float(self.radii[-1])

    def check_range(self, s_max: float):
        if s_max > self.r_max * (1 + 1e-12):
            raise KernelDomainError(f"tabulated kernel queried at {s_max:.6g} beyond R_max={self.r_max:.6g}")

    def _within(self, s):
        s = np.asarray(s, dtype=float)
        if s.size:
            self.check_range(float(np.max(np.abs(s))))
        return s

    def profile(self, s):
        return self.spline(self._within(s))

    def derivative(self, s):
        return self.spline(self._within(s), 1)

    def force_coefficient(self, s):
        s = self._within(s)
        # w'(s)/s tends to w''(0) at the origin
        safe = np.where(s > 0, s, 1.0)
        return np.where(s > 0, self.spline(s, 1) / safe, self.spline(0.0, 2))

    def antiderivatives(self, u):
        a = self._within(u)
        first = np.sign(a) * self.spline.antiderivative(1)(np.abs(a))
        second = self.spline.antiderivative(2)(np.abs(a))
        return first, second

    def bounds_on(self, s_max):
        self.check_range(s_max)
        inside = self.radii <= s_max
        w = np.append(self.values[inside], self.spline(s_max))
        return float(np.min(w)), float(np.max(w))

    def lipschitz_constant(self) -> Optional[float]:
        return None


def virial_kernel(W: TabulatedRadial) -> TabulatedRadial:
    """Tabulated profile of grad W(x).x = s w'(s)"""
    if not isinstance(W, TabulatedRadial):
        raise KernelDomainError("virial_kernel is defined for tabulated kernels; "
                                "power and logarithmic kernels have closed forms")
    s = W.radii
    return TabulatedRadial(s, s * W.spline(s, 1))


def kernel_value(W: KernelSpec, s):
    """w(s), returning -inf at the origin for singular kernels"""
    s, scalar = _radii(s)
    return _as_output(np.asarray(W.profile(s), dtype=float), scalar)


def radial_virial(W: KernelSpec, s):
    """w'(s) s, equal to grad W(x).x for |x| = s"""
    s, scalar = _radii(s)
    if np.any(s <= 0):
        raise KernelDomainError("radial virial needs s > 0")
    return _as_output(np.asarray(W.virial(s), dtype=float), scalar)


@dataclass(frozen=True)
class AsymptoticSlope:
    """Limit of grad W(x).x as |x| -> infinity"""
    value: float
    determined: bool
    detail: str = ''


def _aitken(g: np.ndarray) -> np.ndarray:
    first = np.diff(g)
    second = np.diff(first)
    safe = np.where(second != 0, second, 1.0)
    return np.where(second != 0, g[2:] - first[1:] ** 2 / safe, g[2:])


def asymptotic_slope(W: KernelSpec, samples: int = 9) -> AsymptoticSlope:
    """L = lim w'(s) s; tabulated kernels are extrapolated over their last decade"""
    if isinstance(W, PowerLaw):
        return AsymptoticSlope(np.inf if W.beta > 0 else 0.0, True, f"power law beta={W.beta}")
    if isinstance(W, Logarithmic):
        return AsymptoticSlope(1.0, True, "logarithmic kernel")

    s = np.geomspace(W.r_max / 10, W.r_max, samples)
    g = W.virial(s)
    # Aitken maps geometric growth to a spurious finite limit
    if g[0] > 0 and np.all(np.diff(g) > 0) and g[-1] >= 2 * g[0]:
        return AsymptoticSlope(np.inf, True, f"virial grows from {g[0]:.3g} to {g[-1]:.3g} over the last decade")
    accelerated = _aitken(g)
    limit = float(accelerated[-1])
    spread = float(np.max(accelerated) - np.min(accelerated))
    oscillation = spread / max(abs(limit), 1.0)

    if oscillation <= Config.ASYMPTOTIC_OSCILLATION_TOL:
        return AsymptoticSlope(limit, True, f"Aitken limit over [{s[0]:.3g}, {s[-1]:.3g}], "
                                            f"oscillation {oscillation:.2e}")
    logging.warning(f"Asymptotic slope undetermined: oscillation {oscillation:.2e}")
    return AsymptoticSlope(limit, False, f"oscillation {oscillation:.2e} over the last decade")
