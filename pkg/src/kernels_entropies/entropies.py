from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import xlogy

from src.utils.error_handler import ValidationError


def _positive(r):
    r = np.asarray(r, dtype=float)
    if np.any(np.isnan(r)) or np.any(r <= 0):
        raise ValidationError("scaling functions need r > 0")
    return r, r.ndim == 0


def _densities(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(np.isnan(rho)) or np.any(rho < 0):
        raise ValidationError("entropy densities must be nonnegative")
    return rho, rho.ndim == 0


def _out(values, scalar: bool):
    return float(values) if scalar else values


class EntropySpec(ABC):
    """Internal energy density U with U(0) = 0, convex on (0, inf)"""

    @abstractmethod
    def _value(self, rho: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _derivative(self, rho: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _mccann_u(self, d: int, r: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _scaling_v(self, d: int, r: np.ndarray) -> np.ndarray: ...

    @property
    @abstractmethod
    def singular_slope(self) -> float:
        """U_s = limsup U(r)/r, the cost per unit of singular mass"""

    def dilation_exponent(self, d: int) -> Optional[float]:
        """Exponent k with E_U(rho_r) = r^k E_U(rho), when it exists"""
        return None

    def value(self, rho):
        rho, scalar = _densities(rho)
        return _out(self._value(rho), scalar)

    def derivative(self, rho):
        """U'(rho), -inf at rho = 0 for linear diffusion"""
        rho, scalar = _densities(rho)
        with np.errstate(divide='ignore'):
            return _out(self._derivative(rho), scalar)

    def pressure(self, rho):
        """P(rho) = rho U'(rho) - U(rho)"""
        rho, scalar = _densities(rho)
        with np.errstate(divide='ignore', invalid='ignore'):
            p = np.where(rho > 0, rho * self._derivative(rho) - self._value(rho), 0.0)
        return _out(p, scalar)

    def mccann_u(self, d: int, r):
        r, scalar = _positive(r)
        return _out(self._mccann_u(d, r), scalar)

    def scaling_v(self, d: int, r):
        r, scalar = _positive(r)
        return _out(self._scaling_v(d, r), scalar)


@dataclass(frozen=True)
class PowerEntropy(EntropySpec):
    """U(rho) = rho^m / (m - 1)"""
    m: float

    def __post_init__(self):
        if not np.isfinite(self.m) or self.m <= 0 or self.m == 1:
            raise ValidationError(f"entropy exponent must be positive and different from 1, got {self.m}")

    @property
    def singular_slope(self) -> float:
        return np.inf if self.m > 1 else 0.0

    def dilation_exponent(self, d):
        return d * (1 - self.m)

    def _value(self, rho):
        return rho ** self.m / (self.m - 1)

    def _derivative(self, rho):
        return self.m * rho ** (self.m - 1) / (self.m - 1)

    def _mccann_u(self, d, r):
        return r ** ((1 - self.m) * d) / (self.m - 1)

    def _scaling_v(self, d, r):
        return d * r ** ((1 - self.m) * d)


@dataclass(frozen=True)
class LinearEntropy(EntropySpec):
    """U(rho) = rho log rho"""

    @property
    def singular_slope(self) -> float:
        return np.inf

    def _value(self, rho):
        return xlogy(rho, rho)

    def _derivative(self, rho):
        return 1.0 + np.log(rho)

    def _mccann_u(self, d, r):
        return -d * np.log(r)

    def _scaling_v(self, d, r):
        return np.full_like(r, float(d))


def mccann_u(U: EntropySpec, d: int, r):
    """u(r) = r^d U(r^-d)"""
    return U.mccann_u(d, r)


def scaling_v(U: EntropySpec, d: int, r):
    """v(r) = -r u'(r)"""
    return U.scaling_v(d, r)


def entropy_derivative(U: EntropySpec, r):
    return U.derivative(r)


def pressure(U: EntropySpec, r):
    """P(r) = r U'(r) - U(r)"""
    return U.pressure(r)


def singular_part_slope(U: EntropySpec) -> float:
    """U_s = limsup U(r)/r as r -> infinity"""
    return U.singular_slope
