from functools import lru_cache

import numpy as np
from scipy.special import hyp2f1, roots_legendre, xlogy

from src.kernels_entropies.kernels import KernelSpec, Logarithmic, PowerLaw
from src.utils.error_handler import KernelDomainError

POLAR_LEVELS = 16
POLAR_NODES = 8
PAIR_CHUNK = 16384


@lru_cache(maxsize=None)
def graded_rule(levels: int, nodes: int) -> tuple:
    """Gauss-Legendre panels on [0, 1] refined geometrically toward 0.

    Panels are [2^-(k+1), 2^-k] for k < levels plus [0, 2^-levels]; the
    weights sum to one.
    """
    x, w = roots_legendre(nodes)
    edges = np.concatenate(([0.0], 2.0 ** -np.arange(levels, -1, -1)))
    left, right = edges[:-1, None], edges[1:, None]
    points = (left + (right - left) * (x + 1) / 2).ravel()
    weights = ((right - left) / 2 * w).ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


@lru_cache(maxsize=None)
def _polar_rule(d: int) -> tuple:
    x, w = graded_rule(POLAR_LEVELS, POLAR_NODES)
    theta = np.pi * x
    weights = w * np.sin(theta) ** (d - 2)
    return theta, weights / weights.sum()


def _polar_average(W: KernelSpec, d: int, r: np.ndarray, s: np.ndarray) -> np.ndarray:
    theta, weights = _polar_rule(d)
    half_sin = np.sin(theta / 2) ** 2
    out = np.empty(r.size)
    flat_r, flat_s = r.ravel(), s.ravel()
    for start in range(0, r.size, PAIR_CHUNK):
        rr = flat_r[start:start + PAIR_CHUNK, None]
        ss = flat_s[start:start + PAIR_CHUNK, None]
        # |r e - s eta|^2 written without cancellation near r = s
        distance = np.sqrt((rr - ss) ** 2 + 4 * rr * ss * half_sin)
        with np.errstate(divide='ignore'):
            out[start:start + PAIR_CHUNK] = W.profile(distance) @ weights
    return out.reshape(r.shape)


def _power_average(W: PowerLaw, d: int, r: np.ndarray, s: np.ndarray) -> np.ndarray:
    beta = W.beta
    total = r + s
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(total > 0, 4 * r * s / np.where(total > 0, total, 1.0) ** 2, 0.0)
        z = np.minimum(z, 1.0)
        if d == 3 and beta != -2:
            product = r * s
            shell = (total ** (beta + 2) - np.abs(r - s) ** (beta + 2)) / (
                2 * np.where(product > 0, product, 1.0) * (beta + 2))
            mean = np.where(product > 0, shell, total ** beta)
        else:
            mean = total ** beta * hyp2f1(-beta / 2, (d - 1) / 2, d - 1, z)
    return mean / beta


def _log_average(d: int, r: np.ndarray, s: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore', invalid='ignore'):
        if d == 2:
            return np.log(np.maximum(r, s))
        product = r * s
        safe = np.where(product > 0, product, 1.0)
        plus, minus = (r + s) ** 2, (r - s) ** 2
        shell = (xlogy(plus, plus) - xlogy(minus, minus) - 4 * product) / (8 * safe)
        return np.where(product > 0, shell, np.log(np.maximum(r, s)))


def angular_kernel(W: KernelSpec, d: int, r, s):
    """Average of w(|r e - s eta|) over unit directions e, eta in R^d"""
    W.check_integrable(d)
    r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
    scalar = r.ndim == 0
    if np.any(r < 0) or np.any(s < 0):
        raise KernelDomainError("angular kernel radii must be nonnegative")
    W.check_range(float(np.max(r + s)) if r.size else 0.0)

    if d == 1:
        with np.errstate(divide='ignore'):
            K = 0.5 * (W.profile(np.abs(r - s)) + W.profile(r + s))
    elif isinstance(W, PowerLaw):
        K = _power_average(W, d, r, s)
    elif isinstance(W, Logarithmic) and d in (2, 3):
        K = _log_average(d, r, s)
    else:
        K = _polar_average(W, d, r, s)
        K = np.where((r == 0) | (s == 0), W.profile(np.maximum(r, s)), K)

    K = np.asarray(K, dtype=float)
    return float(K) if scalar else K
