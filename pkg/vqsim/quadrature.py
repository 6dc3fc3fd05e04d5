"""
Quadrature helpers for kernels that are sharply peaked on the ε scale.

Near the origin the substitution τ = ε·tan(u) turns the 1/(τ²+ε²)ⁿ structure
into a smooth integrand on u ∈ [0, π/2); beyond ``split·ε`` ordinary adaptive
quadrature is enough.
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .errors import QuadratureError

logger = logging.getLogger(__name__)

PEAK_SPLIT = 20.0
DEFAULT_EPSREL = 1e-12
DEFAULT_LIMIT = 500


def checked_quad(
    func: Callable[[float], float],
    a: float,
    b: float,
    epsrel: float = DEFAULT_EPSREL,
    epsabs: float = 0.0,
    limit: int = DEFAULT_LIMIT,
    **kwargs,
) -> float:
    """``scipy.integrate.quad`` that raises when refinement stalls.

    Round-off notices are accepted (the result is then as good as double
    precision allows) and logged at DEBUG; every other failure raises
    :class:`QuadratureError`.
    """
    result = integrate.quad(
        func, a, b, epsrel=epsrel, epsabs=epsabs, limit=limit, full_output=1, **kwargs
    )
    value, abserr = result[0], result[1]
    if len(result) > 3:
        message = str(result[3])
        if "roundoff" in message.lower():
            logger.debug(f"quad round-off on [{a:.6g}, {b:.6g}]: abserr={abserr:.3e}")
        else:
            raise QuadratureError(f"quadrature on [{a:.6g}, {b:.6g}] failed: {message}")
    if not math.isfinite(value):
        raise QuadratureError(f"quadrature on [{a:.6g}, {b:.6g}] returned {value!r}")
    return float(value)


def peaked_quad(
    func: Callable[[float], float],
    a: float,
    b: float,
    eps: float,
    split: float = PEAK_SPLIT,
    epsrel: float = DEFAULT_EPSREL,
    epsabs: float = 0.0,
    points: Optional[Sequence[float]] = None,
) -> float:
    """Integrate ``func`` over [a, b] ⊂ [0, ∞) with a peak of width ``eps`` at τ = 0.

    ``points`` lists kinks of ``func`` beyond the peak region.
    """
    if b < a:
        return -peaked_quad(func, b, a, eps, split, epsrel, epsabs, points)
    if b == a:
        return 0.0
    boundary = split * eps
    total = 0.0
    if a < boundary:
        upper = min(b, boundary)
        u_lo, u_hi = math.atan(a / eps), math.atan(upper / eps)

        def in_u(u: float) -> float:
            cos_u = math.cos(u)
            return func(eps * math.tan(u)) * eps / (cos_u * cos_u)

        total += checked_quad(in_u, u_lo, u_hi, epsrel=epsrel, epsabs=epsabs)
    if b > boundary:
        lower = max(a, boundary)
        inner = sorted(p for p in (points or ()) if lower < p < b)
        extra = {"points": inner} if inner else {}
        total += checked_quad(func, lower, b, epsrel=epsrel, epsabs=epsabs, **extra)
    return total


@lru_cache(maxsize=8)
def _legendre_nodes(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return leggauss(order)


def composite_nodes(a: float, b: float, panels: int = 1, order: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of ``panels`` equal Gauss-Legendre panels covering [a, b]."""
    y, w = _legendre_nodes(order)
    edges = np.linspace(a, b, max(int(panels), 1) + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * y[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def gauss_legendre(
    func: Callable[[np.ndarray], np.ndarray], a: float, b: float, order: int = 8, panels: int = 1
) -> float:
    """Fixed-order Gauss-Legendre rule on [a, b]; ``func`` must accept arrays."""
    x, w = composite_nodes(a, b, panels, order)
    return float(np.dot(w, func(x)))
