"""Thin wrappers around QUADPACK used by every oracle in the package."""

from __future__ import annotations

import math
import warnings
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

REL_TOL = 1e-10


class QuadratureError(RuntimeError):
    pass


def quad(f: Callable[[float], float], a: float, b: float, rel: float = REL_TOL,
         points: Sequence[float] | None = None) -> float:
    """Adaptive Gauss-Kronrod integral of ``f`` over ``[a, b]``.

    ``points`` are interior break points; the range is split there so that
    kinks and the bulk/tail transition each get their own subinterval.
    Infinite endpoints are allowed.
    """
    cuts = [a]
    for p in sorted(points or ()):
        if a < p < b:
            cuts.append(p)
    cuts.append(b)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=rel, limit=500)
            except integrate.IntegrationWarning:
                # retry with a looser target before giving up
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, err = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=rel * 100, limit=2000)
                if not math.isfinite(val) or (val != 0 and abs(err / val) > 1e-6):
                    raise QuadratureError(
                        f"quadrature failed on [{lo}, {hi}]: value={val}, err={err}")
        total += val
    return total


def radial_quad(f: Callable[[float], float], scale: float = 1.0, upper: float = math.inf,
                rel: float = REL_TOL) -> float:
    """Integral over ``[0, upper)`` split around ``scale`` (bulk / tail)."""
    pts = [0.1 * scale, scale, 10.0 * scale, 100.0 * scale]
    return quad(f, 0.0, upper, rel=rel, points=pts)


# 8-point Gauss-Legendre rule, used for vectorised integration over many
# short adjacent intervals (inverse-CDF tables).
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def gauss_legendre_cells(f: Callable[[np.ndarray], np.ndarray], edges: np.ndarray) -> np.ndarray:
    """Integral of vectorised ``f`` over each cell ``[edges[i], edges[i+1]]``."""
    lo = edges[:-1, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    x = lo + half * (_GL_X[None, :] + 1.0)
    return (half * f(x) * _GL_W[None, :]).sum(axis=1)
