"""Level-set bodies K_alpha(g) = {t : g(t) >= alpha^{-m} ||g||_inf}, their gauges,
and deterministic quadrature checks of the geometric and integral lemmas.

Everything here is one- or two-dimensional; in 2-D only radial densities are
integrated (their level sets are discs), but the body itself is extracted
ray by ray for any density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize, special

from . import _quad
from .constants import alpha_factor, beta_fn, lemma5_alpha
from .distributions import (DistributionSpec, density_log, make_distribution, marginal_profile,
                            radial_log_density, radial_moment_oracle)
from .estimators import weak_moment_oracle

BUDGETS = (1.0, 2.0, 4.0, 8.0)
BISECT_TOL = 1e-10


class GeometryError(ValueError):
    pass


@dataclass
class LevelSetBody:
    dim: int
    alpha: float
    level: float
    interval: tuple[float, float] | None = None
    angles: np.ndarray | None = field(default=None, repr=False)
    lengths: np.ndarray | None = field(default=None, repr=False)

    @property
    def contains_origin(self) -> bool:
        if self.dim == 1:
            a, b = self.interval
            return a < 0.0 < b
        return self.lengths is not None and bool(np.all(self.lengths > 0))

    def volume(self) -> float:
        if self.dim == 1:
            a, b = self.interval
            return b - a
        dth = np.diff(np.append(self.angles, self.angles[0] + 2 * math.pi))
        nxt = np.roll(self.lengths, -1)
        return float(0.5 * np.sum(self.lengths * nxt * np.sin(dth)))

    def vertices(self) -> np.ndarray:
        return self.lengths[:, None] * np.stack([np.cos(self.angles), np.sin(self.angles)], axis=1)

    def is_convex(self, tol: float = 1e-12) -> bool:
        if self.dim == 1:
            return True
        v = self.vertices()
        e = np.roll(v, -1, axis=0) - v
        en = np.roll(e, -1, axis=0)
        cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
        scale = float(np.max(self.lengths)) ** 2
        return bool(np.all(cross >= -tol * scale))

    def to_json(self) -> dict:
        if self.dim == 1:
            return {"alpha": self.alpha, "interval": list(self.interval)}
        return {"alpha": self.alpha,
                "rays": [{"angle": float(a), "length": float(l)} for a, l in zip(self.angles, self.lengths)]}


def _bisect_boundary(inside: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Vectorised bisection on a predicate: ``inside(lo)`` true, ``inside(hi)`` false."""
    lo, hi = lo.astype(float).copy(), hi.astype(float).copy()
    while np.max(np.abs(hi - lo)) > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        ok = inside(mid)
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return 0.5 * (lo + hi)


def find_max_1d(density: Callable[[float], float], scale: float = 1.0, grid: int = 201,
                span: float = 20.0) -> tuple[float, float]:
    """Locate the mode of a unimodal density: coarse scan, then golden section."""
    ts = np.linspace(-span * scale, span * scale, grid)
    vals = np.array([float(density(t)) for t in ts])
    i = int(np.argmax(vals))
    best_t, best = float(ts[i]), float(vals[i])
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, grid - 1)]
    res = optimize.minimize_scalar(lambda t: -float(density(t)), bracket=(lo, best_t, hi) if 0 < i < grid - 1 else None,
                                   bounds=None, method="golden", tol=1e-12)
    if -res.fun > best:
        best_t, best = float(res.x), float(-res.fun)
    return best_t, best


def level_set_1d(density: Callable[[float], float], alpha: float, scale: float = 1.0,
                 mode: tuple[float, float] | None = None) -> LevelSetBody:
    """Interval {g >= ||g||_inf / alpha} of a unimodal density on the line.

    ``mode`` may pass a known ``(argmax, max)`` pair and skip the search.
    """
    if alpha < 1:
        raise GeometryError("alpha must be >= 1")
    t0, gmax = mode if mode is not None else find_max_1d(density, scale)
    log_level = math.log(gmax) - math.log(alpha)
    if log_level < -700:
        return LevelSetBody(1, alpha, 0.0, (-math.inf, math.inf))
    level = math.exp(log_level)
    inside = np.vectorize(lambda t: float(density(t)) >= level)
    ends = []
    for sign in (-1.0, 1.0):
        step = scale
        far = t0 + sign * step
        while inside(far):
            step *= 2.0
            far = t0 + sign * step
            if step > 1e300:
                raise GeometryError("level set is unbounded")
        ends.append(float(_bisect_boundary(inside, np.array([t0]), np.array([far]))[0]))
    return LevelSetBody(1, alpha, level, (min(ends), max(ends)))


def level_set_2d(density: Callable[[np.ndarray], np.ndarray], alpha: float, M: int = 720,
                 scale: float = 1.0) -> LevelSetBody:
    """Star-shaped polygon of K_alpha(g) in the plane, by per-ray bisection from 0.

    ``density`` is vectorised over rows of a ``(k, 2)`` array.
    """
    if alpha < 1:
        raise GeometryError("alpha must be >= 1")
    g = lambda pts: np.asarray(density(np.atleast_2d(pts)), dtype=float)
    res = optimize.minimize(lambda x: -float(g(x)[0]), np.zeros(2), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14})
    gmax = max(float(-res.fun), float(g(np.zeros(2))[0]))
    level = gmax * alpha ** -2
    if float(g(np.zeros(2))[0]) < level:
        raise GeometryError("origin lies outside K_alpha; rays from 0 do not describe the body")
    angles = 2.0 * math.pi * np.arange(M) / M
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    inside = lambda lengths: g(lengths[:, None] * dirs) >= level
    hi = np.full(M, scale)
    for _ in range(1100):
        out = ~inside(hi)
        if out.all():
            break
        hi = np.where(out, hi, 2.0 * hi)
    else:
        raise GeometryError("level set is unbounded")
    lengths = _bisect_boundary(inside, np.zeros(M), hi)
    return LevelSetBody(2, alpha, level, angles=angles, lengths=lengths)


def gauge_eval(body: LevelSetBody, x) -> np.ndarray | float:
    """Minkowski functional inf{lam >= 0 : x in lam K}."""
    if not body.contains_origin:
        raise GeometryError("gauge needs 0 in the interior of the body")
    x = np.asarray(x, dtype=float)
    if body.dim == 1:
        a, b = body.interval
        out = np.where(x >= 0, x / b, x / a)
        return float(out) if out.ndim == 0 else out
    pts = np.atleast_2d(x)
    M = body.angles.size
    theta = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * math.pi)
    i = np.floor(theta / (2 * math.pi / M)).astype(int) % M
    j = (i + 1) % M
    v = body.vertices()
    vi, vj = v[i], v[j]
    r = np.linalg.norm(pts, axis=1)
    u = np.divide(pts, r[:, None], out=np.zeros_like(pts), where=r[:, None] > 0)
    d = vj - vi
    # boundary point s*u on segment [vi, vj]
    s = (vi[:, 0] * vj[:, 1] - vi[:, 1] * vj[:, 0]) / (u[:, 0] * d[:, 1] - u[:, 1] * d[:, 0])
    out = np.where(r > 0, r / s, 0.0)
    return float(out[0]) if x.ndim == 1 else out


# --- Borell-form test densities ------------------------------------------------

class BorellDensity1D:
    """Normalised, numerically centred density proportional to f^{-beta} on the line."""

    def __init__(self, f: Callable[[float], float], beta: float, kinks: Sequence[float] = ()):
        self.f, self.beta = f, beta
        self.kinks = tuple(kinks)
        pts = list(self.kinks) + [-1.0, 1.0]
        self.shift, self.norm = 0.0, 1.0
        self.norm = _quad.quad(self._raw, -math.inf, math.inf, points=pts)
        self.shift = _quad.quad(lambda t: t * self._raw(t), -math.inf, math.inf, points=pts) / self.norm

    def _raw(self, t: float) -> float:
        try:
            return math.exp(-self.beta * math.log(float(self.f(t))))
        except OverflowError:
            return 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.vectorize(lambda s: self._raw(s + self.shift))(t) / self.norm
        return float(out) if out.ndim == 0 else out

    @property
    def break_points(self) -> list[float]:
        return [k - self.shift for k in self.kinks] + [0.0]


def _centered_mean(density, points) -> float:
    return _quad.quad(lambda t: t * float(density(t)), -math.inf, math.inf, points=points)


# --- level-set checks -----------------------------------------------------------

@dataclass
class RatioReport:
    passed: bool
    ratio: float
    bound: float
    budget: float | None
    origin_inside: bool
    rows: list = field(default_factory=list)


def _F_factory(kind: str, p: float, body: LevelSetBody):
    if kind == "gauge_power":
        return lambda t: float(gauge_eval(body, t)) ** p
    if kind == "linear_power":
        return lambda t: abs(t) ** p
    raise GeometryError(f"unknown F kind {kind!r}")


def _spec_density_1d(spec: DistributionSpec):
    return lambda t: math.exp(float(density_log(spec, [float(t)])))


def restriction_check(density, p: float, r: float, F_kind: str = "gauge_power",
                      budgets: Iterable[float] = BUDGETS, m: int | None = None) -> RatioReport:
    """Quadrature check of E F(Y) <= (1 + c/(r-p)) E F(Y) 1_{K_alpha}(Y).

    ``density`` is a 1-D DistributionSpec, a :class:`BorellDensity1D`, or a 2-D
    radial DistributionSpec (m = 2); its Borell exponent must be m + r.
    alpha = (c (m+r)^2/((r-p)(r-1)))^{(m+r)/m}. Budgets are tried in increasing
    order and the smallest passing one is reported.
    """
    if not 1 <= p < r:
        raise GeometryError(f"need 1 <= p < r (got p={p}, r={r})")
    if isinstance(density, DistributionSpec) and density.dim == 2:
        return _restriction_check_2d(density, p, r, F_kind, budgets)
    if isinstance(density, DistributionSpec):
        if density.dim != 1:
            raise GeometryError("restriction_check supports dimension 1 or radial dimension 2")
        g = _spec_density_1d(density)
        pts = [0.0]
        scale = density.scale
    else:
        g, pts, scale = density, list(getattr(density, "break_points", [0.0])), 1.0
    m = 1 if m is None else m
    mode = find_max_1d(g, scale)
    rows = []
    chosen = None
    for c in sorted(budgets):
        alpha = alpha_factor(p, r, m, c)
        body = level_set_1d(g, alpha, scale, mode=mode)
        a, b = body.interval
        F = _F_factory(F_kind, p, body)
        for t in (-3.0, -0.5, 0.7, 2.5):
            if F(2 * t) > 2 ** p * F(t) * (1 + 1e-12):
                raise GeometryError("F violates F(2t) <= 2^p F(t)")
        integrand = lambda t: F(t) * float(g(t))
        cuts = sorted(set(pts + [x for x in (a, b) if math.isfinite(x)]))
        total = _quad.quad(integrand, -math.inf, math.inf, points=cuts)
        inner = _quad.quad(integrand, a, b, points=cuts) if math.isfinite(a) else total
        ratio = total / inner
        bound = 1.0 + c / (r - p)
        ok = ratio <= bound and body.contains_origin
        rows.append({"budget": c, "alpha": alpha, "interval": [a, b], "ratio": ratio, "bound": bound,
                     "origin_inside": body.contains_origin, "pass": ok})
        if ok and chosen is None:
            chosen = rows[-1]
    best = chosen or rows[-1]
    return RatioReport(chosen is not None, best["ratio"], best["bound"],
                       chosen["budget"] if chosen else None, all(r_["origin_inside"] for r_ in rows), rows)


def _radial_profile_body(spec: DistributionSpec, alpha: float, M: int = 720) -> LevelSetBody:
    dens = lambda pts: np.exp(density_log(spec, pts))
    return level_set_2d(dens, alpha, M=M, scale=spec.scale)


def _restriction_check_2d(spec: DistributionSpec, p, r, F_kind, budgets) -> RatioReport:
    if not spec.radial:
        raise GeometryError("2-D restriction check needs a radial density")
    m = 2
    prof = lambda t: 2 * math.pi * t * math.exp(float(radial_log_density(spec, t)))
    rows, chosen = [], None
    for c in sorted(budgets):
        alpha = alpha_factor(p, r, m, c)
        if not math.isfinite(alpha) or math.log(alpha) * m > 700:
            rho_k = math.inf
            body = None
        else:
            body = _radial_profile_body(spec, alpha)
            rho_k = float(np.mean(body.lengths))
        # F is p-homogeneous and the law radial, so both F kinds reduce to E|Y|^p
        # up to a common angular factor (|cos|^p or rho_k^{-p}) that cancels.
        integrand = lambda t: t ** p * prof(t)
        total = _quad.radial_quad(integrand, scale=spec.scale)
        inner = total if math.isinf(rho_k) else _quad.quad(integrand, 0.0, rho_k, points=[0.1 * rho_k])
        if F_kind not in ("gauge_power", "linear_power"):
            raise GeometryError(f"unknown F kind {F_kind!r}")
        ratio = total / inner
        bound = 1.0 + c / (r - p)
        origin = body is None or body.contains_origin
        ok = ratio <= bound and origin
        rows.append({"budget": c, "alpha": alpha, "radius": rho_k, "ratio": ratio, "bound": bound,
                     "origin_inside": origin, "pass": ok})
        if ok and chosen is None:
            chosen = rows[-1]
    best = chosen or rows[-1]
    return RatioReport(chosen is not None, best["ratio"], best["bound"],
                       chosen["budget"] if chosen else None, all(x["origin_inside"] for x in rows), rows)


def concave2_check(density, p: float, r: float, budgets: Iterable[float] = BUDGETS) -> RatioReport:
    """(E|Y|^p)^{1/p} <= C3 max_{x in K_alpha}|x| in one dimension,
    alpha = c (r^2/((r-p)(r-1)))^3 and C3 = (1 + c/(r-p))^{1/p}."""
    if not 1 <= p < r:
        raise GeometryError(f"need 1 <= p < r (got p={p}, r={r})")
    if isinstance(density, DistributionSpec):
        g, pts, scale = _spec_density_1d(density), [0.0], density.scale
    else:
        g, pts, scale = density, list(getattr(density, "break_points", [0.0])), 1.0
    lhs = _quad.quad(lambda t: abs(t) ** p * float(g(t)), -math.inf, math.inf, points=pts) ** (1 / p)
    mode = find_max_1d(g, scale)
    rows, chosen = [], None
    for c in sorted(budgets):
        body = level_set_1d(g, lemma5_alpha(p, r, c), scale, mode=mode)
        a, b = body.interval
        c3 = (1 + c / (r - p)) ** (1 / p)
        rhs = c3 * max(abs(a), abs(b))
        ok = lhs <= rhs and body.contains_origin
        rows.append({"budget": c, "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs, "origin_inside": body.contains_origin,
                     "pass": ok})
        if ok and chosen is None:
            chosen = rows[-1]
    best = chosen or rows[-1]
    return RatioReport(chosen is not None, best["ratio"], 1.0, chosen["budget"] if chosen else None,
                       all(x["origin_inside"] for x in rows), rows)


@dataclass
class MarginReport:
    margin: float
    g0: float
    gmax: float
    factor: float
    mean: float


def g0_bound_factor(beta: float, m: int = 1) -> float:
    return ((beta - m - 1) / (beta - 1)) ** beta


def g0_bound_check(density, beta: float, m: int = 1) -> MarginReport:
    """g(0) - ((beta-m-1)/(beta-1))^beta ||g||_inf for a centred 1-D density f^{-beta}."""
    if m != 1:
        raise GeometryError("only the one-dimensional case is checked")
    if not beta > m + 1:
        raise GeometryError("need beta > m + 1")
    pts = list(getattr(density, "break_points", [0.0]))
    mean = _centered_mean(density, pts)
    if abs(mean) > 1e-6:
        raise GeometryError(f"density is not centred (mean {mean:.3g})")
    _, gmax = find_max_1d(density, 1.0)
    for k in pts:
        gmax = max(gmax, float(density(k)))
    factor = g0_bound_factor(beta, m)
    g0 = float(density(0.0))
    return MarginReport(g0 - factor * gmax, g0, gmax, factor, mean)


@dataclass
class GReport:
    values: list
    nondecreasing: bool
    max_drop: float
    constant_deviation: float


def _midpoint_concave(phi, s: float, span: float, checks: int = 400) -> bool:
    rng = np.random.default_rng(12345)
    x = s + span * rng.random(checks)
    y = s + span * rng.random(checks)
    px, py, pm = (np.array([float(phi(v)) for v in arr]) for arr in (x, y, 0.5 * (x + y)))
    if np.any(px < 0) or np.any(py < 0):
        return False
    slack = 1e-12 * np.maximum(1.0, np.abs(px) + np.abs(py))
    return bool(np.all(pm >= 0.5 * (px + py) - slack))


def G_value(phi, s: float, m: float, beta: float) -> float:
    """G(beta) = int_s^inf phi^m x^{-beta} dx / (s^{m-beta+1} B(m+1, beta-m-1)).

    Evaluated after x = s/u, which maps the tail to a weight u^{beta-2} on (0,1].
    """
    def integrand(u):
        if u <= 0.0:
            return 0.0
        return (float(phi(s / u)) / s) ** m * u ** (beta - 2)
    num = _quad.quad(integrand, 0.0, 1.0, rel=1e-13)
    return num / beta_fn(m + 1, beta - m - 1)


def G_monotonicity_check(phi, s: float, m: float, beta_grid: Sequence[float],
                         tol: float = 1e-7) -> GReport:
    """Evaluate G on an increasing beta grid and test that it does not decrease."""
    if not s > 0:
        raise GeometryError("need s > 0")
    grid = sorted(beta_grid)
    if grid[0] <= m + 1:
        raise GeometryError("beta grid must lie in (m+1, inf)")
    if not _midpoint_concave(phi, s, 50.0 * s):
        raise GeometryError("phi failed the midpoint concavity / nonnegativity test")
    vals = [G_value(phi, s, m, b) for b in grid]
    drops = [max(0.0, (a - b) / abs(a)) for a, b in zip(vals[:-1], vals[1:])]
    max_drop = max(drops) if drops else 0.0
    return GReport(vals, max_drop <= tol, max_drop, max(abs(v / vals[0] - 1) for v in vals))


@dataclass
class GapReport:
    lhs: float
    rhs: float
    gap: float
    g_f0: float


def polar_formula_check(spec: DistributionSpec, m: int = 1) -> GapReport:
    """Polar-coordinates identity for the negative moment, at n = 2, m = 1:
    (E|X|^{-1})^{-1} = (2 pi)^{-1/2} (E|G|^{-1})^{-1} g_F(0)^{-1}."""
    if spec.dim != 2 or m != 1:
        raise GeometryError("only the instance n = 2, m = 1 is supported")
    if not spec.radial:
        raise GeometryError("polar formula check needs a radial law")
    lhs = 1.0 / radial_moment_oracle(spec, -1.0, method="quad")
    e_g = radial_moment_oracle(make_distribution("gaussian", 2), -1.0, method="quad")
    g_f0 = marginal_profile(spec, 1, 0.0)
    rhs = (2 * math.pi) ** -0.5 / e_g / g_f0
    return GapReport(lhs, rhs, abs(lhs - rhs) / abs(lhs), g_f0)


def polar_levelset_check(spec: DistributionSpec, p: float, r: float | None = None,
                         budgets: Iterable[float] = BUDGETS, m: int = 1) -> RatioReport:
    """vol(P_F K°) <= 4 C3 vol(K_alpha(g_F)) for a one-dimensional projection.

    P_F K° is the segment of half-length sigma_p(X); g_F is the marginal density.
    For log-concave laws pass the r at which the law is viewed as (-1/r)-concave.
    """
    if m != 1:
        raise GeometryError("only m = 1 is supported")
    r = spec.r if r is None else r
    if not math.isfinite(r):
        raise GeometryError("pass a finite r for log-concave laws")
    if not 1 <= p < r:
        raise GeometryError(f"need 1 <= p < r (got p={p}, r={r})")
    if spec.dim < 2:
        raise GeometryError("need n >= 2 for a proper projection")
    half = weak_moment_oracle(spec, p)
    lhs = 2.0 * half
    gF = lambda t: marginal_profile(spec, 1, abs(float(t)))
    mode = (0.0, gF(0.0))
    rows, chosen = [], None
    for c in sorted(budgets):
        alpha = lemma5_alpha(p, r, c)
        body = level_set_1d(gF, alpha, spec.scale, mode=mode)
        c3 = (1 + c / (r - p)) ** (1 / p)
        rhs = 4.0 * c3 * body.volume()
        ok = lhs <= rhs and body.contains_origin
        rows.append({"budget": c, "alpha": alpha, "segment": lhs, "level_volume": body.volume(), "rhs": rhs,
                     "ratio": lhs / rhs, "origin_inside": body.contains_origin, "pass": ok})
        if ok and chosen is None:
            chosen = rows[-1]
    best = chosen or rows[-1]
    return RatioReport(chosen is not None, best["ratio"], 1.0, chosen["budget"] if chosen else None,
                       all(x["origin_inside"] for x in rows), rows)
