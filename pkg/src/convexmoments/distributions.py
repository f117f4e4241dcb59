"""Concrete (-1/r)-concave and log-concave families.

Every family here is the law of a centered random vector in R^n with a
density. Radial families (gaussian, radial_pareto, student_t, uniform_ball,
pareto_1d) are described by a radial profile ``phi`` so that, at unit scale,
``g(x) = exp(log_norm + phi(|x|))``. Their exact radial moments, marginals and
radius distribution all reduce to one-dimensional integrals.

A finite-r family has density ``g = f^{-(n+r)}`` with ``f`` convex:

* radial_pareto:  f(x) = 1 + |x|/s
* student_t (nu=r): f(x) = (1 + |x|^2/(nu s^2))^{1/2}
* pareto_1d is radial_pareto in dimension one.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from . import _quad

FAMILIES = ("gaussian", "radial_pareto", "student_t", "laplace_product", "uniform_ball", "pareto_1d")
LOG_CONCAVE = frozenset({"gaussian", "laplace_product", "uniform_ball"})
RADIAL = frozenset({"gaussian", "radial_pareto", "student_t", "uniform_ball", "pareto_1d"})

DEFAULT_CHUNK = 1 << 16
TABLE_NODES = 4096


class DistributionError(ValueError):
    """Invalid family parameters or an unsupported operation for a family."""


@dataclass(frozen=True)
class DistributionSpec:
    family: str
    dim: int
    r: float = math.inf
    scale: float = 1.0
    centered: bool = True

    @property
    def log_concave(self) -> bool:
        return self.family in LOG_CONCAVE

    @property
    def radial(self) -> bool:
        return self.family in RADIAL

    @property
    def is_isotropic(self) -> bool:
        try:
            target = isotropic_scale(self.family, self.dim, self.r)
        except DistributionError:
            return False
        return math.isclose(self.scale, target, rel_tol=1e-12)

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "dim": self.dim,
            "r": "inf" if math.isinf(self.r) else self.r,
            "scale": self.scale,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DistributionSpec":
        r = obj.get("r", "inf")
        r = math.inf if r in ("inf", None) else float(r)
        return make_distribution(obj["family"], int(obj["dim"]), r if math.isfinite(r) else None,
                                 scale=float(obj.get("scale", 1.0)))


def _sphere_area(n: int) -> float:
    """Surface measure of S^{n-1}; equals 2 for n = 1."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _log_sphere_area(n: int) -> float:
    return math.log(2.0) + 0.5 * n * math.log(math.pi) - special.gammaln(n / 2)


def isotropic_scale(family: str, n: int, r: float = math.inf) -> float:
    """Scale that gives every coordinate unit variance (closed forms only)."""
    if family == "gaussian":
        return 1.0
    if family == "laplace_product":
        return 1.0 / math.sqrt(2.0)
    if family == "uniform_ball":
        return math.sqrt(n + 2.0)
    if not r > 2:
        raise DistributionError("no finite second moment for r <= 2")
    if family == "student_t":
        return math.sqrt((r - 2.0) / r)
    if family in ("radial_pareto", "pareto_1d"):
        # E|X|^2 = s^2 B(n+2, r-2) / B(n, r) must equal n
        log_ratio = special.betaln(n + 2, r - 2) - special.betaln(n, r)
        return math.sqrt(n * math.exp(-log_ratio))
    raise DistributionError(f"unknown family {family!r}")


def make_distribution(family: str, dim: int, r: float | None = None, normalize: bool = False,
                      scale: float | None = None) -> DistributionSpec:
    """Build a validated :class:`DistributionSpec`.

    Log-concave families take ``r=None`` (stored as infinity). For
    ``student_t`` the degrees of freedom equal ``r``. With ``normalize`` the
    scale is set analytically so that the covariance is the identity.
    """
    if family not in FAMILIES:
        raise DistributionError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if int(dim) != dim or dim < 1:
        raise DistributionError("dim must be a positive integer")
    dim = int(dim)
    if family == "pareto_1d" and dim != 1:
        raise DistributionError("pareto_1d is one-dimensional")
    if family in LOG_CONCAVE:
        if r is not None and math.isfinite(r):
            raise DistributionError(
                f"{family} is log-concave (r = inf); query it as (-1/r)-concave via concavity_params")
        r = math.inf
    else:
        if r is None or not math.isfinite(r):
            raise DistributionError(f"{family} needs a finite concavity parameter r")
        r = float(r)
        if r <= 1:
            raise DistributionError("r must exceed 1 (kappa = -1/r > -1)")
    if normalize:
        if scale is not None:
            raise DistributionError("pass either normalize or scale, not both")
        scale = isotropic_scale(family, dim, r)
    scale = 1.0 if scale is None else float(scale)
    if not scale > 0:
        raise DistributionError("scale must be positive")
    return DistributionSpec(family, dim, r, scale)


def concavity_params(spec: DistributionSpec, as_r: float | None = None):
    """Return ``(kappa, r, beta)`` with ``kappa = -1/r`` and ``beta = n + r``.

    Log-concave families report ``(0, inf, None)``; passing ``as_r`` views
    them as members of the larger (-1/as_r)-concave class.
    """
    if spec.log_concave and as_r is None:
        return 0.0, math.inf, None
    r = spec.r if as_r is None else float(as_r)
    if not spec.log_concave and as_r is not None and as_r > spec.r:
        raise DistributionError(f"a (-1/{spec.r})-concave law is not (-1/{as_r})-concave in general")
    return -1.0 / r, r, spec.dim + r


# --- densities -------------------------------------------------------------

def _profile(family: str, n: int, r: float, rho):
    """Unnormalised log radial profile at unit scale."""
    rho = np.asarray(rho, dtype=float)
    if family == "gaussian":
        return -0.5 * rho * rho
    if family == "student_t":
        return -0.5 * (r + n) * np.log1p(rho * rho / r)
    if family in ("radial_pareto", "pareto_1d"):
        return -(n + r) * np.log1p(rho)
    if family == "uniform_ball":
        return np.where(rho <= 1.0, 0.0, -np.inf)
    raise DistributionError(f"{family} has no radial profile")


def _radial_upper(family: str) -> float:
    return 1.0 if family == "uniform_ball" else math.inf


def _exp_log_power(t: float, k: float, logv: float) -> float:
    """t**k * exp(logv) without intermediate overflow."""
    if t <= 0.0:
        return math.exp(logv) if k == 0 else (0.0 if k > 0 else math.inf)
    return math.exp(k * math.log(t) + logv)


@lru_cache(maxsize=None)
def _log_norm(family: str, n: int, r: float) -> float:
    """-log of the total mass of exp(profile) over R^n, by radial quadrature."""
    bulk = math.sqrt(n)
    mass = _quad.radial_quad(lambda t: _exp_log_power(t, n - 1, float(_profile(family, n, r, t))),
                             scale=bulk, upper=_radial_upper(family))
    return -(_log_sphere_area(n) + math.log(mass))


def radial_log_density(spec: DistributionSpec, rho):
    """log g(x) for |x| = rho (radial families)."""
    if not spec.radial:
        raise DistributionError(f"{spec.family} is not radial")
    n, s = spec.dim, spec.scale
    rho = np.asarray(rho, dtype=float)
    return _log_norm(spec.family, n, spec.r) - n * math.log(s) + _profile(spec.family, n, spec.r, rho / s)


def density_log(spec: DistributionSpec, x):
    """Natural log of the normalised density at ``x`` (shape (n,) or (k, n))."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise DistributionError(f"point has dimension {x.shape[-1]}, spec has {spec.dim}")
    if spec.family == "laplace_product":
        s = spec.scale
        out = -np.abs(x).sum(axis=-1) / s - spec.dim * math.log(2.0 * s)
    else:
        out = radial_log_density(spec, np.linalg.norm(x, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def radius_pdf(spec: DistributionSpec, rho):
    """Density of |X| at ``rho``."""
    rho = np.asarray(rho, dtype=float)
    n = spec.dim
    logg = radial_log_density(spec, rho)
    if n == 1:
        return 2.0 * np.exp(logg)
    with np.errstate(divide="ignore"):
        return np.exp(_log_sphere_area(n) + (n - 1) * np.log(rho) + logg)


def radius_cdf(spec: DistributionSpec, rho) -> np.ndarray:
    """P(|X| <= rho) evaluated at every entry of ``rho`` by cumulative quadrature.

    Points are sorted and the mass of each gap is integrated with Gauss-Legendre
    on log-spaced sub-cells; this is independent of the sampler's lookup table.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    order = np.argsort(rho)
    pts = rho[order]
    upper = spec.scale * _radial_upper(spec.family)
    pts_c = np.clip(pts, 0.0, upper)
    first = _quad.quad(lambda t: float(radius_pdf(spec, t)), 0.0, float(pts_c[0])) if pts_c[0] > 0 else 0.0
    f = lambda t: radius_pdf(spec, t)
    # gaps between consecutive points, each split into 4 cells
    lo, hi = pts_c[:-1], pts_c[1:]
    sub = np.linspace(0.0, 1.0, 5)
    masses = np.zeros(lo.size)
    for a, b in zip(sub[:-1], sub[1:]):
        edges = np.stack([lo + a * (hi - lo), lo + b * (hi - lo)], axis=1)
        half = 0.5 * (edges[:, 1] - edges[:, 0])[:, None]
        x = edges[:, :1] + half * (_quad._GL_X[None, :] + 1.0)
        masses += (half * f(x) * _quad._GL_W[None, :]).sum(axis=1)
    cdf = np.concatenate([[first], first + np.cumsum(masses)])
    out = np.empty_like(cdf)
    out[order] = np.minimum(cdf, 1.0)
    return out


# --- exact moments ---------------------------------------------------------

def _laplace_even_moment(n: int, k: int, s: float) -> float:
    """E|X|^{2k} for i.i.d. Laplace(s) coordinates via exponential generating functions."""
    # E[Y^j] for Y = L^2 is (2j)! s^{2j}; EGF coefficient is (2j)!/j! s^{2j}
    coef = np.array([math.factorial(2 * j) / math.factorial(j) * s ** (2 * j) for j in range(k + 1)])
    poly = np.array([1.0])
    for _ in range(n):
        poly = np.convolve(poly, coef)[: k + 1]
    return float(poly[k] * math.factorial(k))


def radial_moment_oracle(spec: DistributionSpec, p: float, method: str = "closed") -> float:
    """Exact E|X|^p.

    ``method="closed"`` uses Beta/Gamma identities, ``method="quad"`` integrates
    the radius density; the two are independent routes to the same number.
    Negative ``p`` down to (but excluding) ``-n`` is supported.
    """
    n, s, r = spec.dim, spec.scale, spec.r
    if not p > -n:
        raise DistributionError(f"E|X|^p diverges for p <= -n = {-n}")
    if math.isfinite(r) and p >= r:
        raise DistributionError(f"moment diverges for p >= r = {r} (Borell)")
    if p == 0:
        return 1.0
    if spec.family == "laplace_product":
        if float(p).is_integer() and int(p) % 2 == 0 and p > 0:
            return _laplace_even_moment(n, int(p) // 2, s)
        raise DistributionError("laplace_product: radial moments only available for even integer p")
    if method == "quad":
        upper = s * _radial_upper(spec.family)
        lognorm = _log_sphere_area(n)
        return _quad.radial_quad(
            lambda t: _exp_log_power(t, p + n - 1, lognorm + float(radial_log_density(spec, t))),
            scale=s * math.sqrt(n), upper=upper)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    fam = spec.family
    if fam == "gaussian":
        logm = 0.5 * p * math.log(2.0) + special.gammaln((n + p) / 2) - special.gammaln(n / 2)
    elif fam == "student_t":
        logm = (0.5 * p * math.log(r) + special.gammaln((n + p) / 2) + special.gammaln((r - p) / 2)
                - special.gammaln(n / 2) - special.gammaln(r / 2))
    elif fam in ("radial_pareto", "pareto_1d"):
        logm = special.betaln(n + p, r - p) - special.betaln(n, r)
    elif fam == "uniform_ball":
        logm = math.log(n / (n + p))
    else:  # pragma: no cover
        raise DistributionError(fam)
    return math.exp(logm + p * math.log(s))


def sphere_coordinate_moment(n: int, p: float) -> float:
    """E|u_1|^p for u uniform on S^{n-1}."""
    if n == 1:
        return 1.0
    return math.exp(special.betaln((p + 1) / 2, (n - 1) / 2) - special.betaln(0.5, (n - 1) / 2))


# --- marginals ---------------------------------------------------------------

def marginal_density(spec: DistributionSpec, m: int, u) -> float:
    """Density of the projection of X onto an m-dimensional subspace, at ``u``.

    Radial laws have radial marginals, so the (n-m)-fold integral reduces to
    one radial quadrature over the orthogonal complement.
    """
    if not spec.radial:
        raise DistributionError("marginal oracle unavailable for non-radial families")
    n = spec.dim
    if not 1 <= m < n:
        raise DistributionError(f"need 1 <= m < n, got m={m}, n={n}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size != m:
        raise DistributionError(f"point has dimension {u.size}, expected {m}")
    return marginal_profile(spec, m, float(np.linalg.norm(u)))


def marginal_profile(spec: DistributionSpec, m: int, radius: float) -> float:
    """Marginal density at any point of norm ``radius`` (radial families)."""
    n, s = spec.dim, spec.scale
    k = n - m
    u2 = radius * radius
    upper = math.inf
    if spec.family == "uniform_ball":
        if radius >= s:
            return 0.0
        upper = math.sqrt(s * s - u2)
    area = _sphere_area(k)
    integrand = lambda t: _exp_log_power(t, k - 1, float(radial_log_density(spec, math.sqrt(u2 + t * t))))
    return area * _quad.radial_quad(integrand, scale=s * math.sqrt(k), upper=upper)


# --- convexity certificate ---------------------------------------------------

@dataclass
class BorellReport:
    passed: bool
    r: float
    lines: int
    worst: float
    violation: tuple | None = None


def borell_convexity_check(spec: DistributionSpec, r: float | None = None, n_lines: int = 64,
                           n_points: int = 201, seed: int = 0, span: float | None = None) -> BorellReport:
    """Certify that ``g^{-1/(n+r)}`` is convex along random lines.

    Second differences on an even grid must be >= -1e-9 times the local
    magnitude. On failure the first violating triple is reported as
    ``(x_minus, x_mid, x_plus, second_difference)``.
    """
    r = spec.r if r is None else float(r)
    if not math.isfinite(r):
        raise DistributionError("borell_convexity_check needs a finite r")
    n = spec.dim
    beta = n + r
    span = span if span is not None else 6.0 * spec.scale * max(1.0, math.sqrt(n))
    if spec.family == "uniform_ball":
        span = min(span, spec.scale)
    rng = np.random.default_rng(seed)
    ts = np.linspace(-span, span, n_points)
    worst = math.inf
    for _ in range(n_lines):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        x0 = d * rng.uniform(0.0, 0.5 * span)
        pts = x0[None, :] + ts[:, None] * v[None, :]
        logg = np.asarray(density_log(spec, pts), dtype=float)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            h = np.exp(-logg / beta)
            d2 = h[:-2] - 2.0 * h[1:-1] + h[2:]
            loc = np.maximum(np.maximum(np.abs(h[:-2]), np.abs(h[1:-1])), np.abs(h[2:]))
            ok = np.isfinite(d2)
            if not ok.any():
                continue
            rel = np.where(ok, d2 / loc, np.inf)
        worst = min(worst, float(rel.min()))
        bad = np.flatnonzero(ok & (d2 < -1e-9 * loc))
        if bad.size:
            i = int(bad[0])
            return BorellReport(False, r, n_lines, worst,
                                (pts[i].tolist(), pts[i + 1].tolist(), pts[i + 2].tolist(), float(d2[i])))
    return BorellReport(True, r, n_lines, worst)


# --- sampling ---------------------------------------------------------------

class RadiusTable:
    """Inverse CDF of |X| at unit scale, tabulated on log-spaced nodes.

    The lower half is interpolated in log F, the upper half in -log S so that
    both tails keep full relative precision. Beyond the last node the law is
    continued by its polynomial tail of index ``tail_index``.
    """

    def __init__(self, family: str, n: int, r: float, nodes: int = TABLE_NODES):
        self.n = n
        self.tail_index = r
        spec = DistributionSpec(family, n, r, 1.0)
        pdf = lambda t: radius_pdf(spec, t)
        log_c = _log_norm(family, n, r) + _log_sphere_area(n)
        # F(rho) ~ rho^n e^{log_c}/n near 0; S(rho) ~ rho^{-r} e^{log_c}/r for large rho
        lo = math.exp((math.log(1e-12 * n) - log_c) / n)
        hi = math.exp(-(math.log(1e-13 * r) - log_c) / r)
        edges = np.geomspace(lo, hi, nodes)
        masses = _quad.gauss_legendre_cells(pdf, edges)
        f_lo = _quad.quad(lambda t: float(pdf(t)), 0.0, lo)
        # tail mass via t = hi / v, which turns the polynomial tail into v^(r-1)
        s_hi = _quad.quad(lambda v: float(pdf(hi / v)) * hi / (v * v) if v > 0 else 0.0, 0.0, 1.0)
        cdf = np.concatenate([[f_lo], f_lo + np.cumsum(masses)])
        sf = np.concatenate([s_hi + np.cumsum(masses[::-1])[::-1], [s_hi]])
        self.total = float(cdf[-1] + s_hi)
        self.lo, self.hi, self.f_lo, self.s_hi = lo, hi, f_lo, s_hi
        logr = np.log(edges)
        low = cdf <= 0.5
        low[np.argmax(~low)] = True
        up = sf <= 0.5
        up[max(np.argmax(up) - 1, 0)] = True
        self._lower = PchipInterpolator(np.log(cdf[low]), logr[low])
        self._upper = PchipInterpolator(-np.log(sf[up]), logr[up])

    def ppf(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        lower = u <= 0.5
        ul = u[lower]
        with np.errstate(divide="ignore"):
            rl = np.exp(self._lower(np.log(np.maximum(ul, self.f_lo))))
        tiny = ul < self.f_lo
        rl[tiny] = self.lo * (ul[tiny] / self.f_lo) ** (1.0 / self.n)
        out[lower] = rl
        s = 1.0 - u[~lower]
        with np.errstate(divide="ignore"):
            ru = np.exp(self._upper(-np.log(np.maximum(s, self.s_hi))))
        far = s < self.s_hi
        ru[far] = self.hi * (self.s_hi / s[far]) ** (1.0 / self.tail_index)
        out[~lower] = ru
        return out


@lru_cache(maxsize=64)
def radius_table(family: str, n: int, r: float) -> RadiusTable:
    return RadiusTable(family, n, r)


def chunk_layout(seed: int, count: int, chunk_size: int = DEFAULT_CHUNK) -> tuple:
    """Deterministic ``(sub_seed, size)`` pairs; sub-seed i depends only on (seed, i)."""
    if not 0 <= seed < 2 ** 64:
        raise DistributionError("seed must be a 64-bit unsigned integer")
    if count < 1:
        raise DistributionError("count must be >= 1")
    sizes = [chunk_size] * (count // chunk_size)
    if count % chunk_size:
        sizes.append(count % chunk_size)
    layout = []
    for i, size in enumerate(sizes):
        ss = np.random.SeedSequence(seed, spawn_key=(i,))
        layout.append((int(ss.generate_state(1, np.uint64)[0]), size))
    return tuple(layout)


def _directions(rng: np.random.Generator, size: int, n: int) -> np.ndarray:
    if n == 1:
        return np.where(rng.random((size, 1)) < 0.5, -1.0, 1.0)
    z = rng.standard_normal((size, n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _draw_chunk(spec: DistributionSpec, sub_seed: int, size: int) -> np.ndarray:
    rng = np.random.default_rng(sub_seed)
    n, s, fam = spec.dim, spec.scale, spec.family
    if fam == "gaussian":
        return s * rng.standard_normal((size, n))
    if fam == "laplace_product":
        return rng.laplace(0.0, s, (size, n))
    if fam == "student_t":
        z = rng.standard_normal((size, n))
        w = rng.chisquare(spec.r, size)
        return s * z * np.sqrt(spec.r / w)[:, None]
    if fam == "uniform_ball":
        u = _directions(rng, size, n)
        return s * u * (rng.random(size) ** (1.0 / n))[:, None]
    # radial_pareto / pareto_1d: tabulated inverse CDF of the radius
    u = _directions(rng, size, n)
    rho = radius_table(fam, n, spec.r).ppf(rng.random(size))
    return s * u * rho[:, None]


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CONVEXMOMENTS_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(eq=False)
class SampleBatch:
    spec: DistributionSpec
    seed: int
    count: int
    data: np.ndarray = field(repr=False)
    chunk_layout: tuple = ()

    @cached_property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.data, axis=1)


def regenerate(spec: DistributionSpec, seed: int, layout: Sequence[tuple[int, int]],
               threads: int | None = None) -> np.ndarray:
    threads = threads or _threads()
    if threads > 1 and len(layout) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _draw_chunk(spec, c[0], c[1]), layout))
    else:
        parts = [_draw_chunk(spec, sub, size) for sub, size in layout]
    return np.concatenate(parts, axis=0)


def sample(spec: DistributionSpec, seed: int, count: int, chunk_size: int = DEFAULT_CHUNK,
           threads: int | None = None) -> SampleBatch:
    """Draw ``count`` i.i.d. vectors; the result depends only on (spec, seed, layout)."""
    layout = chunk_layout(int(seed), int(count), chunk_size)
    data = regenerate(spec, int(seed), layout, threads)
    return SampleBatch(spec, int(seed), int(count), data, layout)
