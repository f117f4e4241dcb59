"""Structure factors of the explicit constants, with every unnamed universal
constant set to one.

The unknown constants are not guessed here; checks multiply the factors below
by a configurable budget instead. ``r = inf`` (log-concave) is accepted and
evaluates every factor at its limit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy import special


class ConstantError(ValueError):
    pass


def _check(p: float, r: float) -> None:
    if not r > 1:
        raise ConstantError("r must exceed 1")
    if not p < r:
        raise ConstantError(f"need p < r (got p={p}, r={r})")


def _ratio(r: float, p: float) -> float:
    """r / (r - p), equal to 1 at r = inf."""
    return 1.0 if math.isinf(r) else r / (r - p)


def _inv_gap(r: float, p: float) -> float:
    """1 / (r - p), equal to 0 at r = inf."""
    return 0.0 if math.isinf(r) else 1.0 / (r - p)


def c1_factor(p: float, r: float) -> float:
    """Moment-comparison factor for one-dimensional (-1/r)-concave norms: p if r > p+1, else r/(r-p)^{1/p}."""
    _check(p, r)
    if r > p + 1:
        return p
    return r / (r - p) ** (1.0 / p)


def c2_factor(p: float, r: float) -> float:
    _check(p, r)
    return _ratio(r, 1.0) ** 3 * _ratio(r, p) ** 4


def restriction_factor(p: float, r: float) -> float:
    _check(p, r)
    return 1.0 + _inv_gap(r, p)


def c3_factor(p: float, r: float) -> float:
    return restriction_factor(p, r) ** (1.0 / p)


def level_ratio(p: float, r: float) -> float:
    """r^2 / ((r-p)(r-1)); tends to 1 as r -> inf."""
    _check(p, r)
    return _ratio(r, p) * _ratio(r, 1.0)


def c4_factor(p: float, r: float) -> float:
    return level_ratio(p, r) ** -3 * c3_factor(p, r) ** -1


def alpha_factor(p: float, r: float, m: int, c: float = 1.0) -> float:
    """Level parameter ((c (r+m)^2 / ((r-p)(r-1)))^{(r+m)/m} of the restriction lemma.

    Evaluated in log space; the exponent (r+m)/m is large for heavy tails.
    As ``r -> inf`` the value tends to exp((2m+p+1)/m) when c = 1 and to
    inf (or 0) when c > 1 (or c < 1).
    """
    _check(p, r)
    if math.isinf(r):
        if c == 1.0:
            return math.exp((2 * m + p + 1) / m)
        return math.inf if c > 1.0 else 0.0
    base = math.log(c) + 2.0 * math.log(r + m) - math.log(r - p) - math.log(r - 1)
    expo = (r + m) / m * base
    return math.exp(expo) if expo < 700 else math.inf


def lemma5_alpha(p: float, r: float, c: float = 1.0) -> float:
    """Level parameter c (r^2/((r-p)(r-1)))^3 used for linear functionals."""
    return c * level_ratio(p, r) ** 3


def lambda_factor(p: float, r: float) -> float:
    return c2_factor(p, r)


@dataclass(frozen=True)
class ConstantBundle:
    p: float
    r: float
    m: int
    c1_factor: float
    c2_factor: float
    c3_factor: float
    c4_factor: float
    alpha_factor: float
    lambda_factor: float
    restriction_factor: float

    def to_json(self) -> dict:
        out = asdict(self)
        return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in out.items()}


def constant_bundle(p: float, r: float, m: int | None = None) -> ConstantBundle:
    """All structure factors at (p, r, m); ``m`` defaults to ceil(p)."""
    if p < 1:
        raise ConstantError("constant_bundle expects p >= 1")
    _check(p, r)
    m = math.ceil(p) if m is None else int(m)
    return ConstantBundle(
        p=p, r=r, m=m,
        c1_factor=c1_factor(p, r),
        c2_factor=c2_factor(p, r),
        c3_factor=c3_factor(p, r),
        c4_factor=c4_factor(p, r),
        alpha_factor=alpha_factor(p, r, m),
        lambda_factor=lambda_factor(p, r),
        restriction_factor=restriction_factor(p, r),
    )


def gamma_p(p: float) -> float:
    """L_p norm of a standard Gaussian scalar."""
    if not p > 0:
        raise ConstantError("p must be positive")
    logm = 0.5 * p * math.log(2.0) + special.gammaln((p + 1) / 2) - 0.5 * math.log(math.pi)
    return math.exp(logm / p)


def beta_fn(u: float, v: float) -> float:
    if not (u > 0 and v > 0):
        raise ConstantError("Beta function needs u, v > 0")
    return math.exp(special.betaln(u, v))


def borell_tail(t: float, r: float) -> float:
    """Bound (1 + t/(3r))^{-r} on P(|X| >= 3t E|X|)."""
    if not r > 1:
        raise ConstantError("r must exceed 1")
    return math.exp(-r * math.log1p(t / (3.0 * r)))


def paouris_tail(t: float, n: int, r: float, c_budget: float = 1.0) -> float:
    """min(1, (c max(1, r/sqrt n) / t)^{r/2}) bounding P(|X| >= t sqrt n) for isotropic X."""
    if not r > 2:
        raise ConstantError("tail bound needs r > 2")
    if t <= 0:
        return 1.0
    base = c_budget * max(1.0, r / math.sqrt(n)) / t
    if base >= 1.0:
        return 1.0
    return math.exp(0.5 * r * math.log(base))


def subgaussian_ratio(p: float) -> float:
    """gamma_p / (sqrt(p) gamma_1): smallest psi with ||<z,G>||_p <= psi sqrt(p) ||<z,G>||_1."""
    if p < 1:
        raise ConstantError("p must be >= 1")
    return gamma_p(p) / (math.sqrt(p) * gamma_p(1.0))
