"""Monte Carlo estimators for the statistics the inequalities are stated in.

Every estimator takes a :class:`~convexmoments.distributions.SampleBatch`
(or, for test doubles, a bare ``(N, n)`` array) and returns a
:class:`MomentEstimate` carrying a 95% interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import (DistributionSpec, SampleBatch, radial_moment_oracle,
                            sample, sphere_coordinate_moment)

Z95 = 1.959963984540054
MOM_BLOCKS = 32
WEAK_STARTS = 512
WEAK_STEPS = 50
WEAK_SEARCH_ROWS = 20_000
CALIBRATION_COUNT = 100_000


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    ci_low: float
    ci_high: float
    method: str
    n_samples: int
    p: float | None = None

    @property
    def stderr(self) -> float:
        """Half-width of the interval in units of one standard error."""
        return (self.ci_high - self.ci_low) / (2.0 * Z95)

    def to_json(self) -> dict:
        return {"value": self.value, "ci": [self.ci_low, self.ci_high], "method": self.method,
                "n": self.n_samples, "p": self.p}


def _unpack(batch) -> tuple[np.ndarray, DistributionSpec | None]:
    if isinstance(batch, SampleBatch):
        return batch.data, batch.spec
    data = np.asarray(batch, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    return data, None


def _norms(batch) -> np.ndarray:
    if isinstance(batch, SampleBatch):
        return batch.norms
    return np.linalg.norm(_unpack(batch)[0], axis=1)


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    phat = k / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else min(phat, max(0.0, centre - half))
    hi = 1.0 if k == n else max(phat, min(1.0, centre + half))
    return lo, hi


def median_of_means(values: np.ndarray, blocks: int = MOM_BLOCKS) -> tuple[float, float]:
    """Median of ``blocks`` contiguous block means and its standard error.

    Blocks are contiguous slices, so the partition is fixed by the row order
    of the batch (and hence by its chunk layout).
    """
    means = np.array([b.mean() for b in np.array_split(values, blocks)])
    med = float(np.median(means))
    # asymptotic efficiency of the median of ~normal block means
    se = math.sqrt(math.pi / 2.0) * float(means.std(ddof=1)) / math.sqrt(blocks)
    return med, se


def _power_estimate(values: np.ndarray, p: float, method_blocks: int = MOM_BLOCKS):
    m, se = median_of_means(values, method_blocks)
    lo = max(m - Z95 * se, 0.0)
    return m ** (1.0 / p), lo ** (1.0 / p), (m + Z95 * se) ** (1.0 / p)


def strong_moment(batch, p: float) -> MomentEstimate:
    """(E|X|^p)^{1/p} by median-of-means over 32 blocks.

    Restricted to p <= r/2 - 0.5 so that |X|^p has finite variance.
    """
    data, spec = _unpack(batch)
    if not p > 0:
        raise EstimatorError("strong_moment needs p > 0")
    if spec is not None and math.isfinite(spec.r) and p > spec.r / 2 - 0.5:
        raise EstimatorError(
            f"p={p} outside the finite-variance regime 0 < p <= r/2 - 0.5 = {spec.r / 2 - 0.5}")
    if data.shape[0] < 10_000:
        raise EstimatorError("strong_moment needs at least 1e4 draws")
    v, lo, hi = _power_estimate(_norms(batch) ** p, p)
    return MomentEstimate(v, lo, hi, "median_of_means", data.shape[0], p)


def directional_moment(batch, z, p: float) -> MomentEstimate:
    """(E|<z, X>|^p)^{1/p} along a fixed unit direction ``z``."""
    data, _ = _unpack(batch)
    z = np.asarray(z, dtype=float)
    z = z / np.linalg.norm(z)
    v, lo, hi = _power_estimate(np.abs(data @ z) ** p, p)
    return MomentEstimate(v, lo, hi, "median_of_means", data.shape[0], p)


def has_weak_oracle(spec: DistributionSpec, p: float) -> bool:
    return spec.radial or (spec.family == "laplace_product" and p >= 2 and float(p).is_integer() and p % 2 == 0)


def weak_moment_oracle(spec: DistributionSpec, p: float) -> float:
    """Exact sigma_p.

    Radial laws: E|<e1,X>|^p = E|X|^p E|u_1|^p. Laplace products at even p:
    E<z,X>^p is a polynomial with positive coefficients in the power sums
    sum z_i^{2k} (all Laplace cumulants are positive), so a coordinate axis is
    extremal and sigma_p = (p!)^{1/p} b.
    """
    if spec.family == "laplace_product" and has_weak_oracle(spec, p):
        return math.exp(math.lgamma(p + 1) / p) * spec.scale
    if not spec.radial:
        raise EstimatorError(f"no weak-moment oracle for {spec.family} at p={p}")
    if math.isfinite(spec.r) and p >= spec.r:
        raise EstimatorError(f"weak moment diverges for p >= r = {spec.r}")
    return (radial_moment_oracle(spec, p) * sphere_coordinate_moment(spec.dim, p)) ** (1.0 / p)


def _search_direction(data: np.ndarray, p: float, seed: int) -> np.ndarray:
    """Seeded multistart + coordinate ascent on the sphere for max E|<z,X>|^p."""
    rng = np.random.default_rng(seed)
    sub = data[:WEAK_SEARCH_ROWS]
    n = sub.shape[1]
    starts = rng.standard_normal((WEAK_STARTS, n))
    starts /= np.linalg.norm(starts, axis=1, keepdims=True)
    scores = np.concatenate([(np.abs(sub @ starts[i:i + 64].T) ** p).mean(axis=0)
                             for i in range(0, WEAK_STARTS, 64)])
    z = starts[int(np.argmax(scores))]
    best = float(scores.max())
    step = 0.5
    for _ in range(WEAK_STEPS):
        improved = False
        for i in range(n):
            for sign in (1.0, -1.0):
                cand = z.copy()
                cand[i] += sign * step
                cand /= np.linalg.norm(cand)
                val = float((np.abs(sub @ cand) ** p).mean())
                if val > best:
                    z, best, improved = cand, val, True
        if not improved:
            step *= 0.5
    return z


def weak_moment(source, p: float, seed: int = 0) -> MomentEstimate:
    """Weak moment sigma_p = sup_{|z|<=1} (E|<z,X>|^p)^{1/p}.

    * radial ``DistributionSpec``: exact (method ``oracle``);
    * batch from a radial law: Monte Carlo along e1 (all directions agree);
    * other batches: direction search, which only certifies a lower bound.
    """
    if isinstance(source, DistributionSpec):
        v = weak_moment_oracle(source, p)
        return MomentEstimate(v, v, v, "oracle", 0, p)
    data, spec = _unpack(source)
    if spec is not None and math.isfinite(spec.r) and p >= spec.r:
        raise EstimatorError(f"weak moment diverges for p >= r = {spec.r}")
    n = data.shape[1]
    if spec is not None and spec.radial:
        z = np.eye(n)[0]
    else:
        z = _search_direction(data, p, seed)
    return directional_moment(source, z, p)


def mean_norm(source) -> MomentEstimate:
    """E|X|: oracle for radial specs/batches, median-of-means otherwise."""
    spec = source if isinstance(source, DistributionSpec) else _unpack(source)[1]
    if spec is not None and spec.radial:
        v = radial_moment_oracle(spec, 1.0)
        return MomentEstimate(v, v, v, "oracle", 0, 1.0)
    v, lo, hi = _power_estimate(_norms(source), 1.0)
    return MomentEstimate(v, lo, hi, "median_of_means", len(_norms(source)), 1.0)


def negative_moment(batch, p: float, batches: int = MOM_BLOCKS) -> MomentEstimate:
    """(E|X|^{-p})^{-1/p} by a plain mean; interval from batch means."""
    data, spec = _unpack(batch)
    n = data.shape[1]
    if not 0 < p < n / 2:
        raise EstimatorError(f"p={p} outside 0 < p < n/2 = {n / 2} (negative-moment hypothesis p < min(r, n/2))")
    if spec is not None and p >= spec.r:
        raise EstimatorError(f"p={p} >= r={spec.r}")
    if data.shape[0] < 100_000:
        raise EstimatorError("negative_moment needs at least 1e5 draws")
    vals = _norms(batch) ** (-p)
    mean = float(vals.mean())
    means = np.array([b.mean() for b in np.array_split(vals, batches)])
    se = float(means.std(ddof=1)) / math.sqrt(batches)
    lo_m, hi_m = mean - Z95 * se, mean + Z95 * se
    value = mean ** (-1.0 / p)
    hi = lo_m ** (-1.0 / p) if lo_m > 0 else math.inf
    return MomentEstimate(value, hi_m ** (-1.0 / p), hi, "plain_mean", data.shape[0], p)


def median_norm(batch) -> MomentEstimate:
    """Empirical median of |X| with an order-statistic (binomial) interval."""
    norms = np.sort(_norms(batch))
    N = norms.size
    if N < 1000:
        raise EstimatorError("median_norm needs at least 1e3 draws")
    half = 0.5 * Z95 * math.sqrt(N)
    lo = int(max(0, math.floor(N / 2 - half)))
    hi = int(min(N - 1, math.ceil(N / 2 + half)))
    return MomentEstimate(float(np.median(norms)), float(norms[lo]), float(norms[hi]),
                          "empirical_quantile", N, None)


def tail_probability(batch, threshold: float) -> MomentEstimate:
    """P(|X| >= threshold) with a Wilson interval."""
    if threshold < 0:
        raise EstimatorError("threshold must be nonnegative")
    norms = _norms(batch)
    k = int(np.count_nonzero(norms >= threshold))
    lo, hi = wilson_interval(k, norms.size)
    return MomentEstimate(k / norms.size, lo, hi, "plain_mean", norms.size, None)


def calibration_seed(seed: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(1 << 30,)).generate_state(1, np.uint64)[0])


def small_ball_location(batch) -> float:
    """E|X| for the small-ball event: oracle when the law has one, else an
    independent calibration batch of 1e5 draws."""
    data, spec = _unpack(batch)
    if spec is None:
        return float(np.linalg.norm(data, axis=1).mean())
    if spec.radial:
        return radial_moment_oracle(spec, 1.0)
    cal = sample(spec, calibration_seed(batch.seed), CALIBRATION_COUNT)
    return float(cal.norms.mean())


def small_ball_probability(batch, eps: float, location: float | None = None) -> MomentEstimate:
    """P(|X| <= eps * E|X|) with a Wilson interval."""
    if not 0 <= eps <= 1:
        raise EstimatorError("eps must lie in [0, 1]")
    norms = _norms(batch)
    if eps == 0:
        # {|X| <= 0} is a null event for laws with a density
        return MomentEstimate(0.0, 0.0, 0.0, "oracle", norms.size, None)
    loc = small_ball_location(batch) if location is None else location
    k = int(np.count_nonzero(norms <= eps * loc))
    lo, hi = wilson_interval(k, norms.size)
    return MomentEstimate(k / norms.size, lo, hi, "plain_mean", norms.size, None)


def covariance_deviation(batch, iters: int = 200, restarts: int = 2, tol: float = 1e-6,
                         seed: int = 0) -> float:
    """Operator norm of (1/N) sum X_i X_i^T - I by symmetric power iteration."""
    data, spec = _unpack(batch)
    if spec is not None and not spec.is_isotropic:
        raise EstimatorError("covariance_deviation needs an isotropic spec (normalize=True, r > 2)")
    N, n = data.shape
    if N < n:
        raise EstimatorError("need N >= n")
    S = data.T @ data / N - np.eye(n)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(restarts):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            # ||S v|| for unit v increases monotonically to the spectral radius,
            # even when +lambda and -lambda compete
            w = S @ v
            new = float(np.linalg.norm(w))
            if new == 0.0:
                break
            v = w / new
            done = abs(new - lam) <= tol * new
            lam = new
            if done:
                break
        best = max(best, abs(lam))
    return best
