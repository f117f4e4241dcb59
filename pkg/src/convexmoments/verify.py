"""Inequality checks returning :class:`CheckReport` objects.

Unnamed universal constants enter only through explicit ``budget`` arguments.
A Monte Carlo check passes when the ratio observed/bound stays at most one
after every estimate is moved to the end of its 95% interval that is
unfavourable to the inequality; ``ratio`` in the report is that conservative
value and ``observed["ratio_point"]`` the plain one.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import geometry
from ._quad import quad, radial_quad
from .constants import (alpha_factor, borell_tail, c1_factor, c2_factor, c4_factor, lambda_factor, paouris_tail)
from .distributions import (DistributionSpec, _sphere_area, make_distribution, marginal_profile,
                            radial_moment_oracle, radius_cdf, sample)
from .estimators import (Z95, directional_moment, mean_norm, negative_moment, small_ball_location,
                         small_ball_probability, strong_moment, tail_probability, weak_moment,
                         weak_moment_oracle, wilson_interval, covariance_deviation, has_weak_oracle)

STATUSES = ("pass", "fail", "vacuous")


class HypothesisError(ValueError):
    """A requested check violates the hypothesis of the statement it tests."""


def _require(cond: bool, hypothesis: str, detail: str = "") -> None:
    if not cond:
        msg = f"hypothesis {hypothesis} violated"
        raise HypothesisError(msg + (f" ({detail})" if detail else ""))


def jsonable(obj):
    """Recursively convert to JSON-safe values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


@dataclass
class CheckReport:
    check_id: str
    params: dict
    observed: dict
    ratio: float
    budget: float
    passed: bool
    status: str
    runtime_ms: int = 0
    rows: list = field(default_factory=list)

    def to_json(self, include_runtime: bool = False) -> dict:
        out = {"check_id": self.check_id, "params": self.params, "observed": self.observed,
               "ratio": self.ratio, "budget": self.budget, "pass": self.passed, "status": self.status}
        if self.rows:
            out["rows"] = self.rows
        if include_runtime:
            out["runtime_ms"] = self.runtime_ms
        return jsonable(out)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"


def _finish(check_id, params, observed, ratio, budget, passed, t0, rows=None, status=None) -> CheckReport:
    if status is None:
        status = "pass" if passed else "fail"
    return CheckReport(check_id, params, observed, float(ratio), float(budget), bool(passed), status,
                       int(round(1000 * (time.perf_counter() - t0))), rows or [])


def _spec_params(spec: DistributionSpec | None, **kw) -> dict:
    out = {"spec": spec.to_json() if spec is not None else None}
    out.update(kw)
    return out


def _theorem_r(spec: DistributionSpec, r: float | None) -> float:
    return spec.r if r is None else r


# --- strong vs weak moments ---------------------------------------------------

def verify_strong_weak(spec: DistributionSpec, p: float, N: int, seed: int, budget: float = 1.0) -> CheckReport:
    """(E|X|^p)^{1/p} <= budget (C2 E|X| + sigma_p(X)); C2 = 1 for log-concave laws.

    Also records the reverse floor 2 (E|X|^p)^{1/p} >= E|X| + sigma_p(X).
    """
    t0 = time.perf_counter()
    _require(0 < p < spec.r, "0 < p < r", f"p={p}, r={spec.r}")
    if math.isfinite(spec.r):
        _require(p <= spec.r / 2 - 0.5, "p <= r/2 - 0.5 (finite variance of |X|^p)", f"p={p}, r={spec.r}")
    batch = sample(spec, seed, N)
    strong = strong_moment(batch, p)
    mean = mean_norm(batch)
    weak = weak_moment(spec if has_weak_oracle(spec, p) else batch, p, seed=seed)
    c2 = 1.0 if spec.log_concave else c2_factor(p, spec.r)
    rhs = budget * (c2 * mean.value + weak.value)
    rhs_low = budget * (c2 * mean.ci_low + weak.ci_low)
    ratio_point = strong.value / rhs
    ratio = strong.ci_high / rhs_low
    reverse = (mean.value + weak.value) / (2 * strong.value)
    reverse_ok = mean.ci_low + weak.ci_low <= 2 * strong.ci_high
    observed = {"strong": strong.to_json(), "mean_norm": mean.to_json(), "weak": weak.to_json(),
                "c2_factor": c2, "rhs": rhs, "ratio_point": ratio_point,
                "reverse_ratio": reverse, "reverse_floor_ok": reverse_ok}
    params = _spec_params(spec, p=p, N=N, seed=seed, budgets={"c": budget})
    return _finish("strong-weak", params, observed, ratio, budget, ratio <= 1 and reverse_ok, t0)


def strong_weak_sweep(family: str, p: float, dims: Sequence[int], N: int, seed: int, budget: float = 1.0,
                      r: float | None = None) -> CheckReport:
    """verify_strong_weak across dimensions plus the universality test:
    max/min of the ratios at most 3 and fitted slope of ratio against ln n at most 0.1."""
    t0 = time.perf_counter()
    rows, ratios = [], []
    for n in dims:
        spec = make_distribution(family, n, r=r)
        rep = verify_strong_weak(spec, p, N, seed, budget)
        rows.append({"n": n, "ratio": rep.ratio, "ratio_point": rep.observed["ratio_point"], "pass": rep.passed})
        ratios.append(rep.observed["ratio_point"])
    ratios = np.array(ratios)
    spread = float(ratios.max() / ratios.min())
    slope = float(np.polyfit(np.log(np.asarray(dims, dtype=float)), ratios, 1)[0]) if len(dims) > 1 else 0.0
    all_pass = all(row["pass"] for row in rows)
    ok = all_pass and spread <= 3.0 and slope <= 0.1
    observed = {"spread": spread, "slope_ln_n": slope, "max_ratio": float(max(r_["ratio"] for r_ in rows)),
                "all_pass": all_pass}
    params = {"family": family, "p": p, "r": r, "dims": list(dims), "N": N, "seed": seed, "budgets": {"c": budget}}
    return _finish("strong-weak-sweep", params, observed, observed["max_ratio"], budget, ok, t0, rows)


# --- assumption H -------------------------------------------------------------

def _projection(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((n, m)))
    return q


def _gauge_moment_ratio(spec: DistributionSpec, p: float, m: int) -> float:
    """(E|Y|^p)^{1/p} / E|Y| for the rank-m marginal Y, by quadrature of its density."""
    area = _sphere_area(m)
    upper = spec.scale if spec.family == "uniform_ball" else math.inf

    def mom(q):
        f = lambda t: t ** (q + m - 1) * area * marginal_profile(spec, m, t)
        return radial_quad(f, scale=spec.scale, upper=upper, rel=1e-8)

    return mom(p) ** (1 / p) / mom(1.0)


def verify_H(spec: DistributionSpec | None, p: float, n_projections: int = 3, N: int = 100_000,
             seed: int = 0, budget: float = 1.0, r: float | None = None, data=None) -> CheckReport:
    """Assumption H(p, lambda) for the gauge of K_alpha of rank-m marginals, m = ceil(p).

    The quadrature ratio uses one projection (all agree for radial laws); the
    remaining random projections are Monte Carlo consistency checks. A
    degenerate projected sample (``data`` supported on a lower-dimensional set)
    is reported as vacuous.
    """
    t0 = time.perf_counter()
    m = math.ceil(p)
    _require(m in (1, 2), "m = ceil(p) in {1, 2}", f"p={p}")
    rng = np.random.default_rng(seed)
    if data is not None:
        data = np.asarray(data, dtype=float)
        n = data.shape[1]
        ranks = []
        for _ in range(n_projections):
            P = _projection(n, m, rng)
            ranks.append(int(np.linalg.matrix_rank(np.cov((data @ P).T).reshape(m, m), tol=1e-9)))
        if min(ranks) < m:
            params = {"p": p, "m": m, "n_projections": n_projections, "seed": seed, "budgets": {"c": budget}}
            return _finish("H", params, {"projected_ranks": ranks, "degenerate": True}, 0.0, budget, True, t0,
                           status="vacuous")
        raise HypothesisError("test-double data must be degenerate; use a spec for full checks")
    _require(spec.radial, "radial law (marginal oracle)", spec.family)
    _require(m < spec.dim, "m < n", f"m={m}, n={spec.dim}")
    r_ = _theorem_r(spec, r)
    if math.isinf(r_):
        r_ = 2 * p + 2
    _require(1 <= p < r_, "1 <= p < r", f"p={p}, r={r_}")
    lam = budget * lambda_factor(p, r_)
    # the marginal of a radial law is radial, so K_alpha is a centred ball and
    # its gauge is |y| / rho_K; the ratio below does not depend on rho_K
    alpha = alpha_factor(p, r_, m)
    quad_ratio = _gauge_moment_ratio(spec, p, m)
    batch = sample(spec, seed, N)
    rows = []
    consistent = True
    for i in range(n_projections):
        P = _projection(spec.dim, m, rng)
        y = np.linalg.norm(batch.data @ P, axis=1)
        mp = directional_moment(y[:, None], [1.0], p)
        m1 = directional_moment(y[:, None], [1.0], 1.0)
        mc = mp.value / m1.value
        lo, hi = mp.ci_low / m1.ci_high, mp.ci_high / m1.ci_low
        ok = lo <= quad_ratio <= hi
        consistent &= ok
        rows.append({"projection": i, "mc_ratio": mc, "ci": [lo, hi], "consistent": ok})
    ratio = quad_ratio / lam
    observed = {"moment_ratio": quad_ratio, "lambda": lam, "alpha": alpha, "m": m, "r_used": r_,
                "mc_consistent": consistent, "ratio_point": ratio}
    params = _spec_params(spec, p=p, N=N, seed=seed, n_projections=n_projections, budgets={"c": budget})
    return _finish("H", params, observed, ratio, budget, ratio <= 1 and consistent, t0, rows)


# --- tails ----------------------------------------------------------------------

def _resolvable_tail_grid(spec: DistributionSpec, N: int, norms: np.ndarray, points: int = 10,
                          t_min: float = 1.0) -> np.ndarray:
    n = spec.dim
    cand = np.geomspace(t_min, 100.0, 600)
    if spec.radial:
        expected = N * (1.0 - radius_cdf(spec, cand * math.sqrt(n)))
    else:
        srt = np.sort(norms)
        expected = N - np.searchsorted(srt, cand * math.sqrt(n), side="left")
    ok = cand[expected >= 50]
    if ok.size == 0:
        raise HypothesisError("no resolvable tail points (need >= 50 expected exceedances)")
    return np.geomspace(t_min, ok.max(), points)


def verify_tail(spec: DistributionSpec, N: int, seed: int, budget: float = 1.0, proj_budget: float = 1.0,
                t_budget: float = 1.0, t_grid: Sequence[float] | None = None, t_min: float = 1.0) -> CheckReport:
    """Norm tail P(|X| >= t sqrt n) against the polynomial bound of order r/2,
    its log-log decay rate, and the rank-k projection tail t^{-4} k^{-2}.

    The projection part runs over t >= C exp(4/a) with C = ``t_budget`` and a
    the largest value allowed by r = max(4, 2 a log n).
    """
    t0 = time.perf_counter()
    _require(spec.r > 2, "r > 2", f"r={spec.r}")
    _require(spec.is_isotropic, "isotropic X (normalize=True)")
    n, r = spec.dim, spec.r
    batch = sample(spec, seed, N)
    norms = batch.norms
    grid = np.asarray(t_grid, dtype=float) if t_grid is not None else _resolvable_tail_grid(spec, N, norms, t_min=t_min)
    rows, dominated = [], True
    logp = []
    for t in grid:
        est = tail_probability(batch, t * math.sqrt(n))
        bound = paouris_tail(t, n, r, budget) if math.isfinite(r) else 1.0
        ok = est.ci_high <= bound
        dominated &= ok
        rows.append({"part": "norm", "t": t, "prob": est.value, "ci": [est.ci_low, est.ci_high], "bound": bound,
                     "count": int(round(est.value * N)), "pass": ok})
        logp.append(math.log(est.value) if est.value > 0 else -math.inf)
    lp = np.array(logp)
    fin = np.isfinite(lp)
    slope = float(np.polyfit(np.log(grid[fin]), lp[fin], 1)[0]) if fin.sum() >= 2 else -math.inf
    slope_limit = -r / 2 + 0.5
    # log-concave tails decay faster than any power: the rate test is vacuous
    slope_ok = slope <= slope_limit if math.isfinite(r) else True
    # strong-regularity part: r = max(4, 2 a log n) fixes a, then t >= exp(4/a)
    a = r / (2 * math.log(n)) if (n > 1 and math.isfinite(r)) else math.inf
    c1 = t_budget * math.exp(4 / a)
    rng = np.random.default_rng(seed)
    proj_ok = True
    for k in sorted({1, math.ceil(n / 2)}):
        P = np.eye(n)[:, :k] if spec.radial else _projection(n, k, rng)
        pn = np.linalg.norm(batch.data @ P, axis=1)
        for t in (c1, 1.5 * c1, 2 * c1):
            cnt = int(np.count_nonzero(pn >= t * math.sqrt(k)))
            lo, hi = wilson_interval(cnt, N)
            bound = proj_budget * t ** -4 * k ** -2
            ok = hi <= bound
            proj_ok &= ok
            rows.append({"part": "projection", "k": k, "t": t, "prob": cnt / N, "ci": [lo, hi], "bound": bound,
                         "count": cnt, "pass": ok})
    ratio = max(row["ci"][1] / row["bound"] for row in rows)
    observed = {"slope": slope, "slope_limit": slope_limit, "slope_ok": slope_ok,
                "slope_test": "asserted" if math.isfinite(r) else "vacuous", "dominance_ok": dominated,
                "projection_ok": proj_ok, "a": a, "C1": c1, "t_grid": grid}
    params = _spec_params(spec, N=N, seed=seed, budgets={"tail": budget, "projection": proj_budget, "t_start": t_budget})
    return _finish("tail", params, observed, ratio, budget, dominated and slope_ok and proj_ok, t0, rows)


# --- negative moments and small balls --------------------------------------------

def _mean_and_weak(spec: DistributionSpec, batch, p: float, seed: int):
    """(E|X|, sigma_p) with unfavourable ends: mean high, sigma low for lower bounds."""
    mean = mean_norm(batch)
    weak = weak_moment(spec if has_weak_oracle(spec, p) else batch, p, seed=seed)
    return mean, weak


def _lc_r(spec: DistributionSpec) -> float:
    # log-concave laws are (-1/r)-concave for every r; r = 2 is used in the r-dependent factors
    return 2.0 if spec.log_concave else spec.r


def verify_negative(spec: DistributionSpec, p: float, N: int, seed: int, budget_c: float = 1.0,
                    budget_C: float = 1.0) -> CheckReport:
    """Lower bound for (E|X|^{-p})^{-1/p}.

    1 <= p < min(r, n/2): C4 (E|X| - C sigma_p), vacuous when the bracket is <= 0.
    0 < p < 1: c0 (1-p) (r-1)/r^2 E|X|.
    """
    t0 = time.perf_counter()
    n, r = spec.dim, spec.r
    if p >= 1:
        _require(p < min(r, n / 2), "1 <= p < min(r, n/2)", f"p={p}, r={r}, n={n}")
    else:
        _require(0 < p < 1, "0 < p < 1", f"p={p}")
        _require(p < n / 2, "p < n/2 (finite negative moment)", f"p={p}, n={n}")
    batch = sample(spec, seed, N)
    neg = negative_moment(batch, p)
    mean, weak = _mean_and_weak(spec, batch, p, seed)
    observed = {"negative": neg.to_json(), "mean_norm": mean.to_json(), "weak": weak.to_json()}
    if spec.radial:
        observed["negative_oracle"] = radial_moment_oracle(spec, -p) ** (-1 / p)
    params = _spec_params(spec, p=p, N=N, seed=seed, budgets={"c": budget_c, "C": budget_C})
    if p >= 1:
        c4 = c4_factor(p, r)
        bracket_hi = mean.ci_high - budget_C * weak.ci_low
        bracket = mean.value - budget_C * weak.value
        observed.update({"clause": "main", "c4_factor": c4, "bracket": bracket})
        if bracket_hi <= 0:
            observed["ratio_point"] = 0.0
            return _finish("negative", params, observed, 0.0, budget_c, True, t0, status="vacuous")
        rhs = budget_c * c4 * bracket
        ratio = budget_c * c4 * bracket_hi / neg.ci_low
    else:
        rr = _lc_r(spec)
        fac = (1 - p) * (rr - 1) / rr ** 2
        rhs = budget_c * fac * mean.value
        ratio = budget_c * fac * mean.ci_high / neg.ci_low
        observed.update({"clause": "moreover", "factor": fac, "r_used": rr})
    observed["rhs"] = rhs
    observed["ratio_point"] = rhs / neg.value
    return _finish("negative", params, observed, ratio, budget_c, ratio <= 1, t0)


def chi_small_ball(n: int, eps: float, scale: float = 1.0) -> float:
    """Exact P(|G| <= eps E|G|) for a scaled standard Gaussian in R^n."""
    mean = scale * radial_moment_oracle(make_distribution("gaussian", n), 1.0)
    return float(stats.chi2.cdf((eps * mean / scale) ** 2, n))


def verify_smallball(spec: DistributionSpec, p: float, eps_grid: Sequence[float], N: int, seed: int,
                     budget_c: float = 1.0, budget_C: float = 1.0, budget_exp: float = 0.5) -> CheckReport:
    """P(|X| <= eps E|X|) <= (2 eps / (c C4))^p, gated on E|X| >= 2 C sigma_p.

    For radial laws the exact probabilities are recorded (Gaussian rows via the
    chi-square CDF, matched to 1e-3). For log-concave laws the log-log slope of
    P(|X| <= eps (E|X|^2)^{1/2}) is compared against budget_exp (E|X|^2)^{1/2}/sigma_2.
    """
    t0 = time.perf_counter()
    n, r = spec.dim, spec.r
    _require(1 <= p < min(r, n / 2), "1 <= p < min(r, n/2)", f"p={p}, r={r}, n={n}")
    batch = sample(spec, seed, N)
    mean, weak = _mean_and_weak(spec, batch, p, seed)
    gate_ratio = mean.value / (2 * weak.value)
    params = _spec_params(spec, p=p, N=N, seed=seed, eps_grid=list(eps_grid),
                          budgets={"c": budget_c, "C": budget_C, "exponent": budget_exp})
    observed = {"gate_ratio": gate_ratio, "gate_ok": mean.ci_low >= 2 * budget_C * weak.ci_high}
    if not observed["gate_ok"]:
        return _finish("smallball", params, observed, 0.0, budget_c, True, t0, status="vacuous")
    c4 = c4_factor(p, r)
    loc = small_ball_location(batch)
    rows, ok_all, oracle_ok = [], True, True
    for eps in eps_grid:
        est = small_ball_probability(batch, eps, location=loc)
        bound = min(1.0, (2 * eps / (budget_c * c4)) ** p)
        ok = est.ci_high <= bound or bound >= 1.0
        row = {"eps": eps, "prob": est.value, "ci": [est.ci_low, est.ci_high], "bound": bound, "pass": ok}
        if spec.family == "gaussian":
            row["oracle"] = chi_small_ball(n, eps, spec.scale)
            row["oracle_match"] = abs(row["oracle"] - est.value) <= 1e-3
            oracle_ok &= row["oracle_match"]
        elif spec.radial:
            row["oracle"] = float(radius_cdf(spec, np.array([eps * loc]))[0])
        ok_all &= ok
        rows.append(row)
    ratio = max((row["ci"][1] / row["bound"]) if row["bound"] > 0 else 0.0 for row in rows)
    observed.update({"c4_factor": c4, "location": loc, "oracle_ok": oracle_ok})
    passed = ok_all and oracle_ok
    if spec.log_concave and spec.radial:
        second = math.sqrt(radial_moment_oracle(spec, 2.0))
        sig2 = weak_moment_oracle(spec, 2.0)
        slope = small_ball_exponent(spec)
        need = budget_exp * second / sig2
        observed.update({"exponent_slope": slope, "exponent_required": need, "exponent_ok": slope >= need})
        passed &= slope >= need
    return _finish("smallball", params, observed, ratio, budget_c, passed, t0, rows)


def small_ball_exponent(spec: DistributionSpec, eps_grid: Sequence[float] = (0.05, 0.1, 0.2)) -> float:
    """Log-log slope of the exact P(|X| <= eps (E|X|^2)^{1/2}) over a small-eps grid."""
    second = math.sqrt(radial_moment_oracle(spec, 2.0))
    eps = np.asarray(eps_grid, dtype=float)
    if spec.family == "gaussian":
        logp = stats.chi2.logcdf((eps * second / spec.scale) ** 2, spec.dim)
    else:
        logp = np.log(radius_cdf(spec, eps * second))
    return float(np.polyfit(np.log(eps), logp, 1)[0])


# --- one-dimensional Borell-type lemmas (exact CDF) ---------------------------------

def verify_borell_1d(r: float, q_grid: Sequence[float] | None = None, t_grid: Sequence[float] | None = None,
                     eps_grid: Sequence[float] | None = None, budget: float = 1.0, scale: float = 1.0) -> CheckReport:
    """Tail lemmas plus the moment comparison for the symmetric 1-D law with
    P(|X| > u) = (1 + u/s)^{-r}, evaluated exactly (no sampling)."""
    t0 = time.perf_counter()
    _require(r > 1, "r > 1", f"r={r}")
    s = scale
    surv = lambda u: (1.0 + u / s) ** -r
    mean = s / (r - 1)
    med = s * (2 ** (1 / r) - 1)
    t_grid = list(t_grid) if t_grid is not None else [1, 1.5, 2, 3, 5, 10, 30, 100]
    eps_grid = list(eps_grid) if eps_grid is not None else [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.99]
    if q_grid is None:
        q_grid = [q for q in (1.0, 1.5, 2.0, 3.0, 5.0, 8.0) if q < r] + [r - d for d in (0.5, 0.2, 0.1, 0.05)
                                                                     if r - d >= 1]
    q_grid = sorted(set(q_grid))
    for q in q_grid:
        _require(1 <= q < r, "1 <= q < r", f"q={q}, r={r}")
    rows, ratios = [], []
    for t in t_grid:
        lhs, rhs = surv(3 * t * mean), borell_tail(t, r)
        rows.append({"part": "tail", "t": t, "lhs": lhs, "rhs": rhs, "pass": lhs <= rhs})
        lhs2, rhs2 = surv(t * med), (budget * r) ** r * t ** -r
        rows.append({"part": "median_tail", "t": t, "lhs": lhs2, "rhs": rhs2, "pass": lhs2 <= rhs2})
    for eps in eps_grid:
        lhs = 1.0 - surv(eps * med)
        rows.append({"part": "small_ball", "eps": eps, "lhs": lhs, "rhs": budget * eps, "pass": lhs <= budget * eps})
    mom_ratios = []
    for q in q_grid:
        # E|X|^q = int_0^inf q u^{q-1} P(|X| > u) du
        mq = quad(lambda u: q * u ** (q - 1) * surv(u), 0.0, math.inf, points=[s, 10 * s, 100 * s], rel=1e-9)
        lhs = mq ** (1 / q) / mean
        rhs = budget * c1_factor(q, r)
        mom_ratios.append(lhs)
        rows.append({"part": "moment_ratio", "q": q, "lhs": lhs, "rhs": rhs, "pass": lhs <= rhs})
    for row in rows:
        ratios.append(row["lhs"] / row["rhs"])
    near = [(q, m) for q, m in zip(q_grid, mom_ratios) if r - q <= 0.5]
    div_slope = None
    if len(near) >= 2:
        div_slope = float(np.polyfit(np.log([r - q for q, _ in near]), np.log([m for _, m in near]), 1)[0])
    observed = {"mean": mean, "median": med, "divergence_slope": div_slope,
                "divergence_reference": -1.0 / r}
    params = {"family": "pareto_1d", "r": r, "scale": s, "budgets": {"c": budget}, "q_grid": q_grid,
              "t_grid": t_grid, "eps_grid": eps_grid}
    ratio = max(ratios)
    return _finish("borell-1d", params, observed, ratio, budget, all(r_["pass"] for r_ in rows), t0, rows)


# --- covariance and thin shell -------------------------------------------------------

def _sub_seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1, np.uint64)[0] >> 1)


def covariance_sweep(spec: DistributionSpec, seed: int, n_seeds: int = 20, k_max: int | None = None,
                     budget: float = 1.0, a: float | None = None, max_N: int = 2 ** 13) -> CheckReport:
    """Median over seeds of the empirical covariance deviation at N = n 2^k.

    The point N = n is recorded but excluded from the fit and the pointwise bound.
    """
    t0 = time.perf_counter()
    n, r = spec.dim, spec.r
    _require(r > 2, "r > 2", f"r={r}")
    _require(spec.is_isotropic, "isotropic X (normalize=True)")
    a_req = None
    if math.isfinite(r):
        a_req = r / (2 * math.log(n)) if n > 1 else math.inf
        _require(r >= 4, "r >= max(4, 2 a log n)", f"r={r}")
    Ns = []
    k = 0
    while n * 2 ** k <= max_N and (k_max is None or k <= k_max):
        Ns.append(n * 2 ** k)
        k += 1
    rows, meds = [], []
    for k, N in enumerate(Ns):
        devs = [covariance_deviation(sample(spec, _sub_seed(seed, k, i), N), seed=i) for i in range(n_seeds)]
        med = float(np.median(devs))
        bound = budget * math.sqrt(n / N)
        asserted = N > n
        ok = (med <= bound) if asserted else True
        rows.append({"N": N, "median_deviation": med, "bound": bound, "asserted": asserted, "pass": ok})
        meds.append(med)
    fit_N = np.array([row["N"] for row in rows if row["asserted"]], dtype=float)
    fit_d = np.array([row["median_deviation"] for row in rows if row["asserted"]])
    slope = float(np.polyfit(np.log(fit_N), np.log(fit_d), 1)[0])
    slope_ok = -0.65 <= slope <= -0.35
    ratio = max(row["median_deviation"] / row["bound"] for row in rows if row["asserted"])
    observed = {"slope": slope, "slope_ok": slope_ok, "a": a if a is not None else a_req}
    params = _spec_params(spec, seed=seed, n_seeds=n_seeds, N_grid=Ns, budgets={"c": budget})
    return _finish("cov-sweep", params, observed, ratio, budget,
                   slope_ok and all(row["pass"] for row in rows), t0, rows)


def thinshell_explore(family: str, n_grid: Sequence[int], t: float, N: int, seed: int,
                      a: float = 1.0) -> CheckReport:
    """Descriptive: P(| |X| - mean |X| | >= t sqrt n) across n (never fails).

    Heavy families use r = 2 a log(2n).
    """
    t0 = time.perf_counter()
    rows = []
    for n in n_grid:
        r = None
        if family not in ("gaussian", "laplace_product", "uniform_ball"):
            r = max(2 * a * math.log(2 * n), 2.5)
        spec = make_distribution(family, n, r=r, normalize=True)
        norms = sample(spec, _sub_seed(seed, n), N).norms
        dev = np.abs(norms - norms.mean())
        cnt = int(np.count_nonzero(dev >= t * math.sqrt(n)))
        lo, hi = wilson_interval(cnt, N)
        rows.append({"n": n, "r": r, "prob": cnt / N, "ci": [lo, hi]})
    probs = [row["prob"] for row in rows]
    diffs = np.diff(probs)
    trend = "decreasing" if np.all(diffs <= 0) else "increasing" if np.all(diffs >= 0) else "mixed"
    params = {"family": family, "n_grid": list(n_grid), "t": t, "N": N, "seed": seed, "a": a}
    return _finish("thinshell", params, {"trend": trend}, 0.0, 1.0, True, t0, rows)


# --- estimator / oracle agreement --------------------------------------------------

def _z(est_raw: float, oracle_raw: float, se_raw: float) -> float:
    return (est_raw - oracle_raw) / se_raw if se_raw > 0 else (0.0 if est_raw == oracle_raw else math.inf)


def oracle_agreement(spec: DistributionSpec, N: int, seed: int, p_grid: Sequence[float] = (1.0, 2.0, 3.5),
                     neg_grid: Sequence[float] | None = None, z_max: float = 3.0) -> CheckReport:
    """Monte Carlo moments of every kind against exact oracles.

    z-scores are taken on the raw moment scale E|.|^p, with standard errors
    read off the estimators' 95% intervals.
    """
    t0 = time.perf_counter()
    _require(spec.radial, "radial law (oracle available)", spec.family)
    n = spec.dim
    batch = sample(spec, seed, N)
    rows = []
    for p in p_grid:
        est = strong_moment(batch, p)
        se = (est.ci_high ** p - est.ci_low ** p) / (2 * Z95)
        orc = radial_moment_oracle(spec, p)
        rows.append({"kind": "strong", "p": p, "estimate": est.value, "oracle": orc ** (1 / p),
                     "z": _z(est.value ** p, orc, se)})
        est = weak_moment(batch, p)
        se = (est.ci_high ** p - est.ci_low ** p) / (2 * Z95)
        orc = weak_moment_oracle(spec, p) ** p
        rows.append({"kind": "weak", "p": p, "estimate": est.value, "oracle": orc ** (1 / p),
                     "z": _z(est.value ** p, orc, se)})
    if neg_grid is None:
        neg_grid = [q for q in (0.5, 1.0, 2.0, 3.5) if q < n / 2]
    for p in neg_grid:
        est = negative_moment(batch, p)
        se = (est.ci_low ** -p - est.ci_high ** -p) / (2 * Z95)
        orc = radial_moment_oracle(spec, -p)
        rows.append({"kind": "negative", "p": p, "estimate": est.value, "oracle": orc ** (-1 / p),
                     "z": _z(est.value ** -p, orc, se)})
    for row in rows:
        row["pass"] = abs(row["z"]) <= z_max
    ratio = max(abs(row["z"]) for row in rows) / z_max
    params = _spec_params(spec, N=N, seed=seed, p_grid=list(p_grid), neg_grid=list(neg_grid),
                          budgets={"z_max": z_max})
    return _finish("oracle-agreement", params, {"max_abs_z": ratio * z_max}, ratio, z_max,
                   all(row["pass"] for row in rows), t0, rows)


# --- geometric and appendix lemmas as reports ---------------------------------------

def _ratio_rows_report(check_id, params, reports, t0) -> CheckReport:
    rows = []
    for label, rep in reports:
        rows.append({"case": label, "ratio": rep.ratio / rep.bound, "raw_ratio": rep.ratio, "budget": rep.budget, "origin_inside": rep.origin_inside,
                     "pass": rep.passed and rep.origin_inside})
    ratio = max(row["ratio"] for row in rows)
    budgets = [row["budget"] for row in rows if row["budget"] is not None]
    worst_budget = max(budgets) if budgets else math.inf
    return _finish(check_id, params, {"largest_budget_needed": worst_budget}, ratio, worst_budget,
                   all(row["pass"] for row in rows), t0, rows)


def appendix_restriction(p_grid=(1.0, 2.0), r_grid=(3.0, 4.0, 6.0, 10.0),
                         budgets=geometry.BUDGETS) -> CheckReport:
    """Restriction to K_alpha for pareto_1d (m = 1) and radial_pareto n = 2 (m = 2), both F kinds."""
    t0 = time.perf_counter()
    reports = []
    for p in p_grid:
        for r in r_grid:
            s1 = make_distribution("pareto_1d", 1, r=r)
            s2 = make_distribution("radial_pareto", 2, r=r)
            for kind in ("gauge_power", "linear_power"):
                reports.append((f"1d p={p} r={r} {kind}", geometry.restriction_check(s1, p, r, kind, budgets)))
                reports.append((f"2d p={p} r={r} {kind}", geometry.restriction_check(s2, p, r, kind, budgets)))
    params = {"p_grid": list(p_grid), "r_grid": list(r_grid), "budgets": {"sweep": list(budgets)}}
    return _ratio_rows_report("restriction", params, reports, t0)


def appendix_concave2(p_grid=(1.0, 2.0), r_grid=(3.0, 4.0, 6.0, 10.0), budgets=geometry.BUDGETS) -> CheckReport:
    t0 = time.perf_counter()
    reports = []
    for p in p_grid:
        for r in r_grid:
            if p < r:
                s1 = make_distribution("pareto_1d", 1, r=r)
                reports.append((f"p={p} r={r}", geometry.concave2_check(s1, p, r, budgets)))
    params = {"p_grid": list(p_grid), "r_grid": list(r_grid), "budgets": {"sweep": list(budgets)}}
    return _ratio_rows_report("concave2", params, reports, t0)


def appendix_polar_levelset(p_grid=(1.0, 2.0), r_grid=(4.0, 6.0, 10.0), n: int = 3,
                            budgets=geometry.BUDGETS) -> CheckReport:
    t0 = time.perf_counter()
    reports = []
    for p in p_grid:
        for r in r_grid:
            spec = make_distribution("student_t", n, r=r)
            reports.append((f"student_t n={n} p={p} r={r}", geometry.polar_levelset_check(spec, p, r, budgets)))
    params = {"p_grid": list(p_grid), "r_grid": list(r_grid), "n": n, "budgets": {"sweep": list(budgets)}}
    return _ratio_rows_report("polar-levelset", params, reports, t0)


def appendix_polar_formula(tol: float = 1e-6) -> CheckReport:
    t0 = time.perf_counter()
    specs = [make_distribution("gaussian", 2), make_distribution("student_t", 2, r=5.0),
             make_distribution("radial_pareto", 2, r=4.0)]
    rows = []
    for spec in specs:
        rep = geometry.polar_formula_check(spec)
        rows.append({"family": spec.family, "r": spec.r, "lhs": rep.lhs, "rhs": rep.rhs, "gap": rep.gap,
                     "pass": rep.gap <= tol})
    ratio = max(row["gap"] for row in rows) / tol
    return _finish("polar-formula", {"n": 2, "m": 1, "budgets": {"gap_tol": tol}},
                   {"max_gap": ratio * tol}, ratio, tol, all(row["pass"] for row in rows), t0, rows)


def _g0_cases():
    fs = [
        ("1+|t|", lambda t: 1 + abs(t), [0.0]),
        ("1+|t|+t/2", lambda t: 1 + abs(t) + t / 2, [0.0]),
        ("1+t^2", lambda t: 1 + t * t, []),
        ("sqrt(1+t^2)", lambda t: math.hypot(1.0, t), []),
        ("1+max(2t,-t/2)", lambda t: 1 + max(2 * t, -t / 2), [0.0]),
    ]
    return fs, (3.0, 5.0, 10.0, 50.0)


def appendix_g0(tol: float = 1e-10, beta_limit: float = 1000.0) -> CheckReport:
    """g(0) >= ((beta-2)/(beta-1))^beta ||g||_inf on 20 centred Borell-form densities,
    plus the large-beta limit of the factor against e^{-1}."""
    t0 = time.perf_counter()
    fs, betas = _g0_cases()
    rows = []
    for name, f, kinks in fs:
        for beta in betas:
            d = geometry.BorellDensity1D(f, beta, kinks)
            rep = geometry.g0_bound_check(d, beta)
            rows.append({"f": name, "beta": beta, "margin": rep.margin, "g0": rep.g0, "gmax": rep.gmax,
                         "pass": rep.margin >= -tol})
    fac = geometry.g0_bound_factor(beta_limit)
    limit_gap = abs(fac - math.exp(-1)) / math.exp(-1)
    rows.append({"f": "limit", "beta": beta_limit, "factor": fac, "limit_gap": limit_gap, "pass": limit_gap <= 0.01})
    worst = min(row["margin"] for row in rows if "margin" in row)
    observed = {"min_margin": worst, "limit_gap": limit_gap}
    return _finish("g0-bound", {"budgets": {"margin_tol": tol, "limit_rel": 0.01}}, observed,
                   0.0 if worst >= 0 else -worst / tol, 1.0, all(row["pass"] for row in rows), t0, rows)


def _phi_cases():
    return [
        ("x-s", lambda s: (lambda x: x - s), True),
        ("2(x-s)+1", lambda s: (lambda x: 2 * (x - s) + 1), False),
        ("sqrt(x-s)", lambda s: (lambda x: math.sqrt(max(x - s, 0.0))), False),
        ("min(x-s,1)", lambda s: (lambda x: min(x - s, 1.0)), False),
        ("min(x-s,(x-s)/2+1)", lambda s: (lambda x: min(x - s, 0.5 * (x - s) + 1)), False),
    ]


def appendix_G(s_grid=(0.5, 1.0, 2.0), m_grid=(1, 2), const_tol: float = 1e-9) -> CheckReport:
    """G(beta) nondecreasing in beta for concave phi; constant for the extremal phi = x - s."""
    t0 = time.perf_counter()
    rows = []
    for name, make, extremal in _phi_cases():
        for s in s_grid:
            for m in m_grid:
                grid = [m + 1 + d for d in (0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 30.0)]
                rep = geometry.G_monotonicity_check(make(s), s, m, grid)
                ok = rep.nondecreasing
                if extremal:
                    ok &= max(abs(v - 1) for v in rep.values) <= const_tol
                rows.append({"phi": name, "s": s, "m": m, "values": rep.values, "max_drop": rep.max_drop,
                             "pass": ok})
    ratio = max(row["max_drop"] for row in rows) / 1e-7
    return _finish("G-monotone", {"s_grid": list(s_grid), "m_grid": list(m_grid),
                                  "budgets": {"drop_tol": 1e-7, "const_tol": const_tol}},
                   {"max_drop": ratio * 1e-7}, ratio, 1.0, all(row["pass"] for row in rows), t0, rows)


def appendix_borell_1d(r_grid=(2.0, 3.0, 5.0, 10.0), budget: float = 2.0) -> CheckReport:
    t0 = time.perf_counter()
    reps = [verify_borell_1d(r, budget=budget) for r in r_grid]
    rows = [{"r": r, "ratio": rep.ratio, "pass": rep.passed, "divergence_slope": rep.observed["divergence_slope"]}
            for r, rep in zip(r_grid, reps)]
    ratio = max(row["ratio"] for row in rows)
    return _finish("borell-1d", {"r_grid": list(r_grid), "budgets": {"c": budget}}, {}, ratio, budget,
                   all(row["pass"] for row in rows), t0, rows)


APPENDIX = {
    "restriction": appendix_restriction,
    "concave2": appendix_concave2,
    "polar-formula": appendix_polar_formula,
    "polar-levelset": appendix_polar_levelset,
    "g0-bound": appendix_g0,
    "G-monotone": appendix_G,
    "borell-1d": appendix_borell_1d,
}
