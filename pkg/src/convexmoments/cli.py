"""Command-line front end.

Exit status: 0 when every check passes or is vacuous, 1 when a check fails,
2 on configuration errors (including hypothesis violations).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import verify as V
from .constants import ConstantError, constant_bundle
from .distributions import DistributionError, FAMILIES, make_distribution, radial_moment_oracle, sample
from .estimators import (EstimatorError, mean_norm, median_norm, negative_moment, strong_moment,
                         weak_moment, has_weak_oracle)
from .geometry import GeometryError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
CONFIG_ERRORS = (V.HypothesisError, EstimatorError, DistributionError, GeometryError, ConstantError,
                 ValueError, KeyError, TypeError)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    check_id: str
    family: str | None = None
    dim: int | None = None
    r: float | None = None
    p: float | None = None
    n_samples: int | None = None
    seed: int | None = None
    budgets: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "json"
    options: dict = field(default_factory=dict)
    label: str | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return V.jsonable(d)

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown RunConfig fields: {sorted(extra)}")
        obj = dict(obj)
        if isinstance(obj.get("r"), str):
            obj["r"] = float(obj["r"])
        if obj.get("n_samples") is not None:
            obj["n_samples"] = int(float(obj["n_samples"]))
        return cls(**obj)


def _need(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(f"{cfg.check_id} needs {', '.join('--' + m.replace('n_samples', 'samples') for m in missing)}")


def _spec(cfg: RunConfig, normalize: bool = False):
    _need(cfg, "family", "dim")
    return make_distribution(cfg.family, int(cfg.dim), r=cfg.r, normalize=normalize or cfg.options.get("normalize", False))


def _b(cfg: RunConfig, name: str, default: float) -> float:
    return float(cfg.budgets.get(name, default))


def _check_strong_weak(cfg):
    _need(cfg, "p", "n_samples", "seed")
    return V.verify_strong_weak(_spec(cfg), cfg.p, cfg.n_samples, cfg.seed, _b(cfg, "c", 1.0))


def _check_strong_weak_sweep(cfg):
    _need(cfg, "family", "p", "n_samples", "seed")
    dims = cfg.options.get("dims", [2, 4, 8, 16, 32, 64])
    r = cfg.r
    if r is None and cfg.options.get("r_rule") == "2(p+1)":
        r = 2 * (cfg.p + 1)
    return V.strong_weak_sweep(cfg.family, cfg.p, dims, cfg.n_samples, cfg.seed, _b(cfg, "c", 1.0), r=r)


def _check_H(cfg):
    _need(cfg, "p", "seed")
    return V.verify_H(_spec(cfg), cfg.p, int(cfg.options.get("n_projections", 3)), cfg.n_samples or 100_000,
                      cfg.seed, _b(cfg, "c", 1.0), r=cfg.options.get("r_theorem"))


def _check_tail(cfg):
    _need(cfg, "n_samples", "seed")
    return V.verify_tail(_spec(cfg, normalize=True), cfg.n_samples, cfg.seed, _b(cfg, "tail", _b(cfg, "c", 1.0)),
                         _b(cfg, "projection", 1.0), _b(cfg, "t_start", 1.0),
                         t_grid=cfg.options.get("t_grid"), t_min=float(cfg.options.get("t_min", 1.0)))


def _check_negative(cfg):
    _need(cfg, "p", "n_samples", "seed")
    return V.verify_negative(_spec(cfg), cfg.p, cfg.n_samples, cfg.seed, _b(cfg, "c", 1.0), _b(cfg, "C", 1.0))


def _check_smallball(cfg):
    _need(cfg, "p", "n_samples", "seed")
    eps = cfg.options.get("eps_grid", [0.05, 0.1, 0.2, 0.3, 0.5, 0.7])
    return V.verify_smallball(_spec(cfg), cfg.p, eps, cfg.n_samples, cfg.seed, _b(cfg, "c", 1.0),
                              _b(cfg, "C", 1.0), _b(cfg, "exponent", 0.5))


def _check_borell(cfg):
    _need(cfg, "r")
    return V.verify_borell_1d(cfg.r, q_grid=cfg.options.get("q_grid"), t_grid=cfg.options.get("t_grid"),
                              eps_grid=cfg.options.get("eps_grid"), budget=_b(cfg, "c", 2.0))


def _check_oracle(cfg):
    _need(cfg, "n_samples", "seed")
    return V.oracle_agreement(_spec(cfg), cfg.n_samples, cfg.seed, cfg.options.get("p_grid", (1.0, 2.0, 3.5)),
                              cfg.options.get("neg_grid"), _b(cfg, "z_max", 3.0))


def _check_cov(cfg):
    _need(cfg, "seed")
    return V.covariance_sweep(_spec(cfg, normalize=True), cfg.seed, int(cfg.options.get("n_seeds", 20)),
                              budget=_b(cfg, "c", 4.0), a=cfg.options.get("a"),
                              max_N=int(cfg.options.get("max_N", 2 ** 13)))


def _check_thinshell(cfg):
    _need(cfg, "family", "n_samples", "seed")
    return V.thinshell_explore(cfg.family, cfg.options.get("n_grid", [4, 16, 64]), float(cfg.options.get("t", 0.5)),
                               cfg.n_samples, cfg.seed, float(cfg.options.get("a", 1.0)))


def _appendix(name: str) -> Callable:
    fn = V.APPENDIX[name]

    def run(cfg):
        kw = dict(cfg.options)
        if name == "borell-1d" and "c" in cfg.budgets:
            kw["budget"] = float(cfg.budgets["c"])
        return fn(**kw)
    return run


CHECKS: dict[str, Callable] = {
    "strong-weak": _check_strong_weak,
    "strong-weak-sweep": _check_strong_weak_sweep,
    "H": _check_H,
    "tail": _check_tail,
    "negative": _check_negative,
    "smallball": _check_smallball,
    "borell-1d": _check_borell,
    "oracle-agreement": _check_oracle,
    "cov-sweep": _check_cov,
    "thinshell": _check_thinshell,
}
CHECKS.update({f"appendix:{k}": _appendix(k) for k in V.APPENDIX})


def run_check(cfg: RunConfig) -> V.CheckReport:
    """Run one configured check; the config is embedded in the report."""
    if cfg.check_id not in CHECKS:
        raise ConfigError(f"unknown check id {cfg.check_id!r}; known: {', '.join(sorted(CHECKS))}")
    if cfg.format not in ("json", "csv"):
        raise ConfigError("format must be json or csv")
    rep = CHECKS[cfg.check_id](cfg)
    rep.params = dict(rep.params, config=cfg.to_json())
    return rep


def exit_code(status: str) -> int:
    return EXIT_OK if status in ("pass", "vacuous") else EXIT_FAIL


# --- output -----------------------------------------------------------------

def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = json.dumps(v, sort_keys=True)
        else:
            out[key] = v
    return out


def to_csv(rows: list[dict]) -> str:
    flat = [_flatten(V.jsonable(r)) for r in rows]
    fields = sorted({k for r in flat for k in r})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(flat)
    return buf.getvalue()


def render(report: V.CheckReport, fmt: str) -> str:
    if fmt == "csv":
        d = report.to_json()
        rows = d.pop("rows", None)
        return to_csv(rows if rows else [d])
    return report.dumps()


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from exc


# --- suite ------------------------------------------------------------------

def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CONVEXMOMENTS_THREADS", "1")))
    except ValueError:
        return 1


def run_suite(manifest: str | Path, out_dir: str | Path | None = None, threads: int | None = None) -> tuple[int, list]:
    """Run every RunConfig of a JSON manifest; returns (exit code, summary rows).

    Failures and configuration errors are collected, never short-circuited.
    Report files contain no timing, so reruns are byte-identical.
    """
    configs = json.loads(Path(manifest).read_text())
    if not isinstance(configs, list):
        raise ConfigError("manifest must be a JSON list of run configs")

    def job(i_obj):
        i, obj = i_obj
        t0 = time.perf_counter()
        try:
            cfg = RunConfig.from_json(obj)
            rep = run_check(cfg)
            return i, cfg, rep, None, time.perf_counter() - t0
        except CONFIG_ERRORS as exc:
            return i, None, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0

    with ThreadPoolExecutor(max_workers=threads or _threads()) as pool:
        results = sorted(pool.map(job, enumerate(configs)), key=lambda t: t[0])
    summary, code = [], EXIT_OK
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for i, cfg, rep, err, secs in results:
        label = configs[i].get("check_id", "?") if isinstance(configs[i], dict) else "?"
        if err is not None:
            row = {"index": i, "check_id": label, "ratio": None, "pass": False, "status": "error", "error": err}
            code = max(code, EXIT_FAIL)
        else:
            row = {"index": i, "check_id": rep.check_id, "ratio": rep.ratio, "pass": rep.passed,
                   "status": rep.status}
            if exit_code(rep.status):
                code = max(code, EXIT_FAIL)
            if out is not None:
                fname = f"{i:03d}-{cfg.check_id.replace(':', '-')}.{cfg.format}"
                (out / fname).write_text(render(rep, cfg.format))
        summary.append(row)
        print(f"[{i:03d}] {row['check_id']:<26} {row['status']:<8} ratio={row['ratio']}  ({secs:.1f}s)",
              file=sys.stderr)
    if out is not None:
        (out / "summary.json").write_text(json.dumps(V.jsonable(summary), sort_keys=True, indent=2) + "\n")
    return code, summary


# --- argument parsing ---------------------------------------------------------

def _count(text: str) -> int:
    v = float(text)
    if v != int(v) or v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer count, got {text}")
    return int(v)


def _extract_budgets(argv: list[str]) -> tuple[list[str], dict]:
    """Pull ``--budget.NAME VALUE`` / ``--budget.NAME=VALUE`` out of argv."""
    rest, budgets = [], {}
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--budget."):
            name, _, val = tok[len("--budget."):].partition("=")
            if not val:
                if i + 1 >= len(argv):
                    raise ConfigError(f"{tok} needs a value")
                val = argv[i + 1]
                i += 1
            budgets[name] = float(val)
        else:
            rest.append(tok)
        i += 1
    return rest, budgets


def _opt(text: str) -> tuple[str, object]:
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("--opt expects key=value")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def _add_common(p: argparse.ArgumentParser, seed_required: bool = True) -> None:
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--dim", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--samples", type=_count)
    p.add_argument("--seed", type=int, required=seed_required)
    p.add_argument("--budget", type=float, help="main budget (alias of --budget.c)")
    p.add_argument("--opt", type=_opt, action="append", default=[], metavar="KEY=JSON",
                   help="extra check option, e.g. --opt eps_grid=[0.1,0.2]")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="convexmoments", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw a seeded sample")
    _add_common(p)
    p.add_argument("--normalize", action="store_true")

    p = sub.add_parser("constants", help="structure factors at (p, r)")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--r", type=float, default=math.inf)
    p.add_argument("--m", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("moments", help="moment estimates with oracles where available")
    _add_common(p)

    p = sub.add_parser("verify", help="run one verification check")
    p.add_argument("check_id", choices=sorted(k for k in CHECKS if not k.startswith("appendix:")))
    _add_common(p, seed_required=False)

    p = sub.add_parser("cov-sweep", help="empirical covariance deviation sweep")
    _add_common(p)

    p = sub.add_parser("appendix", help="deterministic quadrature check of a lemma")
    p.add_argument("lemma_id", choices=sorted(V.APPENDIX))
    p.add_argument("--budget", type=float)
    p.add_argument("--opt", type=_opt, action="append", default=[])
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("thinshell", help="descriptive thin-shell probabilities")
    _add_common(p)

    p = sub.add_parser("suite", help="run a JSON manifest of run configs")
    p.add_argument("manifest")
    p.add_argument("--out", help="directory for per-check reports and summary.json")
    return ap


def _config_from_args(check_id: str, args, budgets: dict) -> RunConfig:
    budgets = dict(budgets)
    if getattr(args, "budget", None) is not None:
        budgets.setdefault("c", args.budget)
    return RunConfig(check_id=check_id, family=getattr(args, "family", None), dim=getattr(args, "dim", None),
                     r=getattr(args, "r", None), p=getattr(args, "p", None),
                     n_samples=getattr(args, "samples", None), seed=getattr(args, "seed", None),
                     budgets=budgets, out=args.out, format=args.format, options=dict(getattr(args, "opt", [])))


def _cmd_sample(args) -> int:
    if args.family is None or args.dim is None or args.samples is None:
        raise ConfigError("sample needs --family, --dim and --samples")
    spec = make_distribution(args.family, args.dim, r=args.r, normalize=args.normalize)
    batch = sample(spec, args.seed, args.samples)
    if args.format == "csv":
        buf = io.StringIO()
        np.savetxt(buf, batch.data, delimiter=",", fmt="%.17g",
                   header=",".join(f"x{i}" for i in range(spec.dim)), comments="")
        text = buf.getvalue()
    else:
        text = json.dumps(V.jsonable({"spec": spec.to_json(), "seed": args.seed, "count": args.samples,
                                      "layout": list(batch.chunk_layout), "data": batch.data}), sort_keys=True) + "\n"
    _write(text, args.out)
    return EXIT_OK


def _cmd_constants(args) -> int:
    b = constant_bundle(args.p, args.r, args.m).to_json()
    _write(to_csv([b]) if args.format == "csv" else json.dumps(b, sort_keys=True, indent=2) + "\n", args.out)
    return EXIT_OK


def _cmd_moments(args) -> int:
    if None in (args.family, args.dim, args.p, args.samples):
        raise ConfigError("moments needs --family, --dim, --p and --samples")
    spec = make_distribution(args.family, args.dim, r=args.r)
    batch = sample(spec, args.seed, args.samples)
    p = args.p
    rows = {"spec": spec.to_json(), "seed": args.seed, "p": p,
            "strong": strong_moment(batch, p).to_json(),
            "weak": weak_moment(spec if has_weak_oracle(spec, p) else batch, p, seed=args.seed).to_json(),
            "mean_norm": mean_norm(batch).to_json(), "median_norm": median_norm(batch).to_json()}
    if p < spec.dim / 2 and args.samples >= 100_000:
        rows["negative"] = negative_moment(batch, p).to_json()
    if spec.radial:
        rows["strong_oracle"] = radial_moment_oracle(spec, p) ** (1 / p)
    text = to_csv([rows]) if args.format == "csv" else json.dumps(V.jsonable(rows), sort_keys=True, indent=2) + "\n"
    _write(text, args.out)
    return EXIT_OK


def _emit(rep: V.CheckReport, cfg: RunConfig) -> int:
    _write(render(rep, cfg.format), cfg.out)
    print(f"{rep.check_id}: {rep.status} (ratio {rep.ratio:.6g}, {rep.runtime_ms} ms)", file=sys.stderr)
    return exit_code(rep.status)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv, budgets = _extract_budgets(argv)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "constants":
            return _cmd_constants(args)
        if args.command == "moments":
            return _cmd_moments(args)
        if args.command == "suite":
            code, _ = run_suite(args.manifest, args.out)
            return code
        if args.command == "verify":
            cfg = _config_from_args(args.check_id, args, budgets)
        elif args.command == "cov-sweep":
            cfg = _config_from_args("cov-sweep", args, budgets)
        elif args.command == "thinshell":
            cfg = _config_from_args("thinshell", args, budgets)
        else:
            cfg = _config_from_args(f"appendix:{args.lemma_id}", args, budgets)
        return _emit(run_check(cfg), cfg)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
