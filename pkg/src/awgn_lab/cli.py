"""Command-line entry point ``awgn-lab``.

Exit codes: 0 success, 2 invalid input, 3 solver did not converge,
4 support-size budget exhausted, 5 a verification check failed.
Outputs are written atomically and carry a metadata block with the tool
version and the resolved settings, so identical flags give identical files.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .bounds import (
    COLUMN_LEGEND,
    KAPPA_MIN,
    OUT_OF_REGIME,
    READINGS,
    EpsRule,
    SweepTable,
    approximation_error_branches,
    approximation_error_bound,
    bound_report,
    format_cell,
    regime_floor,
    scaling_sweep,
)
from .cache import ResultCache, atomic_write_text
from .capacity import (
    BudgetExhausted,
    CapacityResult,
    KepsResult,
    NoConvergence,
    OptimizerBudget,
    best_m_point_chi2,
    k_eps,
    reference_capacity,
)
from .checks import CHECKS, VerifyConfig, run_checks
from .mixture import DiscreteInput

EXIT_OK, EXIT_INPUT, EXIT_NO_CONVERGENCE, EXIT_BUDGET, EXIT_VERIFY = 0, 2, 3, 4, 5
NATS_PER_BIT = math.log(2.0)
OPTIMIZER_COMMANDS = ("capacity", "keps", "sweep", "approx")
# settings that do not influence results and stay out of the metadata
NON_RESULT_KEYS = ("out", "config", "no_cache", "units")


class UsageError(ValueError):
    """Invalid or missing setting."""


@dataclass
class RunConfig:
    """Resolved settings for one command (flags over config file over defaults)."""

    command: str = ""
    A: float | None = None
    A_list: str | None = None
    eps: float | None = None
    eps_rule: str | None = None
    beta: float | None = None
    kappa: float = KAPPA_MIN
    reading: str = "product"
    grid_n: int | None = None
    tol: float = 1e-9
    max_iters: int = 2000
    seed: int | None = None
    restarts: int = 16
    rounds: int = 200
    k_cap: int | None = None
    checks: str | None = None
    trials: int | None = None
    grid_points: int = 201
    m_min: int = 2
    m_max: int = 12
    allow_out_of_hypothesis: bool = False
    format: str | None = None
    out: str | None = None
    config: str | None = None
    no_cache: bool = False
    units: str = "nats"

    def budget(self) -> OptimizerBudget:
        return OptimizerBudget(restarts=self.restarts, rounds=self.rounds, seed=self.seed,
                               k_cap=self.k_cap)

    def flags(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name in NON_RESULT_KEYS or f.name == "command":
                continue
            out[f.name] = getattr(self, f.name)
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(name: str, text: str):
    kind = _FIELD_TYPES[name]
    if "bool" in kind:
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{name}: expected a boolean, got {text!r}")
    try:
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise UsageError(f"{name}: cannot parse {text!r}") from None
    return text.strip()


def read_config_file(path: str) -> dict:
    """Parse flat ``key = value`` text; ``#`` starts a comment, dashes equal underscores."""
    out = {}
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES or key in ("command", "config"):
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        out[key] = _convert(key, val)
    return out


def resolve(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=ns.command)
    file_vals = read_config_file(ns.config) if getattr(ns, "config", None) else {}
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        cli = getattr(ns, f.name, None)
        if cli is not None and cli is not False:
            setattr(cfg, f.name, cli)
        elif f.name in file_vals:
            setattr(cfg, f.name, file_vals[f.name])
    return cfg


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise UsageError(msg)


def _positive(name, v):
    _need(v is not None, f"--{name.replace('_', '-')} is required")
    _need(math.isfinite(v) and v > 0, f"{name} must be positive and finite, got {v!r}")


def parse_a_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse A list {text!r}") from None
    _need(len(vals) > 0, "A list is empty")
    for v in vals:
        _positive("A", v)
    return vals


def eps_rule_of(cfg: RunConfig) -> EpsRule:
    if cfg.eps_rule is None or cfg.eps_rule == "fixed":
        _positive("eps", cfg.eps)
        return EpsRule("fixed", value=cfg.eps)
    _need(cfg.eps is None, "give either --eps or --eps-rule poly/exp, not both")
    try:
        return EpsRule(cfg.eps_rule, beta=1.0 if cfg.beta is None else cfg.beta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def validate(cfg: RunConfig) -> None:
    """Check every setting the command uses before any computation starts."""
    c = cfg.command
    if c in OPTIMIZER_COMMANDS:
        _need(cfg.seed is not None, f"--seed is required for {c}")
    if cfg.seed is not None:
        _need(cfg.seed >= 0, "seed must be nonnegative")
    _need(cfg.kappa >= KAPPA_MIN, f"kappa={cfg.kappa!r} is below 16 e^3 = {KAPPA_MIN!r}")
    _need(cfg.reading in READINGS, f"reading must be one of {READINGS}")
    _need(cfg.tol >= 1e-12 and math.isfinite(cfg.tol), "tol must be at least 1e-12")
    _need(cfg.grid_n is None or cfg.grid_n >= 64, "grid-n must be at least 64")
    _need(cfg.max_iters >= 1, "max-iters must be positive")
    _need(cfg.restarts >= 0 and cfg.rounds >= 1, "restarts must be >= 0 and rounds >= 1")
    _need(cfg.k_cap is None or cfg.k_cap >= 1, "k-cap must be positive")
    _need(cfg.beta is None or cfg.beta >= 1, "beta must be at least 1")
    _need(cfg.format in (None, "csv", "json"), "format must be csv or json")
    if c in ("capacity", "keps", "bounds", "approx"):
        _positive("A", cfg.A)
    if c == "keps":
        _positive("eps", cfg.eps)
    if c == "bounds":
        eps_rule_of(cfg)
    if c == "sweep":
        _need(cfg.A_list is not None, "--A-list is required")
        parse_a_list(cfg.A_list)
        eps_rule_of(cfg)
    if c == "verify":
        _need(cfg.trials is None or cfg.trials >= 1, "trials must be at least 1")
        if cfg.checks:
            bad = [n for n in cfg.checks.split(",") if n not in CHECKS]
            _need(not bad, f"unknown checks: {', '.join(bad)}")
    if c == "approx":
        _need(cfg.grid_points >= 2, "grid-points must be at least 2")
        _need(1 <= cfg.m_min <= cfg.m_max, "need 1 <= m-min <= m-max")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def metadata(cfg: RunConfig, legend: dict | None = None) -> dict:
    meta = {"tool": "awgn-lab", "version": __version__, "command": cfg.command,
            "units": "nats", "seed": cfg.seed, "flags": cfg.flags()}
    if legend:
        meta["columns"] = legend
    return meta


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        atomic_write_text(cfg.out, text)
    else:
        sys.stdout.write(text)


def emit_json(cfg: RunConfig, result, legend=None) -> None:
    emit(cfg, dumps({"metadata": metadata(cfg, legend), "result": result}))


def csv_header(cfg: RunConfig, legend: dict) -> list[str]:
    meta = metadata(cfg)
    lines = [f"tool: awgn-lab {meta['version']}", f"command: {cfg.command}",
             "units: nats", f"seed: {cfg.seed}"]
    lines += [f"flag {k}: {format_cell(v)}" for k, v in sorted(meta["flags"].items())]
    lines += [f"column {k}: {v}" for k, v in legend.items()]
    return lines


def say(cfg: RunConfig, msg: str) -> None:
    print(msg, file=sys.stderr)


def show_info(cfg: RunConfig, nats: float) -> str:
    if cfg.units == "bits":
        return f"{nats / NATS_PER_BIT:.10g} bits"
    return f"{nats:.10g} nats"


# ---------------------------------------------------------------------------
# cached solver access
# ---------------------------------------------------------------------------


def _cache(cfg: RunConfig) -> ResultCache:
    return ResultCache(enabled=not cfg.no_cache)


def _capacity_params(cfg: RunConfig, A: float) -> dict:
    return {"A": A, "grid_n": cfg.grid_n, "tol": cfg.tol, "max_iters": cfg.max_iters,
            "seed": cfg.seed}


def cached_capacity(cfg: RunConfig, A: float) -> CapacityResult:
    cache = _cache(cfg)
    params = _capacity_params(cfg, A)
    hit = cache.get("capacity", params)
    if hit is not None:
        if hit["status"] == "no_convergence":
            raise NoConvergence(hit["message"], CapacityResult.from_dict(hit["result"]))
        return CapacityResult.from_dict(hit["result"])
    try:
        res = reference_capacity(A, cfg.grid_n, cfg.tol, cfg.max_iters)
    except NoConvergence as exc:
        cache.put("capacity", params, {"status": "no_convergence", "message": str(exc),
                                       "result": exc.best.to_dict()})
        raise
    cache.put("capacity", params, {"status": "ok", "result": res.to_dict()})
    return res


def cached_keps(cfg: RunConfig, A: float, eps: float, ref: CapacityResult) -> KepsResult:
    cache = _cache(cfg)
    params = {"capacity": _capacity_params(cfg, A), "eps": eps, "budget": cfg.budget().to_dict()}
    hit = cache.get("keps", params)
    if hit is not None:
        res = KepsResult.from_dict(hit["result"])
        if hit["status"] == "budget":
            raise BudgetExhausted(hit["message"], res)
        return res
    try:
        res = k_eps(A, eps, cfg.budget(), ref)
    except BudgetExhausted as exc:
        cache.put("keps", params, {"status": "budget", "message": str(exc),
                                   "result": exc.partial.to_dict()})
        raise
    cache.put("keps", params, {"status": "ok", "result": res.to_dict()})
    return res


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_capacity(cfg: RunConfig) -> int:
    try:
        res = cached_capacity(cfg, cfg.A)
        code, status = EXIT_OK, "ok"
    except NoConvergence as exc:
        res, code, status = exc.best, EXIT_NO_CONVERGENCE, "no_convergence"
        say(cfg, f"error: {exc}")
    emit_json(cfg, {"status": status, **res.to_dict()})
    say(cfg, f"A={res.amplitude:g} C={show_info(cfg, res.capacity_nats)} "
             f"support={res.support_size} gap={res.convergence_gap:.3g}")
    return code


def cmd_keps(cfg: RunConfig) -> int:
    try:
        ref = cached_capacity(cfg, cfg.A)
    except NoConvergence as exc:
        say(cfg, f"error: {exc}")
        return EXIT_NO_CONVERGENCE
    try:
        res = cached_keps(cfg, cfg.A, cfg.eps, ref)
        code, status = EXIT_OK, "ok"
    except BudgetExhausted as exc:
        res, code, status = exc.partial, EXIT_BUDGET, "budget_exhausted"
        say(cfg, f"error: {exc}")
    emit_json(cfg, {"status": status, **res.to_dict()})
    say(cfg, f"A={res.amplitude:g} eps={res.epsilon:g} k_eps={res.k_eps} "
             f"I={show_info(cfg, res.mi_achieved)} C={show_info(cfg, res.reference_capacity)}")
    return code


def cmd_bounds(cfg: RunConfig) -> int:
    rule = eps_rule_of(cfg)
    eps = rule.eps_for(cfg.A)
    beta = rule.beta if rule.kind == "poly" else cfg.beta
    rep = bound_report(cfg.A, eps, cfg.kappa, beta, cfg.reading, cfg.allow_out_of_hypothesis)
    out = rep.to_dict()
    out["eps_rule"] = rule.describe()
    emit_json(cfg, out)
    b = rep.band
    say(cfg, f"A={rep.A:g} eps={rep.eps:.6g} m={rep.m_achievability} converse={rep.converse_lower:.6g} "
             f"band=[{b.poly_lower:.6g}, {b.poly_upper:.6g}] in_hypothesis={b.in_hypothesis}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    rule = eps_rule_of(cfg)
    beta = rule.beta if rule.kind == "poly" else (cfg.beta or 1.0)
    table = scaling_sweep(
        parse_a_list(cfg.A_list), rule, cfg.budget(), kappa=cfg.kappa, beta=beta,
        capacity_fn=lambda A: cached_capacity(cfg, A),
        keps_fn=lambda A, eps, ref: cached_keps(cfg, A, eps, ref),
    )
    if (cfg.format or "csv") == "csv":
        emit(cfg, table.to_csv(csv_header(cfg, COLUMN_LEGEND)))
    else:
        emit_json(cfg, table.to_dict(), COLUMN_LEGEND)
    for row in table.rows:
        if row["warnings"]:
            say(cfg, f"A={row['A']:g}: {row['warnings']}")
    say(cfg, f"{len(table.rows)} rows, eps rule {rule.describe()}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    names = cfg.checks.split(",") if cfg.checks else None
    amps = None if cfg.A is None else (cfg.A,)
    vcfg = VerifyConfig(seed=cfg.seed or 0, trials=cfg.trials, amplitudes=amps)
    results = run_checks(names, vcfg)
    for r in results:
        say(cfg, f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.anchor}; {r.detail}")
    failed = [r.name for r in results if not r.passed]
    report = {"passed": not failed, "failed": failed,
              "checks": [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in results]}
    emit_json(cfg, report)
    if failed:
        say(cfg, f"failed checks: {', '.join(failed)}")
        return EXIT_VERIFY
    return EXIT_OK


APPROX_LEGEND = {
    "m": "support size of the approximating input",
    "chi2": "smallest chi-square found from the target output law",
    "log_chi2": "natural log of chi2",
    "bound": "two-regime approximation bound, or out_of_regime",
    "bound_regime": "which regime formula applies",
    "quadratic_formula": "quadratic-regime formula evaluated regardless of applicability",
}


def cmd_approx(cfg: RunConfig) -> int:
    target = DiscreteInput.uniform_grid(cfg.A, cfg.grid_points)
    budget = cfg.budget()
    rows, prev = [], ()
    for m in range(cfg.m_min, cfg.m_max + 1):
        val, d = best_m_point_chi2(target, m, budget, warm_start=prev)
        prev = (d,)
        bound = approximation_error_bound(m, cfg.A, cfg.kappa, cfg.reading)
        br = approximation_error_branches(m, cfg.A, cfg.kappa, cfg.reading)
        regime = ("large_m" if br["large_m_applies"] else
                  "quadratic" if br["quadratic_applies"] else "out_of_regime")
        rows.append({
            "m": m, "chi2": val, "log_chi2": math.log(val) if val > 0 else None,
            "bound": "out_of_regime" if bound is OUT_OF_REGIME else bound,
            "bound_regime": regime, "quadratic_formula": br["quadratic"],
        })
    fit = decay_fit([r["m"] for r in rows], [r["chi2"] for r in rows], m_from=4)
    legend = dict(APPROX_LEGEND)
    if (cfg.format or "csv") == "csv":
        lines = csv_header(cfg, legend)
        lines.append(f"regime floor: {regime_floor(cfg.A, cfg.kappa, cfg.reading)!r}")
        lines.append(f"fit log chi2 vs m^2 (m >= 4): slope={fit['slope']!r} r2={fit['r2']!r}")
        emit(cfg, SweepTable(rows, tuple(APPROX_LEGEND)).to_csv(lines))
    else:
        emit_json(cfg, {"rows": rows, "fit": fit}, legend)
    say(cfg, f"{len(rows)} rows, slope {fit['slope']:.4g}, r2 {fit['r2']:.4f}")
    return EXIT_OK


def decay_fit(ms, vals, m_from: int = 4) -> dict:
    """Least-squares line of ``log chi2`` against ``m^2`` over ``m >= m_from``."""
    pts = [(m * m, math.log(v)) for m, v in zip(ms, vals) if m >= m_from and v > 0]
    if len(pts) < 3:
        return {"slope": math.nan, "intercept": math.nan, "r2": math.nan, "points": len(pts)}
    x, y = np.array(pts).T
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    r2 = 1 - float(resid @ resid) / float(((y - y.mean()) ** 2).sum())
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2, "points": len(pts)}


COMMANDS = {
    "capacity": cmd_capacity, "keps": cmd_keps, "bounds": cmd_bounds,
    "sweep": cmd_sweep, "verify": cmd_verify, "approx": cmd_approx,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--out", help="output file (stdout when omitted)")
    common.add_argument("--seed", type=int)
    common.add_argument("--no-cache", action="store_true", default=None,
                        help="bypass the result cache")
    units = common.add_mutually_exclusive_group()
    units.add_argument("--nats", dest="units", action="store_const", const="nats")
    units.add_argument("--bits", dest="units", action="store_const", const="bits",
                       help="print rates in bits (stored values stay in nats)")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--grid-n", dest="grid_n", type=int)
    solver.add_argument("--tol", type=float)
    solver.add_argument("--max-iters", dest="max_iters", type=int)
    solver.add_argument("--restarts", type=int)
    solver.add_argument("--rounds", type=int)
    solver.add_argument("--k-cap", dest="k_cap", type=int)

    rule = argparse.ArgumentParser(add_help=False)
    rule.add_argument("--eps", type=float)
    rule.add_argument("--eps-rule", dest="eps_rule", choices=("poly", "exp", "fixed"))
    rule.add_argument("--beta", type=float)
    rule.add_argument("--kappa", type=float)
    rule.add_argument("--reading", choices=READINGS)

    p = argparse.ArgumentParser(prog="awgn-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("capacity", parents=[common, solver], help="reference capacity C(A)")
    s.add_argument("--A", type=float)

    s = sub.add_parser("keps", parents=[common, solver], help="smallest support size K_eps(A)")
    s.add_argument("--A", type=float)
    s.add_argument("--eps", type=float)

    s = sub.add_parser("bounds", parents=[common, rule], help="closed-form bounds, no solver")
    s.add_argument("--A", type=float)
    s.add_argument("--allow-out-of-hypothesis", dest="allow_out_of_hypothesis",
                   action="store_true", default=None)

    s = sub.add_parser("sweep", parents=[common, solver, rule], help="theory versus solver table")
    s.add_argument("--A-list", dest="A_list")
    s.add_argument("--format", choices=("csv", "json"))

    s = sub.add_parser("verify", parents=[common], help="run the inequality checks")
    s.add_argument("--checks", help=f"comma-separated subset of: {', '.join(CHECKS)}")
    s.add_argument("--A", type=float, help="run amplitude-dependent checks at this A only")
    s.add_argument("--trials", type=int)

    s = sub.add_parser("approx", parents=[common, solver], help="best m-point chi-square decay")
    s.add_argument("--A", type=float)
    s.add_argument("--grid-points", dest="grid_points", type=int)
    s.add_argument("--m-min", dest="m_min", type=int)
    s.add_argument("--m-max", dest="m_max", type=int)
    s.add_argument("--kappa", type=float)
    s.add_argument("--reading", choices=READINGS)
    s.add_argument("--format", choices=("csv", "json"))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve(ns)
        validate(cfg)
        return COMMANDS[cfg.command](cfg)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
