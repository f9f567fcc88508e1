"""Command-line driver: one subcommand per experiment, JSON or CSV output."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import dynamics, qs_probe, skew, trails
from .cf import cf_value, convergents, is_even_type, mu_In, parse_cf
from .errors import CircleTrailsError, DigitsExhausted
from .lifts import parse_map

COMMANDS = ("cf", "skew-orbit", "density", "tiles", "distortion", "pullback", "trail", "trail-check",
            "partition", "real-bounds", "signature", "tune", "yoccoz", "qs-scan", "even-trail")


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    command: str
    map: str | None = None
    cf: str | None = None
    precision: int | None = None
    depth: int | None = None
    steps: int | None = None
    grid: int | None = None
    seed: int = 0
    x: float | None = None
    y: float | None = None
    out: str | None = None
    format: str = "json"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("precision", "depth", "steps", "grid"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise UsageError(f"--{name} must be positive, got {v}")

    def resolved(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("extra", "out")}
        d.update(self.extra)
        return d


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, mpmath.mpf)):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class Result:
    payload: dict
    rows: list[dict] = field(default_factory=list)
    ok: bool = True


# Argument resolution

def _need(cfg, name):
    v = getattr(cfg, name)
    if v is None:
        raise UsageError(f"--{name.replace('_', '-')} is required for {cfg.command}")
    return v


def _map(cfg):
    text = _need(cfg, "map")
    try:
        return parse_map(text)
    except (ValueError, CircleTrailsError) as exc:
        raise UsageError(f"bad --map {text!r}: {exc}") from None


def _rho(cfg):
    text = _need(cfg, "cf")
    try:
        return parse_cf(text)
    except (ValueError, CircleTrailsError) as exc:
        raise UsageError(f"bad --cf {text!r}: {exc}") from None


def _ints(text, name):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --{name} {text!r}") from None


def _interval(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"bad --interval {text!r}") from None
    return lo, hi


def _x(cfg, f=None):
    if cfg.x is not None:
        return cfg.x
    return dynamics.base_point(f) if f is not None else 0.0


# Subcommands

def cmd_cf(cfg):
    rho = _rho(cfg)
    n = cfg.depth or 10
    prec = cfg.precision or 128
    cv = convergents(rho, n)
    rows = []
    for m in range(n + 1):
        row = {"n": m, "p_n": cv[m][0], "q_n": cv[m][1], "mu_I_n": float(mu_In(rho, m, prec).value)}
        try:
            row["a_n"] = rho.digit(m)
        except DigitsExhausted:
            row["a_n"] = None
        rows.append(row)
    v = cf_value(rho, prec=prec)
    even = is_even_type(rho)
    payload = {"rho": str(rho), "value": mpmath.nstr(v.value, 30), "error": float(v.error),
               "even_type": even.__dict__, "rows": rows}
    return Result(payload, rows)


def cmd_skew_orbit(cfg):
    rho = _rho(cfg)
    alpha = float(cfg.extra.get("alpha") if cfg.extra.get("alpha") is not None else 0.5)
    n = cfg.depth or 20
    orb = skew.skew_orbit(skew.SkewPoint(rho, alpha), n, prec=cfg.precision)
    rows = []
    with mpmath.workprec(orb.prec):
        for i, p in enumerate(orb.points):
            r, _, _ = skew.rho_parts(p.rho, orb.prec, p.rho_error)
            rows.append({"level": i, "rho": float(r), "alpha": float(p.alpha),
                         "alpha_error": float(p.alpha_error)})
    payload = {"truncated": orb.truncated, "reason": orb.reason, "prec": orb.prec, "rows": rows}
    return Result(payload, rows)


def cmd_density(cfg):
    rep = skew.random_orbit_density(cfg.steps or 10 ** 5, cfg.grid or 20, cfg.seed)
    rows = [{"rho_bin": i, "alpha_bin": j, "count": int(c)}
            for (i, j), c in np.ndenumerate(rep.counts)]
    payload = {"coverage": rep.coverage, "steps": rep.steps, "mass_minus": rep.mass_minus,
               "mass_from_U": rep.mass_from_U, "seed_mode": rep.seed_mode, "counts": rep.counts}
    return Result(payload, rows)


def cmd_tiles(cfg):
    fit = skew.tile_decay_fit(range(2, (cfg.depth or 10) + 1), words=cfg.steps or 40, seed=cfg.seed)
    d = fit.to_dict()
    return Result(d, d["rows"])


def cmd_distortion(cfg):
    depths = tuple(_ints(cfg.extra.get("levels") or "4,8,12", "levels"))
    rep = skew.distortion_experiment(cfg.steps or 500, depths, seed=cfg.seed)
    rows = [{"depth": d, "max_ratio": rep.max_ratio[d], "max_ratio_no_final_u": rep.max_ratio_no_final_u[d]}
            for d in rep.depths]
    return Result(rep.to_dict(), rows)


def cmd_pullback(cfg):
    theta = _rho(cfg)
    B = _interval(cfg.extra.get("interval") or "-1,0")
    prec = cfg.precision or 128
    seq = skew.pullback_sequence(theta, B, cfg.depth or 40, prec)
    rows = [{"step": j, "left": float(l), "right": float(r), "total": float(l + r)}
            for j, (l, r) in enumerate(seq)]
    lo, hi = skew.pullback_bounds(theta, B, prec)
    payload = {"limit": mpmath.nstr(skew.pullback_limit(theta, B, prec), 20), "bounds": [float(lo), float(hi)],
               "rows": rows}
    return Result(payload, rows)


def cmd_trail(cfg):
    f = _map(cfg)
    tr = trails.trail_direct(f, _x(cfg, f), cfg.y, cfg.depth or 10, prec=cfg.precision)
    d = tr.to_dict()
    return Result(d, d["levels"])


def cmd_trail_check(cfg):
    f = _map(cfg)
    rep = trails.trail_equivalence_report(f, _x(cfg, f), cfg.y, cfg.depth or 10, prec=cfg.precision)
    d = rep.to_dict()
    d["verdict"] = "PASS" if rep.passed else "FAIL"
    return Result(d, d["rows"], rep.passed)


def cmd_partition(cfg):
    f = _map(cfg)
    P = dynamics.dynamical_partition(f, _x(cfg, f), cfg.depth or 5)
    d = P.to_dict()
    d["endpoint_mismatch"] = P.endpoint_mismatch()
    return Result(d, d["atoms"])


def cmd_real_bounds(cfg):
    f = _map(cfg)
    rows = dynamics.real_bounds_report(f, _x(cfg, f), range(cfg.depth or 8))
    return Result({"rows": rows}, rows)


def cmd_signature(cfg):
    f = _map(cfg)
    tol = float(cfg.extra.get("tol") or 1e-9)
    sig = dynamics.signature(f, tol, cfg.steps or 10 ** 6)
    d = dict(sig.__dict__)
    return Result(d, [d])


def cmd_tune(cfg):
    text = _need(cfg, "map")
    if text.count("@") != 1:
        raise UsageError("tune needs a --map template with one '@' marking the parameter")
    target = cfg.extra.get("target")
    if target is None:
        target = _rho(cfg)
    lo, hi = _interval(cfg.extra.get("interval") or "0,1")
    tol = float(cfg.extra.get("tol") or 1e-9)

    def family(p):
        return parse_map(text.replace("@", repr(p)))

    try:
        family(0.5 * (lo + hi))
    except ValueError as exc:
        raise UsageError(f"bad --map {text!r}: {exc}") from None
    res = dynamics.tune_parameter(family, target, tol, lo, hi, budget=cfg.steps or dynamics.DEFAULT_BUDGET)
    est = res.rho
    d = {"param": res.param, "steps": res.steps, "map": text.replace("@", repr(res.param)),
         "rho": None if est is None else est.value, "rho_error": None if est is None else est.error}
    return Result(d, [d])


def cmd_yoccoz(cfg):
    f = _map(cfg)
    levels = _ints(cfg.extra.get("levels") or "0,2,4", "levels")
    rho = parse_cf(cfg.cf) if cfg.cf else None
    chk = qs_probe.yoccoz_check(f, _x(cfg, f), levels, rho)
    d = chk.to_dict()
    rows = [{"level": p["level"], "k": k + 1, "length": ln}
            for p in d["profiles"] for k, ln in enumerate(p["lengths"])]
    return Result(d, rows)


def cmd_qs_scan(cfg):
    rho = _rho(cfg) if cfg.cf else qs_probe.alternating_rho(10)
    depth = cfg.depth or 8
    levels = _ints(cfg.extra.get("levels") or ",".join(str(n) for n in range(depth - 3)), "levels")
    sc = qs_probe.scenario_b(rho, depth)
    scan = qs_probe.qs_blowup_scan(sc.f, sc.x, sc.g, sc.z, levels, w=sc.w, rho=rho)
    d = scan.to_dict()
    d["scenario"] = sc.describe()
    return Result(d, [{k: r[k] for k in qs_probe.BlowupScan.CSV_FIELDS} for r in d["rows"]])


def cmd_even_trail(cfg):
    rho = _rho(cfg)
    n = cfg.depth or 20
    prec = cfg.precision or 256
    orb = skew.skew_orbit(skew.SkewPoint(rho, mpmath.mpf(1) / 2), n, prec=prec)
    rows = []
    for i, p in enumerate(orb.points):
        closed = skew.even_trail_closed_form(rho, i, prec)
        rows.append({"level": i, "alpha": float(p.alpha), "closed_form": float(closed),
                     "deviation": float(abs(p.alpha - closed))})
    payload = {"rho": str(rho), "truncated": orb.truncated, "rows": rows,
               "max_deviation": max(r["deviation"] for r in rows)}
    return Result(payload, rows)


HANDLERS = {
    "cf": cmd_cf, "skew-orbit": cmd_skew_orbit, "density": cmd_density, "tiles": cmd_tiles,
    "distortion": cmd_distortion, "pullback": cmd_pullback, "trail": cmd_trail,
    "trail-check": cmd_trail_check, "partition": cmd_partition, "real-bounds": cmd_real_bounds,
    "signature": cmd_signature, "tune": cmd_tune, "yoccoz": cmd_yoccoz, "qs-scan": cmd_qs_scan,
    "even-trail": cmd_even_trail,
}

EXTRA = ("alpha", "interval", "levels", "target", "tol")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--map", help="rot:THETA | arnold:THETA,K | bump:RHO0,A,DELTA,T,S | square:SPEC")
    common.add_argument("--cf", help="continued fraction, e.g. '[(1)]', '[2;(2)]', 'rule:4n-2', 'golden'")
    common.add_argument("--precision", type=int, help="working precision in bits")
    common.add_argument("--depth", type=int, help="renormalization depth / number of levels")
    common.add_argument("--steps", type=int, help="iteration or sample budget")
    common.add_argument("--grid", type=int, help="histogram grid size")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--x", type=float, help="base point")
    common.add_argument("--y", type=float, help="marked point")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--alpha", type=float, help="fiber coordinate for skew-orbit")
    common.add_argument("--interval", help="LO,HI: pullback set or tuning bracket")
    common.add_argument("--levels", help="comma-separated levels or depths")
    common.add_argument("--target", type=float, help="target rotation number for tune")
    common.add_argument("--tol", type=float, help="rotation number tolerance")
    p = argparse.ArgumentParser(prog="circletrails", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HANDLERS[name].__name__[4:].replace("_", " "))
    return p


def render(cfg: ExperimentConfig, res: Result) -> str:
    config = _jsonable(cfg.resolved())
    if cfg.format == "json":
        doc = {"config": config, "ok": res.ok, "result": _jsonable(res.payload)}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    rows = [_jsonable(r) for r in res.rows]
    if rows:
        fields = list(rows[0])
        w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: json.dumps(v) if isinstance(v, (dict, list)) else v for k, v in r.items()})
    return buf.getvalue()


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    ns = vars(args)
    extra = {k: ns.pop(k) for k in EXTRA}
    try:
        cfg = ExperimentConfig(**ns, extra={k: v for k, v in extra.items() if v is not None})
        res = HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"circletrails: usage error: {exc}", file=sys.stderr)
        return 2
    except (CircleTrailsError, ArithmeticError, ValueError) as exc:
        print(f"circletrails: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = render(cfg, res)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if not res.ok:
        print(f"circletrails: {cfg.command} check failed", file=sys.stderr)
        return 1
    return 0


def main() -> int:
    return run(sys.argv[1:])
