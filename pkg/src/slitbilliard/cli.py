"""Batch driver: ``slitbilliard <command> --config FILE [options]``.

Config files are INI text::

    [geometry]
    lambda = 0.6
    x0 = 0.1

    [f_L]
    constant = 0.5
    cos = 1:0.3

    [f_R]
    constant = 0.5
    sin = 1:0.3

    [experiment]
    command = rate
    seed = 0

    [rate]
    orbits = 1000

A section named after a command holds that command's parameters; anything
left out takes the default listed in ``PARAMS``.  Outputs go to ``--out``:
CSV tables whose ``#`` header lines carry the config hash, the tool version
and the tolerances, plus ``report.json``.

Exit codes: 0 success, 1 failed acceptance check, 2 usage or configuration
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (ConfigError, Grazing, InsufficientSamples, NoConvergence, NotHyperbolic,
                     NotTrapping, QuadratureFailure, SingularHit, SlitBilliardError,
                     StencilCrossesSingularity, WrongChamberSign)
from .exact_billiard import (DEFAULT_TOL, Chamber, CollisionRecord, Status, Tolerances,
                             config_hash, header_lines, monodromy, simulate, wall_value)
from .wall_motion import PERIOD, SlitConfig, TrigSeries, format_coeffs, parse_coeffs

CONFIG_DIR = Path(__file__).resolve().parent / "configs"

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (SingularHit, Grazing, NoConvergence, QuadratureFailure, StencilCrossesSingularity)
USAGE_ERRORS = (ConfigError, InsufficientSamples, NotTrapping, NotHyperbolic, WrongChamberSign)


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in str(text).replace(";", ",").split(",") if x.strip())


def _chamber(text: str) -> str:
    t = str(text).strip().lower()
    if t not in ("upper", "lower"):
        raise ValueError("expected 'upper' or 'lower'")
    return t


def _c_star(text: str):
    t = str(text).strip().lower()
    return "fitted" if t == "fitted" else float(t)


def _variant(text: str) -> str:
    t = str(text).strip().lower()
    if t not in ("adjudicated", "literal"):
        raise ValueError("expected 'adjudicated' or 'literal'")
    return t


@dataclass(frozen=True)
class Param:
    kind: object           # parser from text
    default: object
    low: float | None = None
    high: float | None = None


# (kind, default, inclusive lower bound, inclusive upper bound)
PARAMS = {
    "simulate": {"t0": Param(float, 0.0), "v0": Param(float, 1000.0),
                 "chamber": Param(_chamber, "upper"), "collisions": Param(int, 1000, 1)},
    "atlas": {"lambda_n": Param(int, 200, 1), "x0_n": Param(int, 200, 1)},
    "rate": {"orbits": Param(int, 1000, 2), "v_min": Param(float, 1e3, 100.0),
             "v_max": Param(float, 1e3 + 1.0, 100.0), "periods": Param(int, 30, 5),
             "contraction_periods": Param(int, 10, 1)},
    "nf-check": {"samples_per_decade": Param(int, 500), "action_min": Param(float, 1e2, 10.0),
                 "action_max": Param(float, 1e4, 10.0), "levels": Param(int, 9, 2),
                 "variant": Param(_variant, "adjudicated")},
    "escape": {"samples": Param(int, 100_000, 1), "periods": Param(int, 20, 1),
               "box": Param(int, 0), "lines": Param(int, 10_000, 1),
               "fragmentation_periods": Param(int, 10, 0),
               "epsilons": Param(_floats, (0.005, 0.01, 0.02, 0.05, 0.1))},
    "waiting-time": {"epsilons": Param(_floats, (0.2, 0.1, 0.05)),
                     "c_star": Param(_c_star, "fitted"), "fragmentation_periods": Param(int, 10, 0),
                     "samples": Param(int, 100_000, 1)},
    "periodic-orbit": {"t0": Param(float, 0.25), "v0": Param(float, 2.04),
                       "chamber": Param(_chamber, "upper"), "period": Param(int, 4, 1),
                       "h": Param(float, 1e-6, 1e-12, 1e-2)},
    "constants": {},
}
STOCHASTIC = {"rate", "nf-check", "escape", "waiting-time"}
COMMANDS = tuple(PARAMS) + ("acceptance",)


@dataclass
class ExperimentSpec:
    command: str
    seed: int | None = None
    params: dict = field(default_factory=dict)      # values set in the file, per command
    source: dict = field(default_factory=dict)      # (section, key) -> line number

    def resolved(self, command: str | None = None) -> dict:
        """Parameters of ``command`` with defaults filled in."""
        command = command or self.command
        out = {k: p.default for k, p in PARAMS[command].items()}
        out.update(self.params.get(command, {}))
        return out


# ---------------------------------------------------------------- parsing

def _line_numbers(text: str) -> dict:
    """``(section, key) -> line`` for every assignment in an INI text."""
    out, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out[(section, None)] = no
        elif section is not None:
            for sep in ("=", ":"):
                if sep in line:
                    out[(section, line.split(sep, 1)[0].strip().lower())] = no
                    break
    return out


def _where(path, lines, section, key=None) -> str:
    no = lines.get((section, key), lines.get((section, None)))
    loc = f"{path}:{no}" if no else str(path)
    return f"{loc}: [{section}]" + (f" {key}" if key else "")


def _convert(param: Param, text: str, where: str):
    try:
        val = param.kind(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} ({exc})") from None
    for v in (val if isinstance(val, tuple) else (val,)):
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            if not math.isfinite(v):
                raise ConfigError(f"{where}: value must be finite")
            if param.low is not None and v < param.low:
                raise ConfigError(f"{where}: {v} is below the minimum {param.low}")
            if param.high is not None and v > param.high:
                raise ConfigError(f"{where}: {v} is above the maximum {param.high}")
    return val


def _series(cp, path, lines, name) -> TrigSeries:
    if not cp.has_section(name):
        raise ConfigError(f"{path}: missing section [{name}]")
    sec = cp[name]
    for key in sec:
        if key not in ("constant", "cos", "sin"):
            raise ConfigError(f"{_where(path, lines, name, key)}: unknown key")
    if "constant" not in sec:
        raise ConfigError(f"{_where(path, lines, name)}: missing key 'constant'")
    try:
        const = float(sec["constant"])
    except ValueError:
        raise ConfigError(f"{_where(path, lines, name, 'constant')}: not a number") from None
    coeffs = {}
    for key in ("cos", "sin"):
        try:
            coeffs[key] = parse_coeffs(sec.get(key, ""))
        except ConfigError as exc:
            raise ConfigError(f"{_where(path, lines, name, key)}: {exc}") from None
    try:
        return TrigSeries(const, coeffs["cos"], coeffs["sin"])
    except ConfigError as exc:
        raise ConfigError(f"{_where(path, lines, name)}: {exc}") from None


def parse_text(text: str, path="<config>") -> tuple[SlitConfig, ExperimentSpec]:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    lines = _line_numbers(text)
    known = {"geometry", "f_L", "f_R", "experiment"} | set(PARAMS)
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"{_where(path, lines, sec)}: unknown section")

    if not cp.has_section("geometry"):
        raise ConfigError(f"{path}: missing section [geometry]")
    geo = {}
    for key in cp["geometry"]:
        if key not in ("lambda", "x0"):
            raise ConfigError(f"{_where(path, lines, 'geometry', key)}: unknown key")
    for key in ("lambda", "x0"):
        if key not in cp["geometry"]:
            raise ConfigError(f"{_where(path, lines, 'geometry')}: missing key {key!r}")
        geo[key] = _convert(Param(float, None), cp["geometry"][key],
                            _where(path, lines, "geometry", key))
    f_L = _series(cp, path, lines, "f_L")
    f_R = _series(cp, path, lines, "f_R")
    try:
        cfg = SlitConfig(f_L, f_R, geo["lambda"], geo["x0"])
    except ConfigError as exc:
        raise ConfigError(f"{_where(path, lines, 'geometry')}: {exc}") from None

    command, seed = "simulate", None
    if cp.has_section("experiment"):
        ex = cp["experiment"]
        for key in ex:
            if key not in ("command", "seed"):
                raise ConfigError(f"{_where(path, lines, 'experiment', key)}: unknown key")
        if "command" in ex:
            command = ex["command"].strip()
            if command not in PARAMS:
                raise ConfigError(f"{_where(path, lines, 'experiment', 'command')}: "
                                  f"unknown command {command!r}")
        if "seed" in ex:
            seed = _convert(Param(int, None, 0), ex["seed"], _where(path, lines, "experiment", "seed"))
    params = {}
    for cmd, schema in PARAMS.items():
        if not cp.has_section(cmd):
            continue
        vals = {}
        for key, text in cp[cmd].items():
            where = _where(path, lines, cmd, key)
            if key not in schema:
                raise ConfigError(f"{where}: unknown parameter for {cmd}")
            vals[key] = _convert(schema[key], text, where)
        params[cmd] = vals
    return cfg, ExperimentSpec(command, seed, params, lines)


def parse_config(path) -> tuple[SlitConfig, ExperimentSpec]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text, path)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize(cfg: SlitConfig, spec: ExperimentSpec) -> str:
    """INI text that parses back to ``(cfg, spec)``."""
    out = ["[geometry]", f"lambda = {cfg.lam!r}", f"x0 = {cfg.x0!r}", ""]
    for name, s in (("f_L", cfg.f_L), ("f_R", cfg.f_R)):
        out += [f"[{name}]", f"constant = {s.constant!r}"]
        if s.cos_coeffs:
            out.append(f"cos = {format_coeffs(s.cos_coeffs)}")
        if s.sin_coeffs:
            out.append(f"sin = {format_coeffs(s.sin_coeffs)}")
        out.append("")
    out += ["[experiment]", f"command = {spec.command}"]
    if spec.seed is not None:
        out.append(f"seed = {spec.seed}")
    out.append("")
    for cmd in PARAMS:
        vals = spec.params.get(cmd)
        if vals:
            out.append(f"[{cmd}]")
            out += [f"{k} = {_fmt(v)}" for k, v in vals.items()]
            out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------- output

@dataclass
class Output:
    directory: Path
    cfg: SlitConfig
    command: str
    seed: int | None
    tolerances: Tolerances
    timestamp: bool = False
    files: list = field(default_factory=list)

    def header(self) -> list[str]:
        lines = header_lines(self.cfg, self.tolerances.as_dict())
        lines.append(f"# command={self.command} seed={self.seed}")
        if self.timestamp:
            lines.append(f"# created={datetime.now(timezone.utc).isoformat(timespec='seconds')}")
        return lines

    def csv(self, name: str, columns: str, rows) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        p = self.directory / name
        with open(p, "w", newline="") as fh:
            fh.write("\n".join(self.header()) + "\n")
            fh.write(columns + "\n")
            for r in rows:
                fh.write(r + "\n")
        self.files.append(p.name)
        return p

    def report(self, payload: dict) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        p = self.directory / "report.json"
        doc = {"command": self.command, "config_hash": config_hash(self.cfg),
               "version": __version__, "seed": self.seed,
               "tolerances": self.tolerances.as_dict(), "files": sorted(self.files),
               "results": payload}
        if self.timestamp:
            doc["created"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        p.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
        return p


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


# ---------------------------------------------------------------- commands

def _wall_record(cfg, t0, v0, chamber) -> CollisionRecord:
    ch = Chamber.UPPER if chamber == "upper" else Chamber.LOWER
    rec = CollisionRecord(t=float(t0), v=ch.sign * abs(float(v0)), chamber=ch)
    return replace(rec, y=float(wall_value(cfg, rec)[0]))


def cmd_simulate(cfg, p, seed, out: Output, threads) -> dict:
    rec = _wall_record(cfg, p["t0"], p["v0"], p["chamber"])
    traj = simulate(cfg, rec, p["collisions"], out.tolerances)
    out.csv("trajectory.csv", "t,v,chamber,kind,y",
            (f"{r.t!r},{r.v!r},{r.chamber.value},{r.kind.value},{r.y!r}" for r in traj.records))
    last = traj.records[-1] if traj.records else rec
    print(f"simulate: {len(traj)} collisions, status {traj.status.value}, final |v| {abs(last.v):.6g}")
    if traj.status is Status.SINGULAR_HIT:
        raise SingularHit(f"stopped after {len(traj)} collisions at a jump time")
    if traj.status is Status.GRAZING:
        raise Grazing(f"stopped after {len(traj)} collisions on a tangential contact")
    return {"collisions": len(traj), "status": traj.status.value, "final_t": last.t,
            "final_v": last.v}


def cmd_atlas(cfg, p, seed, out: Output, threads) -> dict:
    from .trapping_atlas import ATLAS_COLUMNS, scan

    lg = (np.arange(p["lambda_n"]) + 0.5) / p["lambda_n"]
    xg = (np.arange(p["x0_n"]) + 0.5) / p["x0_n"]
    rows = scan(cfg.f_L, cfg.f_R, lg, xg, threads=threads)
    out.csv("atlas.csv", ATLAS_COLUMNS, (r.csv() for r in rows))
    counts = {}
    for r in rows:
        counts[r.kind.value] = counts.get(r.kind.value, 0) + 1
    hyper = sum(r.hyperbolic for r in rows)
    print(f"atlas: {len(rows)} nodes, {counts}, {hyper} hyperbolic")
    return {"nodes": len(rows), "kinds": counts, "hyperbolic": hyper}


def cmd_rate(cfg, p, seed, out: Output, threads) -> dict:
    from .normal_forms import compute_constants
    from .trapping_atlas import Ensemble, measure_contraction, measure_rate

    if p["v_max"] < p["v_min"]:
        raise ConfigError("rate: v_max must be >= v_min")
    const = compute_constants(cfg)
    ens = Ensemble(p["orbits"], (p["v_min"], p["v_max"]), seed)
    rate = measure_rate(cfg, ens, p["periods"], const)
    con = measure_contraction(cfg, ens, p["contraction_periods"], const)
    rows = rate.csv_rows()
    out.csv("rate.csv", rows[0], rows[1:])
    print(f"rate: slope {rate.slope:.6f} +/- {rate.stderr:.1e}, predicted log {rate.predicted:.6f} = "
          f"{math.log(rate.predicted):.6f}; contraction {con.mean_log_change:.5f} vs "
          f"{math.log(con.predicted):.5f}")
    return {"slope": rate.slope, "stderr": rate.stderr, "ci95": rate.ci,
            "predicted_factor": rate.predicted, "predicted_log": math.log(rate.predicted),
            "relative_error": rate.relative_error, "dropped": rate.dropped,
            "contraction": con.mean_log_change, "contraction_stderr": con.stderr,
            "contraction_predicted_log": math.log(con.predicted),
            "contraction_relative_error": con.relative_error, "resident_periods": con.samples}


def cmd_nf_check(cfg, p, seed, out: Output, threads) -> dict:
    from .normal_forms import (ADJUDICATED, LITERAL, compute_constants, error_scaling,
                               reachable_branches)

    if p["samples_per_decade"] < 1:
        raise InsufficientSamples("nf-check needs samples_per_decade >= 1")
    if p["action_max"] <= p["action_min"]:
        raise ConfigError("nf-check: action_max must exceed action_min")
    n = p["levels"]
    levels = np.geomspace(p["action_min"], p["action_max"], n)
    variant = ADJUDICATED if p["variant"] == "adjudicated" else LITERAL
    const = compute_constants(cfg)
    rows, summary = [], {}
    for case in reachable_branches(const):
        r = error_scaling(cfg, case, levels, p["samples_per_decade"], seed=seed, variant=variant,
                          constants=const)
        key = f"{case.branch.value}/{case.leg.value}"
        summary[key] = {"slope_G": r.slope_G, "slope_GH": r.slope_GH,
                        "slope_coord": r.slope_coord, "excluded": r.excluded,
                        "mismatched": r.mismatched}
        for row in r.rows:
            rows.append(f"{case.branch.value},{case.leg.value},{row.action!r},{row.median_error_G!r},"
                        f"{row.median_error_GH!r},{row.median_coord_error!r},{row.samples},"
                        f"{row.excluded},{row.mismatched}")
        print(f"nf-check {key}: G slope {r.slope_G:+.3f}, G+H slope {r.slope_GH:+.3f}")
    out.csv("nf_scaling.csv", "branch,leg,action,median_error_G,median_error_GH,"
            "median_coord_error,samples,excluded,mismatched", rows)
    return {"variant": p["variant"], "branches": summary}


def cmd_escape(cfg, p, seed, out: Output, threads) -> dict:
    from .affine_escape import (build_affine, fitted_growth_constant, good_line_statistics,
                                line_fragmentation, survival_curve)

    system = build_affine(cfg)
    system.require_hyperbolic()
    surv = survival_curve(system, p["box"], p["samples"], p["periods"], seed)
    out.csv("survival.csv", "period,surviving", (f"{n},{s!r}" for n, s in enumerate(surv)))
    good = good_line_statistics(system, p["lines"], p["box"], seed)
    stats = line_fragmentation(system, None, p["fragmentation_periods"], p["epsilons"], seed=seed)
    frag = []
    for s in stats:
        c, r2 = s.fitted_constant()
        frag.append(f"{s.n},{s.piece_count},{s.surviving!r},{c!r},{r2!r},"
                    + ",".join(repr(m) for m in s.measures))
    eps_cols = ",".join(f"measure_eps_{e!r}" for e in stats[0].epsilons)
    out.csv("fragmentation.csv", f"n,pieces,surviving,fitted_slope,r2,{eps_cols}", frag)
    c_star = fitted_growth_constant(stats)
    print(f"escape: {system.chamber.value} chamber, Lambda_u {system.lambda_u:.6g}, "
          f"survival after {p['periods']} periods {surv[-1]:.3g}; good lines {good.good}/{good.lines}, "
          f"max surviving {good.max_surviving:.4f} (D {good.bound:.4f}); fitted C* {c_star:.4g}")
    return {"chamber": system.chamber.value, "trace": system.trace, "det": system.det,
            "lambda_u": system.lambda_u, "unstable_height": system.unstable_height,
            "ratio": system.ratio, "final_survival": float(surv[-1]), "good_lines": good.good,
            "max_surviving": good.max_surviving, "mean_surviving": good.mean_surviving,
            "D": good.bound, "c_star_fitted": c_star}


def cmd_waiting_time(cfg, p, seed, out: Output, threads) -> dict:
    from .affine_escape import (WAITING_COLUMNS, build_affine, closed_form_c_star,
                                fitted_growth_constant, line_fragmentation, survival_curve,
                                waiting_time)

    for e in p["epsilons"]:
        if not 0.0 < e < 1.0:
            raise ConfigError(f"waiting-time: epsilon {e} must lie in (0, 1)")
    system = build_affine(cfg)
    system.require_hyperbolic()
    closed = closed_form_c_star(system, system.unstable_height)
    if p["c_star"] == "fitted":
        stats = line_fragmentation(system, None, p["fragmentation_periods"],
                                   (0.005, 0.01, 0.02, 0.05, 0.1), seed=seed)
        c_star = fitted_growth_constant(stats)
    else:
        c_star = float(p["c_star"])
    rows, checks = [], {}
    for e in p["epsilons"]:
        wt = waiting_time(system, e, c_star)
        rows.append(f"{wt.csv()},{wt.L!r}")
        s = float(survival_curve(system, 0, p["samples"], wt.N, seed)[wt.N])
        checks[repr(e)] = {"N": wt.N, "T": wt.T, "k": wt.k, "l": wt.l, "survival": s}
        print(f"waiting-time: eps {e}: k {wt.k}, l {wt.l}, N {wt.N}, T {wt.T}, survival {s:.3g}")
    out.csv("waiting_time.csv", WAITING_COLUMNS + ",L", rows)
    return {"c_star": c_star, "c_star_closed_form": closed, "lambda_u": system.lambda_u,
            "epsilons": checks}


def cmd_periodic_orbit(cfg, p, seed, out: Output, threads) -> dict:
    rec = _wall_record(cfg, p["t0"], p["v0"], p["chamber"])
    n = p["period"]
    traj = simulate(cfg, rec, n, out.tolerances)
    if traj.status is not Status.RUNNING or len(traj) < n:
        raise SingularHit(f"orbit stopped with status {traj.status.value}")
    last = traj.records[-1]
    dt = (last.t - rec.t) % PERIOD
    closure = max(min(dt, PERIOD - dt), abs(last.v - rec.v))
    J1 = monodromy(cfg, rec, 1, p["h"], out.tolerances)
    Jn = monodromy(cfg, rec, n, p["h"], out.tolerances)
    tr1, trn = float(np.trace(J1)), float(np.trace(Jn))
    out.csv("orbit.csv", "index,t,v,chamber",
            [f"0,{rec.t!r},{rec.v!r},{rec.chamber.value}"]
            + [f"{i},{r.t!r},{r.v!r},{r.chamber.value}" for i, r in enumerate(traj.records, 1)])
    kind = "elliptic" if abs(trn) < 2 else "hyperbolic" if abs(trn) > 2 else "parabolic"
    print(f"periodic-orbit: period {n} closure residual {closure:.3e}, one-step trace {tr1:.6f}, "
          f"period-{n} trace {trn:.6f} ({kind})")
    return {"closure_residual": closure, "trace_one_step": tr1, "trace_period": trn,
            "monodromy_one_step": J1, "monodromy_period": Jn, "stability": kind}


def cmd_constants(cfg, p, seed, out: Output, threads) -> dict:
    from .normal_forms import compute_constants
    from .trapping_atlas import classify

    const = compute_constants(cfg)
    v = classify(cfg)
    d = const.as_dict()
    print(f"constants: {v.kind.value}, Tr^U {const.tr_U:.10g}, Tr^L {const.tr_L:.10g}")
    return {"kind": v.kind.value, "hyperbolic": v.hyperbolic, "constants": d}


HANDLERS = {"simulate": cmd_simulate, "atlas": cmd_atlas, "rate": cmd_rate,
            "nf-check": cmd_nf_check, "escape": cmd_escape, "waiting-time": cmd_waiting_time,
            "periodic-orbit": cmd_periodic_orbit, "constants": cmd_constants}


# ---------------------------------------------------------------- driver

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slitbilliard", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="experiment to run (default: [experiment] command of the config)")
    ap.add_argument("--config", help="INI config file (default: the shipped example)")
    ap.add_argument("--seed", type=int, help="seed override; required for stochastic commands")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for grid scans")
    ap.add_argument("--tolerance", action="append", default=[], metavar="KEY=VALUE",
                    help="solver tolerance override (grazing, singular, max_events)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a parameter of the chosen command")
    ap.add_argument("--timestamp", action="store_true", help="add creation time to headers")
    ap.add_argument("--only", default="", help="acceptance: comma-separated criteria (numbers or names)")
    return ap


def _tolerances(items) -> Tolerances:
    tol = DEFAULT_TOL
    for item in items:
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in tol.as_dict():
            raise ConfigError(f"--tolerance {item!r}: expected one of grazing=, singular=, max_events=")
        try:
            num = int(val) if key == "max_events" else float(val)
        except ValueError:
            raise ConfigError(f"--tolerance {item!r}: not a number") from None
        if not num > 0:
            raise ConfigError(f"--tolerance {item!r}: must be positive")
        tol = replace(tol, **{key: num})
    return tol


def run(args) -> int:
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    if args.command == "acceptance":
        return _run_acceptance(args)
    path = args.config or CONFIG_DIR / "example.ini"
    cfg, spec = parse_config(path)
    command = args.command or spec.command
    params = spec.resolved(command)
    for item in args.set:
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in PARAMS[command]:
            raise ConfigError(f"--set {item!r}: {command} has parameters {sorted(PARAMS[command])}")
        params[key] = _convert(PARAMS[command][key], val, f"--set {key}")
    seed = args.seed if args.seed is not None else spec.seed
    if command in STOCHASTIC and seed is None:
        raise ConfigError(f"{command} is stochastic: give --seed or [experiment] seed")
    tol = _tolerances(args.tolerance)
    if args.tolerance and command not in ("simulate", "periodic-orbit"):
        raise ConfigError("tolerance overrides apply to simulate and periodic-orbit only")
    out = Output(Path(args.out), cfg, command, seed, tol, args.timestamp)
    result = HANDLERS[command](cfg, params, seed, out, args.threads)
    result["parameters"] = params
    out.report(result)
    return EXIT_OK


def _run_acceptance(args) -> int:
    from . import acceptance

    selection = [s.strip() for s in args.only.split(",") if s.strip()]
    try:
        numbers = [acceptance.lookup(s) for s in selection]
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    seed = 0 if args.seed is None else args.seed
    results = acceptance.run(numbers, seed, echo=lambda line: print(line, flush=True))
    passed = sum(r.passed for r in results)
    print(f"acceptance: {passed}/{len(results)} passed")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"version": __version__, "seed": seed, "passed": passed, "total": len(results),
           "criteria": [r.as_dict() for r in results]}
    (out / "acceptance.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return EXIT_OK if passed == len(results) else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return run(args)
    except USAGE_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SlitBilliardError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
