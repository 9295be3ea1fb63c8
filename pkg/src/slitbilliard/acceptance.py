"""Acceptance suite: ten named checks, each returning a pass/fail verdict.

Every check is deterministic for a given seed.  ``run`` evaluates a
selection and is shared by the ``acceptance`` CLI command and the test
suite.
"""

from __future__ import annotations

import math
import tempfile
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .action_angle import invariant_drift, loglog_slope
from .affine_escape import (build_affine, fitted_growth_constant, good_line_statistics,
                            line_fragmentation, survival_curve, waiting_time)
from .errors import StencilCrossesSingularity
from .exact_billiard import (Chamber, CollisionRecord, monodromy, relation_residuals, simulate,
                             wall_value)
from .normal_forms import compute_constants, error_scaling, reachable_branches
from .trapping_atlas import (Ensemble, TrappingKind, measure_contraction, measure_rate,
                             oscillation_check, scan)
from .wall_motion import elliptic_config, example_config

LOWER_NODE = (0.6, 0.1)
UPPER_NODE = (0.5, 0.4)
ESCAPE_NODE = (0.6, 0.1)


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"

    def as_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "detail": self.detail, "metrics": self.metrics, "seconds": self.seconds}


# ---------------------------------------------------------------- 1

def exact_map(seed: int = 0, collisions: int = 10_000, jacobian_every: int = 10):
    """Collision relations and the area element on random high-energy collisions.

    Starts sit on the wall just before a jump time (both chambers, both jump
    times, an upper- and a lower-trapping node), so every relation type is
    hit.  The raw ``(t, v)`` Jacobian has determinant
    ``(v0 - f'0)/(v1 - f'1)``; the preserved element is ``|v - f'| dt dv``,
    so the determinant is checked after that weighting.
    """
    rng = np.random.default_rng(seed)
    cfgs = [example_config(*LOWER_NODE), example_config(*UPPER_NODE)]
    per_start = 2
    counts = Counter()
    worst_t = worst_v = worst_det = 0.0
    dets = skipped = 0
    k = 0
    while sum(counts.values()) < collisions:
        cfg = cfgs[k % 2]
        ch = Chamber.UPPER if (k // 2) % 2 == 0 else Chamber.LOWER
        ts = cfg.t1_star if (k // 4) % 2 == 0 else cfg.t2_star
        v = 10.0 ** rng.uniform(2.0, 4.0)
        rec = CollisionRecord(t=ts - rng.uniform(0.0, 1.5) / v, v=ch.sign * v, chamber=ch)
        rec = replace(rec, y=float(wall_value(cfg, rec)[0]))
        prev = rec
        for r in simulate(cfg, rec, per_start).records:
            rt, rv = relation_residuals(cfg, prev, r)
            counts[r.relation] += 1
            worst_t, worst_v = max(worst_t, abs(rt)), max(worst_v, abs(rv))
            if k % jacobian_every == 0:
                try:
                    J = monodromy(cfg, prev, 1)
                except StencilCrossesSingularity:
                    skipped += 1
                else:
                    w = (r.v - wall_value(cfg, r)[1]) / (prev.v - wall_value(cfg, prev)[1])
                    worst_det = max(worst_det, abs(np.linalg.det(J) * w - 1.0))
                    dets += 1
            prev = r
        k += 1
    types = sorted(counts)
    ok = (types == [1, 2, 3, 4, 5, 6] and worst_t < 1e-10 and worst_v < 1e-10
          and worst_det < 1e-6)
    detail = (f"{sum(counts.values())} collisions, types {dict(sorted(counts.items()))}, "
              f"max residual t {worst_t:.2e} v {worst_v:.2e}, "
              f"max |det-1| {worst_det:.2e} over {dets} Jacobians")
    return ok, detail, {"counts": {str(a): b for a, b in counts.items()}, "residual_t": worst_t,
                        "residual_v": worst_v, "det_error": worst_det, "jacobians": dets,
                        "stencil_skipped": skipped}


# ---------------------------------------------------------------- 2

def elliptic_trace(a: float) -> float:
    return 2.0 - 8.0 * a * math.pi ** 2 / (1.0 + 2.0 * a)


def elliptic_orbit(seed: int = 0):
    """Period-4 closure and monodromy traces of the symmetric orbit."""
    ok, parts, metrics = True, [], {}
    for a in (0.01, 0.02):
        cfg = elliptic_config(a)
        v0 = 2.0 + 4.0 * a
        rec = CollisionRecord(t=0.25, v=v0, chamber=Chamber.UPPER, y=float(cfg.f_L.value(0.25)))
        last = simulate(cfg, rec, 4).records[-1]
        closure = max(abs(last.t - 2.25), abs(last.v - v0))
        tr1 = float(np.trace(monodromy(cfg, rec, 1)))
        tr4 = float(np.trace(monodromy(cfg, rec, 4)))
        want = elliptic_trace(a)
        want4 = 2.0 * math.cos(4.0 * math.acos(want / 2.0))
        good = closure < 1e-9 and abs(tr1 - want) < 1e-4 and abs(tr4 - want4) < 1e-4
        ok &= good
        parts.append(f"a={a}: closure {closure:.1e}, tr {tr1:.6f} (want {want:.6f}), "
                     f"tr4 {tr4:.5f} (want {want4:.5f})")
        metrics[str(a)] = {"closure": closure, "trace": tr1, "trace4": tr4}
    return ok, "; ".join(parts), metrics


# ---------------------------------------------------------------- 3

def adiabatic(seed: int = 0):
    """Log-log slopes of the per-collision action change and angle defect."""
    cfg = example_config(*LOWER_NODE)
    levels = [1e3, 1e4, 1e5]
    ok, parts, metrics = True, [], {}
    for ch in (Chamber.UPPER, Chamber.LOWER):
        rows = invariant_drift(cfg, ch, actions=levels, seed=seed)
        x = [r.action for r in rows]
        sI = loglog_slope(x, [r.max_action_change for r in rows])
        sT = loglog_slope(x, [r.max_angle_defect for r in rows])
        ok &= -3.4 <= sI <= -2.6 and -4.5 <= sT <= -3.5
        parts.append(f"{ch.value}: dI slope {sI:+.3f}, defect slope {sT:+.3f}")
        metrics[ch.value] = {"action_slope": sI, "angle_slope": sT}
    return ok, "; ".join(parts), metrics


# ---------------------------------------------------------------- 4

def normal_form_scaling(seed: int = 0, samples_per_decade: int = 500):
    """Error slopes of G and G + H on every reachable branch at two nodes."""
    levels = [10.0 ** (2 + k / 4) for k in range(9)]
    ok, metrics = True, {}
    for node in (LOWER_NODE, UPPER_NODE):
        cfg = example_config(*node)
        const = compute_constants(cfg)
        for case in reachable_branches(const):
            r = error_scaling(cfg, case, levels, samples_per_decade, seed=seed, constants=const)
            good = abs(r.slope_G + 1.0) <= 0.3 and abs(r.slope_GH + 2.0) <= 0.4
            ok &= good
            key = f"{node}/{case.branch.value}/{case.leg.value}"
            metrics[key] = {"slope_G": r.slope_G, "slope_GH": r.slope_GH,
                            "excluded": r.excluded, "mismatched": r.mismatched}
    sG = [m["slope_G"] for m in metrics.values()]
    sGH = [m["slope_GH"] for m in metrics.values()]
    detail = (f"{len(metrics)} branch-legs, G slopes [{min(sG):+.3f}, {max(sG):+.3f}], "
              f"G+H slopes [{min(sGH):+.3f}, {max(sGH):+.3f}]")
    return ok, detail, metrics


# ---------------------------------------------------------------- 5

def trace_identities(seed: int = 0, n: int = 20):
    """Trace and determinant of the composed upper-chamber linear map on a grid."""
    grid = (np.arange(n) + 0.5) / n
    worst_tr = worst_det = 0.0
    nodes = 0
    for lam in grid:
        for x0 in grid:
            if x0 >= lam:
                continue
            const = compute_constants(example_config(float(lam), float(x0)), extended=False)
            sysu = build_affine(const, Chamber.UPPER)
            worst_tr = max(worst_tr, abs(sysu.trace - const.tr_U))
            worst_det = max(worst_det, abs(sysu.det - 1.0))
            nodes += 1
    ok = worst_tr < 1e-8 and worst_det < 1e-12
    return ok, (f"{nodes} nodes, max |trace - Tr^U| {worst_tr:.2e}, max |det - 1| {worst_det:.2e}"), \
        {"nodes": nodes, "trace_error": worst_tr, "det_error": worst_det}


# ---------------------------------------------------------------- 6

def expected_kind(lam: float, x0: float) -> TrappingKind:
    """Closed-form trapping kind of the sine/cosine example."""
    d, s = lam - x0, lam + x0
    if d > 0.25 and s < 0.75:
        return TrappingKind.LOWER
    if d < 0.25 and 0.75 < s < 1.75:
        return TrappingKind.UPPER
    return TrappingKind.NONE


def atlas_reproduction(seed: int = 0, n: int = 200, threads: int = 1):
    """Kind boundaries of a full atlas against the closed-form lines."""
    cfg = example_config()
    grid = (np.arange(n) + 0.5) / n
    rows = scan(cfg.f_L, cfg.f_R, grid, grid, threads=threads)
    cell = 1.0 / n
    far = trapping = hyper = degenerate = 0
    hyper_outside = 0
    for r in rows:
        want = expected_kind(r.lam, r.x0)
        if r.kind is TrappingKind.DEGENERATE:
            degenerate += 1
        if r.kind is not want:
            d = min(abs(r.lam - r.x0 - 0.25), abs(r.lam + r.x0 - 0.75), abs(r.lam + r.x0 - 1.75))
            if d > cell * (1 + 1e-9):
                far += 1
        trapping += r.kind.trapping
        if r.hyperbolic:
            hyper += 1
            hyper_outside += not r.kind.trapping
    ok = far == 0 and hyper > 0 and hyper_outside == 0 and hyper < trapping
    detail = (f"{len(rows)} nodes, {far} misclassified beyond one cell, {degenerate} degenerate, "
              f"{hyper} hyperbolic of {trapping} trapping")
    return ok, detail, {"nodes": len(rows), "far": far, "degenerate": degenerate,
                        "hyperbolic": hyper, "trapping": trapping}


# ---------------------------------------------------------------- 7

def growth_rates(seed: int = 0):
    """Fitted per-period growth in the trap and contraction outside it."""
    cfg = example_config(*LOWER_NODE)
    const = compute_constants(cfg)
    ens = Ensemble(1000, (1e3, 1e3 + 1.0), seed)
    rate = measure_rate(cfg, ens, 30, const)
    con = measure_contraction(cfg, ens, 10, const)
    ok = rate.relative_error <= 0.05 and con.relative_error <= 0.10
    detail = (f"slope {rate.slope:.5f} vs log {rate.predicted:.4f} = {math.log(rate.predicted):.5f} "
              f"(rel {rate.relative_error:.1e}, dropped {rate.dropped}); contraction "
              f"{con.mean_log_change:.4f} vs {math.log(con.predicted):.4f} "
              f"(rel {con.relative_error:.1e}, {con.samples} periods)")
    return ok, detail, {"slope": rate.slope, "predicted": rate.predicted,
                        "rate_rel_error": rate.relative_error, "dropped": rate.dropped,
                        "contraction": con.mean_log_change, "contraction_predicted": con.predicted,
                        "contraction_rel_error": con.relative_error, "resident": con.samples}


# ---------------------------------------------------------------- 8

def escape_statistics(seed: int = 0, samples: int = 100_000):
    """Survival at the waiting time, the good-line bound and line fragmentation."""
    system = build_affine(example_config(*ESCAPE_NODE))
    eps_list = [0.005, 0.01, 0.02, 0.05, 0.1]
    stats = line_fragmentation(system, None, 10, eps_list, seed=seed)
    fits = [s.fitted_constant() for s in stats if s.surviving > 0]
    r2 = min(f[1] for f in fits)
    c_star = fitted_growth_constant(stats)
    c_half = max(f[0] for f in fits[: len(fits) // 2 + 1])
    stable = c_half >= c_star * (1 - 1e-12)
    worst, horizons = 0.0, {}
    ok_surv = True
    for eps in (0.2, 0.1, 0.05):
        wt = waiting_time(system, eps, c_star)
        surv = [float(survival_curve(system, 0, samples, wt.N, seed + s)[wt.N]) for s in range(3)]
        ok_surv &= max(surv) < eps
        worst = max(worst, max(surv) / eps)
        horizons[str(eps)] = {"N": wt.N, "survival": surv}
    good = good_line_statistics(system, seed=seed)
    ok_good = good.good > 0 and good.max_surviving <= good.bound + 0.01
    ok = ok_surv and ok_good and r2 > 0.95 and stable
    detail = (f"N(eps) {[h['N'] for h in horizons.values()]}, max survival/eps {worst:.2e}; "
              f"good lines {good.good}, max surviving {good.max_surviving:.3f} <= D {good.bound:.3f}; "
              f"fragmentation C* {c_star:.3f}, min R^2 {r2:.5f}")
    return ok, detail, {"horizons": horizons, "good_lines": good.good,
                        "max_surviving": good.max_surviving, "D": good.bound,
                        "c_star": c_star, "min_r2": r2}


# ---------------------------------------------------------------- 9

def oscillation(seed: int = 0):
    """No rise-then-fall events in trapping configurations."""
    ok, parts, metrics = True, [], {}
    for node in (LOWER_NODE, UPPER_NODE):
        cfg = example_config(*node)
        rep = oscillation_check(cfg, Ensemble(1000, (1e3, 1e3 + 1.0), seed), 100,
                                compute_constants(cfg))
        ok &= rep.events == 0
        parts.append(f"{node}: {rep.events} events, {rep.dropped} dropped, "
                     f"max log|v| {rep.max_log_v:.1f}")
        metrics[str(node)] = {"events": rep.events, "dropped": rep.dropped,
                              "max_log_v": rep.max_log_v}
    return ok, "; ".join(parts), metrics


# ---------------------------------------------------------------- 10

def reproducibility(seed: int = 0):
    """Two CLI runs of the same specs must give byte-identical CSV bodies."""
    from .cli import main

    root = Path(__file__).resolve().parent / "configs"
    runs = [("example.ini", ["rate", "--seed", str(seed), "--set", "orbits=50",
                             "--set", "periods=10", "--set", "contraction_periods=5"]),
            ("example.ini", ["atlas", "--set", "lambda_n=20", "--set", "x0_n=20"]),
            ("example.ini", ["escape", "--seed", str(seed), "--set", "samples=5000",
                             "--set", "lines=200", "--set", "fragmentation_periods=4"]),
            ("example.ini", ["nf-check", "--seed", str(seed), "--set", "samples_per_decade=20",
                             "--set", "levels=3"]),
            ("elliptic.ini", ["simulate", "--set", "collisions=200"])]
    mism, files = [], 0
    with tempfile.TemporaryDirectory() as tmp:
        for i, (name, args) in enumerate(runs):
            bodies = []
            for rep in range(2):
                out = Path(tmp) / f"{i}-{rep}"
                code = main([args[0], "--config", str(root / name), "--out", str(out),
                             *args[1:]])
                if code != 0:
                    mism.append(f"{args[0]} exit {code}")
                bodies.append({p.name: _body(p) for p in sorted(out.glob("*.csv"))})
            files += len(bodies[0])
            if bodies[0] != bodies[1] or not bodies[0]:
                mism.append(args[0])
    ok = not mism
    return ok, (f"{files} CSV files over {len(runs)} commands identical" if ok
                else f"differences in {mism}"), {"files": files, "mismatches": mism}


def _body(path: Path) -> bytes:
    return b"".join(l for l in path.read_bytes().splitlines(keepends=True) if not l.startswith(b"#"))


# ---------------------------------------------------------------- driver

CRITERIA = {
    1: ("exact-map-residuals", exact_map),
    2: ("elliptic-orbit", elliptic_orbit),
    3: ("adiabatic-scaling", adiabatic),
    4: ("normal-form-scaling", normal_form_scaling),
    5: ("trace-identities", trace_identities),
    6: ("atlas-reproduction", atlas_reproduction),
    7: ("growth-rates", growth_rates),
    8: ("escape-statistics", escape_statistics),
    9: ("oscillation-check", oscillation),
    10: ("reproducibility", reproducibility),
}


def lookup(key) -> int:
    """Criterion number from a number or a name."""
    if isinstance(key, int) or str(key).isdigit():
        n = int(key)
        if n in CRITERIA:
            return n
    else:
        for n, (name, _) in CRITERIA.items():
            if name == key:
                return n
    raise KeyError(f"unknown acceptance criterion {key!r}")


def evaluate(number: int, seed: int = 0) -> CriterionResult:
    name, fn = CRITERIA[number]
    t = time.perf_counter()
    ok, detail, metrics = fn(seed=seed)
    return CriterionResult(number, name, bool(ok), detail, metrics, time.perf_counter() - t)


def run(selection=None, seed: int = 0, echo=None) -> list[CriterionResult]:
    numbers = sorted(CRITERIA) if not selection else [lookup(k) for k in selection]
    out = []
    for n in numbers:
        res = evaluate(n, seed)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
