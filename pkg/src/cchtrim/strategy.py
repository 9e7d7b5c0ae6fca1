"""Elevator/propeller allocation strategies and the elevator descent search.

MPTrim and HTrim trim the aircraft exactly like STrim except that the
elevator is set by a coarse-to-fine descent over [-15, 0] deg that keeps the
power decreasing and the rotor load increase (TIL) under a cap.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import trim as _trim
from .core import ControlVector, HelicopterConfig, default_config
from .trim import SweepError, TrimError, TrimSolution

DOMAIN = (-15.0, 0.0)
RESOLUTION = 0.01             # deg, finest search step
PROP_ENGAGE_FRACTION = 0.02   # of aircraft weight
ELEVATOR_ENGAGE = 0.05        # deg
DECREASE_TOL = 1e-8           # relative; smaller power changes are trim noise


class SearchError(RuntimeError):
    """A trim probe failed in the middle of a descent search."""

    def __init__(self, msg, trace=None, airspeed=None):
        super().__init__(msg)
        self.trace = trace
        self.airspeed = airspeed


def til_from_loads(load, reference_load):
    """Rotor load increase in percent relative to the elevator-neutral trim."""
    return (load / reference_load - 1.0) * 100.0


class ReferenceCache:
    """STrim reference solutions keyed by airspeed, solved once on demand."""

    def __init__(self, cfg: HelicopterConfig | None = None, solutions=()):
        self.cfg = cfg or default_config()
        self._sol = {float(s.airspeed): s for s in solutions}

    def __contains__(self, airspeed):
        return float(airspeed) in self._sol

    def get(self, airspeed) -> TrimSolution:
        U = float(airspeed)
        if U not in self._sol:
            try:
                self._sol[U] = _trim.trim(U, "STrim", cfg=self.cfg)
            except TrimError as exc:
                raise TrimError(f"STrim reference failed at U={U}: {exc}") from exc
        return self._sol[U]

    def load(self, airspeed):
        return self.get(airspeed).rotor_load


def til(airspeed, delta_e, cache: ReferenceCache, kind="HTrim"):
    """TIL (%) of the trim at ``delta_e`` against the cached STrim load."""
    ref = cache.get(airspeed)
    if delta_e == 0.0:
        return 0.0
    sol = _probe_solve(airspeed, kind, delta_e, ref, cache.cfg)
    return til_from_loads(sol.rotor_load, ref.rotor_load)


# ---------------------------------------------------------------------------
# descent search

@dataclass
class SearchTrace:
    probes: list = field(default_factory=list)     # (delta_e, power, TIL, accepted)
    window: tuple = (DOMAIN[0], DOMAIN[1])
    alpha: float = 1.0
    alphas: list = field(default_factory=list)      # step used in each pass
    at_edge: bool = False


def _ticks(x):
    return int(round(x / RESOLUTION))


def descent_search(probe, til_cap=5.0, domain=DOMAIN, reference_load=None,
                   rel_tol=DECREASE_TOL):
    """Coarse-to-fine elevator descent on an abstract ``probe(delta_e) -> (power, load)``.

    Steps of 1, 0.1 and 0.01 deg walk down from the right edge of the current
    window while each new point lowers the power and keeps TIL within
    ``til_cap``.  A pass stops at the first rejected point, which brackets
    the minimum within one step on either side of the last accepted point;
    the next pass restarts from the right end of that bracket with the step
    divided by ten.  Probes sit on a 0.01 deg lattice and are memoized.
    A decrease must exceed ``rel_tol`` of the current power to count.
    Returns (delta_e*, power*, SearchTrace).
    """
    if not til_cap > 0.0:
        raise ValueError(f"TIL cap must be positive, got {til_cap}")
    lo, hi = _ticks(domain[0]), _ticks(domain[1])
    memo = {}

    def evaluate(k):
        if k not in memo:
            memo[k] = probe(k * RESOLUTION)
        return memo[k]

    l0 = reference_load if reference_load is not None else evaluate(hi)[1]
    trace = SearchTrace()
    start = hi
    for step in (100, 10, 1):
        trace.alphas.append(step * RESOLUTION)
        k = start
        best_p = evaluate(k)[0]
        left = lo
        while True:
            kn = k - step
            if kn < lo:
                break
            p, l = evaluate(kn)
            t = til_from_loads(l, l0)
            ok = p < best_p - rel_tol * abs(best_p) and t <= til_cap
            trace.probes.append((kn * RESOLUTION, p, t, ok))
            if not ok:
                left = kn
                break
            k, best_p = kn, p
        best_k = k
        trace.window = (left * RESOLUTION, min(best_k + step, hi) * RESOLUTION)
        start = min(best_k + step, hi) if step > 1 else best_k
    trace.alpha = RESOLUTION
    trace.at_edge = best_k == lo
    return best_k * RESOLUTION, best_p, trace


def grid_search(probe, til_cap=5.0, domain=DOMAIN, reference_load=None,
                rel_tol=DECREASE_TOL):
    """Exhaustive scan of the 0.01 deg lattice; returns the feasible minimum-power point.

    Ties (within ``rel_tol``) go to the point nearest zero deflection.
    """
    lo, hi = _ticks(domain[0]), _ticks(domain[1])
    best = None
    l0 = reference_load
    for k in range(hi, lo - 1, -1):
        p, l = probe(k * RESOLUTION)
        if l0 is None:
            l0 = l
        if til_from_loads(l, l0) > til_cap:
            continue
        if best is None or p < best[1] - rel_tol * abs(best[1]):
            best = (k * RESOLUTION, p)
    return best


class TrimProbe:
    """Trim-backed probe: solves kind at (U, delta_e), warm-started from the nearest solved angle."""

    def __init__(self, airspeed, kind, reference: TrimSolution, cfg=None):
        self.airspeed = float(airspeed)
        self.kind = kind
        self.cfg = cfg or default_config()
        self.solutions = {0.0: reference}

    def solve(self, delta_e) -> TrimSolution:
        de = round(float(delta_e), 10)
        if de not in self.solutions:
            near = min(self.solutions, key=lambda d: (abs(d - de), d))
            self.solutions[de] = _probe_solve(self.airspeed, self.kind, de,
                                              self.solutions[near], self.cfg)
        return self.solutions[de]

    def __call__(self, delta_e):
        s = self.solve(delta_e)
        return s.power, s.rotor_load


class ScanProbe:
    """Probe for ordered fine scans such as :func:`grid_search`.

    Each angle is trimmed by frozen-Jacobian Newton corrections from the
    previous one; a full Levenberg-Marquardt solve (and a fresh Jacobian)
    takes over whenever that does not converge or the lift-offset
    saturation state changes.
    """

    def __init__(self, airspeed, kind, reference: TrimSolution, cfg=None):
        self.airspeed = float(airspeed)
        self.kind = kind
        self.cfg = cfg or default_config()
        self.lm_solves = 0
        self._restart(reference)

    def _restart(self, sol: TrimSolution):
        problem = _trim.build_problem(self.airspeed, self.kind, sol.controls.delta_e, self.cfg)
        if sol.los_saturated:
            problem = problem.without_los(sol.controls.theta1c_diff)
        self.saturated = sol.los_saturated
        self.controls = sol.controls
        self.warm = sol.warm
        self.x = problem.pick(sol.controls)
        self.jac = _trim.fd_jacobian(problem, self.x, self.warm)

    def _problem(self, delta_e):
        problem = _trim.build_problem(self.airspeed, self.kind, delta_e, self.cfg)
        return problem.without_los(self.controls.theta1c_diff) if self.saturated else problem

    def __call__(self, delta_e):
        problem = self._problem(delta_e)
        out = _trim.chord_solve(problem, self.x, self.jac, self.warm)
        if out is not None and self.saturated:
            # still saturated only while the natural lift offset stays past the target
            los = float(out[2].lift_offset(self.cfg)[0])
            target = _trim.los_target(self.airspeed, self.cfg)
            at_lower = self.controls.theta1c_diff <= 0.0
            if (los < target) if at_lower else (los > target):
                out = None
        if out is None:
            self.lm_solves += 1
            start = TrimSolution.__new__(TrimSolution)
            start.controls, start.warm, start.los_saturated = self.controls, self.warm, self.saturated
            sol = _probe_solve(self.airspeed, self.kind, delta_e, start, self.cfg)
            self._restart(sol)
            return sol.power, sol.rotor_load
        x, _, loads = out
        self.x = x
        self.controls = ControlVector.from_array(problem.full(x)[0])
        self.warm = loads.warm(0)
        return float(loads.power(self.cfg)[0]), float(loads.rotor_load[0])


def _probe_solve(airspeed, kind, delta_e, start: TrimSolution, cfg):
    problem = _trim.build_problem(airspeed, kind, delta_e, cfg)
    x0 = start.controls.replace(delta_e=delta_e)
    try:
        return _trim.lm_solve(problem, x0, start.warm, saturated_hint=start.los_saturated)
    except TrimError:
        # cold retry through the multi-start grid before giving up
        return _trim.trim(airspeed, kind, delta_e, cfg)


def heuristic_descent_search(airspeed, til_cap=5.0, cfg=None, reference=None, kind="HTrim",
                             domain=DOMAIN):
    """Elevator allocation at one airspeed by full trim solves.

    ``reference`` is the STrim solution at the same airspeed (solved when
    omitted).  Returns (delta_e*, power*, SearchTrace, TrimSolution at delta_e*).
    """
    cfg = cfg or default_config()
    if reference is None:
        reference = _trim.trim(airspeed, "STrim", cfg=cfg)
    probe = TrimProbe(airspeed, kind, reference, cfg)
    try:
        de, p, trace = descent_search(probe, til_cap, domain, reference.rotor_load)
    except TrimError as exc:
        raise SearchError(f"elevator search failed at U={airspeed}: {exc}",
                          airspeed=airspeed) from exc
    return de, p, trace, probe.solve(de)


# ---------------------------------------------------------------------------
# strategy runs

@dataclass
class StrategyRecord:
    U: float
    strategy: str
    delta_e: float
    power: float          # kW
    rotor_load: float     # kN
    til: float            # %
    reduction: float      # % power reduction against STrim
    prop_thrust: float    # kN
    solution: TrimSolution = field(repr=False, default=None)
    trace: SearchTrace = field(repr=False, default=None)

    @classmethod
    def from_solution(cls, sol: TrimSolution, reference: TrimSolution, kind=None, trace=None):
        return cls(U=sol.airspeed, strategy=kind or sol.strategy, delta_e=sol.controls.delta_e,
                   power=sol.power / 1e3, rotor_load=sol.rotor_load / 1e3,
                   til=til_from_loads(sol.rotor_load, reference.rotor_load),
                   reduction=(1.0 - sol.power / reference.power) * 100.0,
                   prop_thrust=sol.prop_thrust / 1e3, solution=sol, trace=trace)


def _search_task(args):
    U, kind, cap, ref, cfg = args
    try:
        de, p, trace, sol = heuristic_descent_search(U, cap, cfg, ref, kind)
    except (SearchError, TrimError) as exc:
        return U, None, exc
    sol.warm = None
    return U, (sol, trace), None


def run_strategy(kind, speeds, cfg=None, til_cap=None, reference=None, workers=1):
    """Records for one strategy over ``speeds``.

    ``reference`` is an optional STrim sweep over the same speeds; it is
    computed when missing.  MPTrim uses an unlimited TIL cap, HTrim the
    configured one unless ``til_cap`` overrides it.
    """
    cfg = cfg or default_config()
    if kind not in _trim.STRATEGIES:
        raise ValueError(f"unknown strategy {kind!r}")
    speeds = [float(u) for u in speeds]
    if reference is None:
        reference = _trim.sweep("STrim", speeds, cfg=cfg)
    ref = {float(s.airspeed): s for s in reference}
    if kind == "STrim":
        return [StrategyRecord.from_solution(ref[u], ref[u]) for u in speeds]
    if kind == "BL":
        sols = _trim.sweep("BL", speeds, cfg=cfg)
        return [StrategyRecord.from_solution(s, ref[s.airspeed]) for s in sols]
    cap = math.inf if kind == "MPTrim" else (cfg.calibration.til_cap if til_cap is None
                                             else til_cap)
    tasks = [(u, kind, cap, ref[u], cfg) for u in speeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_search_task, tasks))
    else:
        results = [_search_task(t) for t in tasks]
    records = []
    for U, out, exc in results:
        if exc is not None:
            raise SweepError(f"{kind} failed at U={U} m/s: {exc}", U, exc) from exc
        sol, trace = out
        records.append(StrategyRecord.from_solution(sol, ref[U], kind, trace))
    return records


# ---------------------------------------------------------------------------
# properties and engagement

@dataclass
class PropertyReport:
    U: float
    delta_e: list
    load: list          # kN
    til: list           # %
    power: list         # kW
    load_monotone: bool
    til_monotone: bool
    power_unimodal: bool
    turning_point: float | None   # delta_e of an interior power minimum
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return self.load_monotone and self.til_monotone and self.power_unimodal


def _monotone_violations(y, rel=1e-3):
    """Indices where y (ordered by increasing delta_e) rises by more than rel of its range."""
    y = np.asarray(y, dtype=float)
    span = float(np.ptp(y)) if y.size else 0.0
    d = np.diff(y)
    return [int(i) for i in np.flatnonzero(d > rel * span)] if span > 0 else []


def _sign_changes(y, rel=1e-3):
    y = np.asarray(y, dtype=float)
    span = float(np.ptp(y)) if y.size else 0.0
    if span == 0.0:
        return 0
    signs = [np.sign(v) for v in np.diff(y) if abs(v) > rel * span]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def check_properties(delta_e, load, til_values, power, U=float("nan"), rel=1e-3):
    """Property check on sampled curves; samples are sorted by delta_e here."""
    order = np.argsort(delta_e)
    de = np.asarray(delta_e, dtype=float)[order]
    lo = np.asarray(load, dtype=float)[order]
    ti = np.asarray(til_values, dtype=float)[order]
    po = np.asarray(power, dtype=float)[order]
    viol = []
    lv = _monotone_violations(lo, rel)
    tv = _monotone_violations(ti, rel)
    viol += [f"load rises between {de[i]:g} and {de[i + 1]:g} deg" for i in lv]
    viol += [f"TIL rises between {de[i]:g} and {de[i + 1]:g} deg" for i in tv]
    changes = _sign_changes(po, rel)
    if changes > 1:
        viol.append(f"power slope changes sign {changes} times")
    k = int(np.argmin(po))
    turning = float(de[k]) if 0 < k < len(de) - 1 and np.ptp(po) > 0 else None
    return PropertyReport(U=U, delta_e=de.tolist(), load=lo.tolist(), til=ti.tolist(),
                          power=po.tolist(), load_monotone=not lv, til_monotone=not tv,
                          power_unimodal=changes <= 1, turning_point=turning, violations=viol)


def verify_properties(airspeed, grid, cfg=None, reference=None, kind="HTrim"):
    """Sample load, TIL and power over an elevator grid and check monotonicity/unimodality."""
    cfg = cfg or default_config()
    if reference is None:
        reference = _trim.trim(airspeed, "STrim", cfg=cfg)
    probe = TrimProbe(airspeed, kind, reference, cfg)
    grid = sorted({round(float(g), 10) for g in grid}, reverse=True)
    sols = [probe.solve(g) for g in grid]
    load = [s.rotor_load / 1e3 for s in sols]
    tl = [til_from_loads(s.rotor_load, reference.rotor_load) for s in sols]
    power = [s.power / 1e3 for s in sols]
    return check_properties(grid, load, tl, power, float(airspeed))


@dataclass
class EngagementBands:
    propeller: tuple | None
    elevator: tuple | None

    @property
    def propeller_open(self):
        return self.propeller is None

    @property
    def elevator_open(self):
        return self.elevator is None

    def as_dict(self):
        return {"propeller": list(self.propeller) if self.propeller else None,
                "propeller_open": self.propeller_open,
                "elevator": list(self.elevator) if self.elevator else None,
                "elevator_open": self.elevator_open}


def _band(speeds, engaged):
    for i, (u, e) in enumerate(zip(speeds, engaged)):
        if e:
            return (speeds[i - 1] if i else u, u)
    return None


def engagement_speeds(strim_records, htrim_records=(), cfg=None):
    """Bracketing grid intervals where the propeller and the elevator first engage."""
    cfg = cfg or default_config()
    threshold = PROP_ENGAGE_FRACTION * cfg.weight / 1e3
    st = sorted(strim_records, key=lambda r: r.U)
    ht = sorted(htrim_records, key=lambda r: r.U)
    prop = _band([r.U for r in st], [r.prop_thrust > threshold for r in st])
    elev = _band([r.U for r in ht], [abs(r.delta_e) > ELEVATOR_ENGAGE for r in ht])
    return EngagementBands(prop, elev)


def power_ordering(records_by_kind, slack=0.005):
    """Check P_STrim >= P_HTrim >= P_MPTrim >= P_BL at common speeds.

    Returns (ok, list of violation strings).  Missing strategies are skipped.
    """
    chain = [k for k in ("STrim", "HTrim", "MPTrim", "BL") if k in records_by_kind]
    by = {k: {r.U: r.power for r in records_by_kind[k]} for k in chain}
    bad = []
    for hi, lo in zip(chain, chain[1:]):
        for U in sorted(set(by[hi]) & set(by[lo])):
            if by[lo][U] > by[hi][U] * (1.0 + slack):
                bad.append(f"U={U:g}: {lo} {by[lo][U]:.1f} kW > {hi} {by[hi][U]:.1f} kW")
    return not bad, bad


RECORD_COLUMNS = ("U", "strategy", "delta_e", "power_kW", "rotor_load_kN", "TIL_pct",
                  "reduction_pct", "prop_thrust_kN")


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow([_trim.fmt(v) for v in (r.U, r.strategy, r.delta_e, r.power, r.rotor_load,
                                            r.til, r.reduction, r.prop_thrust)])
    return buf.getvalue()
