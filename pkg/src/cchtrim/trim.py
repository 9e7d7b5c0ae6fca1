"""Trim equations, a bounded Levenberg-Marquardt solver and speed sweeps."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import airframe
from .core import (CONTROL_BOUNDS, CONTROL_NAMES, ControlVector, HelicopterConfig,
                   ModelError, default_config, interp_table)
from .rotor import FlapError, InflowError

STRATEGIES = ("BL", "STrim", "MPTrim", "HTrim")
_IDX = {n: i for i, n in enumerate(CONTROL_NAMES)}
_BL_FREE = ("theta0", "theta_diff", "theta1c", "theta1s", "pitch", "roll")
_COMPOUND_FREE = ("theta0", "theta_diff", "theta1c", "theta1s", "roll", "theta_prop",
                  "theta1c_diff")

TOLERANCE = 1e-8
STEP_TOLERANCE = 1e-10
MAX_ITER = 200


class TrimError(RuntimeError):
    """Trim did not converge; carries the best point found."""

    def __init__(self, msg, best=None, residual=None):
        super().__init__(msg)
        self.best = best
        self.residual = residual


class SweepError(RuntimeError):
    def __init__(self, msg, airspeed=None, cause=None):
        super().__init__(msg)
        self.airspeed = airspeed
        self.cause = cause


# ---------------------------------------------------------------------------
# schedules

def pitch_preset(airspeed, cfg: HelicopterConfig | None = None):
    """Preset pitch attitude (deg) from the configured schedule, clamped at the ends."""
    cfg = cfg or default_config()
    return float(interp_table(cfg.calibration.pitch_preset, airspeed))


def los_target(airspeed, cfg: HelicopterConfig | None = None):
    """Lift-offset schedule: quadratic in airspeed, capped."""
    cfg = cfg or default_config()
    cal = cfg.calibration
    return min(cal.los_coefficient * float(airspeed) ** 2, cal.los_cap)


# ---------------------------------------------------------------------------
# problem

@dataclass(frozen=True)
class TrimProblem:
    airspeed: float
    strategy: str
    free: tuple
    base: ControlVector          # values of the preset/fixed controls
    los_target: float | None     # None: no lift-offset equation
    cfg: HelicopterConfig = field(repr=False)

    @property
    def lower(self):
        return np.array([CONTROL_BOUNDS[n][0] for n in self.free])

    @property
    def upper(self):
        return np.array([CONTROL_BOUNDS[n][1] for n in self.free])

    @property
    def n_equations(self):
        return 6 + (self.los_target is not None)

    @property
    def pitch_preset(self):
        return None if self.strategy == "BL" else self.base.pitch

    def full(self, xf):
        """Expand free values (B, n) into full control arrays (B, 11)."""
        xf = np.atleast_2d(xf)
        X = np.repeat(self.base.as_array()[None], xf.shape[0], axis=0)
        for k, name in enumerate(self.free):
            X[:, _IDX[name]] = xf[:, k]
        return X

    def pick(self, x: ControlVector):
        return np.array([getattr(x, n) for n in self.free])

    def without_los(self, theta1c_diff):
        """Same problem with differential lateral cyclic fixed and no lift-offset equation."""
        free = tuple(n for n in self.free if n != "theta1c_diff")
        return TrimProblem(self.airspeed, self.strategy, free,
                           self.base.replace(theta1c_diff=theta1c_diff), None, self.cfg)


def build_problem(airspeed, kind, delta_e=0.0, cfg: HelicopterConfig | None = None,
                  theta1c_diff=0.0) -> TrimProblem:
    """Assemble the free/preset control split for one strategy at one airspeed."""
    cfg = cfg or default_config()
    if kind not in STRATEGIES:
        raise ValueError(f"unknown strategy {kind!r}; expected one of {STRATEGIES}")
    if not 0.0 <= airspeed <= 100.0:
        raise ValueError(f"airspeed {airspeed} outside [0, 100] m/s")
    if kind == "BL":
        base = ControlVector(theta1c_diff=theta1c_diff)
        return TrimProblem(float(airspeed), kind, _BL_FREE, base, None, cfg)
    if kind == "STrim":
        delta_e = 0.0
    lo, hi = CONTROL_BOUNDS["delta_e"]
    if not lo <= delta_e <= hi:
        raise ValueError(f"elevator {delta_e} outside [{lo}, {hi}] deg")
    base = ControlVector(delta_e=float(delta_e), pitch=pitch_preset(airspeed, cfg))
    return TrimProblem(float(airspeed), kind, _COMPOUND_FREE, base,
                       los_target(airspeed, cfg), cfg)


def _evaluate(problem: TrimProblem, xf, warm=None):
    X = problem.full(xf)
    loads = airframe.evaluate(problem.cfg, problem.airspeed, X,
                              zero_thrust_prop=problem.strategy == "BL", warm=warm)
    cfg = problem.cfg
    mg = cfg.weight
    r = np.empty((X.shape[0], problem.n_equations))
    r[:, :3] = loads.total_force / mg
    r[:, 3:6] = loads.total_moment / (mg * cfg.rotor_radius)
    if problem.los_target is not None:
        r[:, 6] = loads.lift_offset(cfg) - problem.los_target
    return r, loads


def residual(x_free, problem: TrimProblem):
    """Scaled equilibrium residual (forces / mg, moments / (mg R), then lift offset error)."""
    r, _ = _evaluate(problem, np.asarray(x_free, dtype=float)[None])
    return r[0]


# ---------------------------------------------------------------------------
# Levenberg-Marquardt

@dataclass
class LMResult:
    x: np.ndarray
    residual: np.ndarray
    norm: float
    iterations: int
    converged: bool
    at_bound: tuple


def lm_minimize(fun, x0, lower, upper, *, tol=TOLERANCE, step_tol=STEP_TOLERANCE,
                max_iter=MAX_ITER, fd_fraction=1e-4, lam0=1e-3, on_accept=None,
                stall_window=8) -> LMResult:
    """Bounded Levenberg-Marquardt on a batched residual ``fun((B, n)) -> (B, m)``.

    The Jacobian is a one-sided finite difference with step ``fd_fraction``
    of each variable's range; every trial step is projected onto the box.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    n = x.size
    h = fd_fraction * (upper - lower)
    r = fun(x[None])[0]
    if on_accept:
        on_accept(x)
    norm = float(np.linalg.norm(r))
    lam = lam0
    it = 0
    history = [norm]
    while norm >= tol and it < max_iter:
        it += 1
        # stalled against a bound or in a local minimum: stop early
        if len(history) > stall_window and norm > 0.5 * history[-stall_window - 1]:
            break
        steps = np.where(x + h <= upper, h, -h)
        pts = np.repeat(x[None], n, axis=0) + np.diag(steps)
        J = ((fun(pts) - r) / steps[:, None]).T
        A = J.T @ J
        g = J.T @ r
        small = False
        while True:
            D = np.diag(np.maximum(np.diag(A), 1e-12))
            try:
                dx = -np.linalg.solve(A + lam * D, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            xn = np.clip(x + dx, lower, upper)
            step = float(np.linalg.norm(xn - x))
            if step < step_tol:
                small = True
                break
            rn = fun(xn[None])[0]
            nn = float(np.linalg.norm(rn))
            if np.isfinite(nn) and nn < norm:
                x, r, norm = xn, rn, nn
                lam = max(lam / 10.0, 1e-12)
                if on_accept:
                    on_accept(x)
                break
            lam *= 10.0
            if lam > 1e12:
                small = True
                break
        history.append(norm)
        if small:
            break
    at_bound = tuple(i for i in range(n) if x[i] <= lower[i] or x[i] >= upper[i])
    return LMResult(x, r, norm, it, norm < tol, at_bound)


def fd_jacobian(problem: TrimProblem, x, warm=None, fd_fraction=1e-4):
    """Forward-difference Jacobian of the scaled residual at free values ``x``."""
    x = np.asarray(x, dtype=float)
    h = fd_fraction * (problem.upper - problem.lower)
    steps = np.where(x + h <= problem.upper, h, -h)
    pts = np.vstack([x[None], x[None] + np.diag(steps)])
    r, _ = _evaluate(problem, pts, warm)
    return ((r[1:] - r[0]) / steps[:, None]).T


def chord_solve(problem: TrimProblem, x0, jac, warm=None, tol=TOLERANCE, max_iter=8):
    """Newton corrections with a frozen Jacobian, for small continuation steps.

    Returns (x, norm, loads) on convergence inside the bounds, else None.
    """
    x = np.asarray(x0, dtype=float)
    pinv = np.linalg.pinv(jac)
    prev = np.inf
    for _ in range(max_iter + 1):
        r, loads = _evaluate(problem, x[None], warm)
        norm = float(np.linalg.norm(r[0]))
        if not np.isfinite(norm) or norm > 0.5 * prev:
            return None
        if norm < tol:
            if np.any(x < problem.lower) or np.any(x > problem.upper):
                return None
            return x, norm, loads
        prev = norm
        x = x - pinv @ r[0]
    return None


# ---------------------------------------------------------------------------
# trim solutions

@dataclass
class TrimSolution:
    airspeed: float
    strategy: str
    controls: ControlVector
    residual_norm: float
    loads: airframe.LoadBreakdown
    power: float                 # W
    rotor_load: float            # N, T_u + T_l
    los: float
    iterations: int
    converged: bool
    thrust_upper: float = 0.0
    thrust_lower: float = 0.0
    prop_thrust: float = 0.0
    closure: tuple = (0.0, 0.0)  # blade-element minus momentum thrust per rotor, N
    saturated: tuple = ()
    los_saturated: bool = False
    warm: tuple = field(default=None, repr=False)

    def as_row(self):
        row = {"U": self.airspeed, "strategy": self.strategy}
        row.update({n: getattr(self.controls, n) for n in CONTROL_NAMES})
        row.update({"residual": self.residual_norm, "power_kW": self.power / 1e3,
                    "rotor_load_kN": self.rotor_load / 1e3, "LOS": self.los,
                    "T_upper_kN": self.thrust_upper / 1e3, "T_lower_kN": self.thrust_lower / 1e3,
                    "T_prop_kN": self.prop_thrust / 1e3})
        return row


def power_required(solution: TrimSolution) -> float:
    """Shaft power (W) of both rotors and the propeller, no transmission losses."""
    return solution.power


def _solve(problem, x0, warm=None):
    state = {"warm": warm}
    cache = {}

    def fun(xs):
        r, loads = _evaluate(problem, xs, state["warm"])
        if xs.shape[0] == 1:
            cache["last"] = (xs[0].copy(), loads)
        return r

    def accept(x):
        xs, loads = cache["last"]
        if np.array_equal(xs, x):
            state["warm"] = loads.warm(0)

    res = lm_minimize(fun, x0, problem.lower, problem.upper, on_accept=accept)
    return res, state["warm"]


def _saturated_first(problem, x0, warm):
    """Try the problem with differential lateral cyclic held at its lower bound.

    Accepted only when the natural lift offset already exceeds the target,
    i.e. the full problem would need a negative differential.
    """
    reduced = problem.without_los(CONTROL_BOUNDS["theta1c_diff"][0])
    full0 = ControlVector.from_array(problem.full(x0)[0])
    try:
        res, warm_out = _solve(reduced, reduced.pick(full0), warm)
    except (InflowError, FlapError, ModelError):
        return None
    if not res.converged:
        return None
    sol = _finish(reduced, reduced.full(res.x)[0], res, warm_out, True)
    return sol if sol.los >= problem.los_target else None


def lm_solve(problem: TrimProblem, x0, warm=None, saturated_hint=False) -> TrimSolution:
    """Solve one trim problem from ``x0`` (a ControlVector or free-variable array).

    Raises TrimError with the best point when the residual stays above
    tolerance.  When the lift-offset target needs a negative differential
    lateral cyclic, that control is held at its bound, the lift-offset equation
    is dropped and the solution is flagged ``los_saturated``.
    """
    if isinstance(x0, ControlVector):
        x0 = problem.pick(x0)
    else:
        x0 = np.asarray(x0, dtype=float)
    if saturated_hint and problem.los_target is not None:
        sol = _saturated_first(problem, x0, warm)
        if sol is not None:
            return sol
    try:
        res, warm_out = _solve(problem, x0, warm)
    except (InflowError, FlapError, ModelError) as exc:
        raise TrimError(f"model failure at U={problem.airspeed}: {exc}") from exc
    los_sat = False
    if not res.converged and problem.los_target is not None:
        k = problem.free.index("theta1c_diff")
        if k in res.at_bound:
            bound = float(res.x[k])
            reduced = problem.without_los(bound)
            full0 = ControlVector.from_array(problem.full(res.x)[0])
            try:
                res, warm_out = _solve(reduced, reduced.pick(full0), warm_out)
            except (InflowError, FlapError, ModelError) as exc:
                raise TrimError(f"model failure at U={problem.airspeed}: {exc}") from exc
            problem = reduced
            los_sat = True
    X = problem.full(res.x)
    if not res.converged:
        raise TrimError(f"trim not converged at U={problem.airspeed} ({problem.strategy}), "
                        f"residual {res.norm:.3g}", best=ControlVector.from_array(X[0]),
                        residual=res.norm)
    return _finish(problem, X[0], res, warm_out, los_sat)


def _finish(problem, xfull, res, warm, los_sat):
    cfg = problem.cfg
    loads = airframe.evaluate(cfg, problem.airspeed, xfull[None],
                              zero_thrust_prop=problem.strategy == "BL", warm=warm)
    xfull = xfull.copy()
    xfull[_IDX["theta_prop"]] = loads.theta_prop[0]
    controls = ControlVector.from_array(xfull)
    tu, tl = float(loads.thrust_upper[0]), float(loads.thrust_lower[0])
    sat = tuple(problem.free[i] for i in res.at_bound)
    return TrimSolution(
        airspeed=problem.airspeed, strategy=problem.strategy, controls=controls,
        residual_norm=res.norm, loads=loads.breakdown(0), power=float(loads.power(cfg)[0]),
        rotor_load=tu + tl, los=float(loads.lift_offset(cfg)[0]), iterations=res.iterations,
        converged=res.converged, thrust_upper=tu, thrust_lower=tl,
        prop_thrust=float(loads.prop_thrust[0]),
        closure=tuple(float(c) for c in loads.coaxial.closure[0]), saturated=sat,
        los_saturated=los_sat, warm=loads.warm(0))


def trim(airspeed, kind="STrim", delta_e=0.0, cfg=None, x0=None, warm=None) -> TrimSolution:
    """Convenience: build and solve one trim point, multi-starting when no x0 is given."""
    problem = build_problem(airspeed, kind, delta_e, cfg)
    if x0 is not None:
        return lm_solve(problem, x0, warm)
    return _multistart(problem)


def _multistart(problem):
    last = None
    for th0 in (6.0, 9.0, 12.0):
        for phi in (-2.0, 0.0, 2.0):
            x0 = problem.base.replace(theta0=th0, roll=phi)
            if problem.strategy != "BL":
                x0 = x0.replace(theta_prop=_prop_guess(problem))
            try:
                return lm_solve(problem, x0)
            except TrimError as exc:
                last = exc
    raise last


def _prop_guess(problem):
    """Propeller pitch near zero thrust for the current airspeed."""
    vp = airframe.body_velocity(np.array([problem.airspeed]), np.array([problem.base.pitch]),
                                np.zeros(1)) @ airframe.PROP_FRAME.T
    return float(np.clip(airframe.zero_thrust_pitch(problem.cfg, vp.T)[0], 0.0, 70.0))


def speed_grid(vmin, vmax, dv):
    if dv <= 0:
        raise ValueError("speed step must be positive")
    if not 0.0 <= vmin <= vmax <= 100.0:
        raise ValueError(f"speed range [{vmin}, {vmax}] must lie within [0, 100]")
    n = int(np.floor((vmax - vmin) / dv + 1e-9))
    return [round(vmin + k * dv, 10) for k in range(n + 1)]


def sweep(kind, speeds, delta_e=0.0, cfg=None, retries=5, seed=0):
    """Continuation sweep over ``speeds`` (ascending), warm-started from the previous point.

    ``delta_e`` is a constant or a callable of airspeed.
    """
    cfg = cfg or default_config()
    rng = np.random.default_rng(seed)
    out = []
    prev = None
    for U in speeds:
        de = delta_e(U) if callable(delta_e) else delta_e
        problem = build_problem(U, kind, de, cfg)
        try:
            if prev is None:
                sol = _multistart(problem)
            else:
                sol = _retrying(problem, prev, rng, retries)
        except TrimError as exc:
            raise SweepError(f"{kind} sweep failed at U={U} m/s: {exc}", U, exc) from exc
        out.append(sol)
        prev = sol
    return out


def _retrying(problem, prev, rng, retries):
    x0 = problem.pick(prev.controls.replace(pitch=prev.controls.pitch if problem.strategy == "BL"
                                            else problem.base.pitch))
    try:
        return lm_solve(problem, x0, prev.warm, saturated_hint=prev.los_saturated)
    except TrimError as exc:
        last = exc
    for _ in range(retries):
        xp = x0 * (1.0 + rng.uniform(-0.1, 0.1, x0.shape))
        try:
            return lm_solve(problem, np.clip(xp, problem.lower, problem.upper), prev.warm)
        except TrimError as exc:
            last = exc
    raise last


SWEEP_COLUMNS = ("U", "strategy", *CONTROL_NAMES, "residual", "power_kW", "rotor_load_kN",
                 "LOS", "T_upper_kN", "T_lower_kN", "T_prop_kN")


def fmt(v):
    if isinstance(v, str):
        return v
    v = float(v)
    if v == 0.0:
        return "0"
    return f"{v:.6g}"


def sweep_csv(solutions) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for s in solutions:
        row = s.as_row()
        w.writerow([fmt(row[c]) for c in SWEEP_COLUMNS])
    return buf.getvalue()
