"""Non-rotor components and assembly of the total force/moment balance.

Loads are expressed in body axes (x forward, y starboard, z down) about the
centre of gravity, which sits on the rotor shaft axis at the fuselage
reference point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import rotor
from .core import CONTROL_NAMES, ControlVector, FlightCondition, HelicopterConfig

COMPONENTS = ("U", "L", "Prop", "Fus", "HS", "VS", "G")
_IDX = {n: i for i, n in enumerate(CONTROL_NAMES)}


@dataclass(frozen=True)
class ComponentLoads:
    component: str
    force: np.ndarray
    moment: np.ndarray


@dataclass
class LoadBreakdown:
    components: list

    @property
    def total_force(self):
        return sum((c.force for c in self.components), np.zeros(3))

    @property
    def total_moment(self):
        return sum((c.moment for c in self.components), np.zeros(3))

    def __getitem__(self, tag):
        for c in self.components:
            if c.component == tag:
                return c
        raise KeyError(tag)

    def rows(self):
        """(component, Fx, Fy, Fz, Mx, My, Mz) rows followed by the total."""
        out = [(c.component, *c.force, *c.moment) for c in self.components]
        out.append(("Total", *self.total_force, *self.total_moment))
        return out


# ---------------------------------------------------------------------------
# frames

def hub_frame(cfg: HelicopterConfig):
    """Body-to-hub rotation; the shaft is tilted forward by ``shaft_tilt``."""
    g = math.radians(cfg.shaft_tilt)
    return np.array([[math.cos(g), 0.0, math.sin(g)],
                     [0.0, 1.0, 0.0],
                     [-math.sin(g), 0.0, math.cos(g)]])


PROP_FRAME = np.array([[0.0, 0.0, -1.0],
                       [0.0, -1.0, 0.0],
                       [-1.0, 0.0, 0.0]])


def body_velocity(airspeed, pitch, roll):
    """Aircraft velocity relative to the air in body axes (level flight, no sideslip)."""
    th, ph = np.radians(pitch), np.radians(roll)
    u = airspeed * np.cos(th)
    return np.stack([u, airspeed * np.sin(th) * np.sin(ph),
                     airspeed * np.sin(th) * np.cos(ph)], axis=-1)


def gravity_force(cfg, pitch, roll):
    th, ph = np.radians(pitch), np.radians(roll)
    mg = cfg.weight
    return mg * np.stack([-np.sin(th), np.cos(th) * np.sin(ph), np.cos(th) * np.cos(ph)], axis=-1)


def elevator_effectiveness(airspeed, cfg: HelicopterConfig):
    """Wake-immersion factor on control-surface increments: 0 below the ramp, 1 above."""
    lo, hi = cfg.calibration.elevator_ramp
    t = np.clip((np.asarray(airspeed, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def phased(cfg, c, s):
    """Delay a cyclic input by the control phase angle (each rotor's own azimuth).

    The stiff hub answers cyclic pitch almost in phase, so without phasing a
    lateral input would mostly pitch each rotor.
    """
    d = math.radians(cfg.calibration.control_phase)
    cd, sd = math.cos(d), math.sin(d)
    return c * cd - s * sd, c * sd + s * cd


@lru_cache(maxsize=8)
def _grids(cfg):
    return rotor.main_rotor_grid(cfg), rotor.propeller_grid(cfg)


# ---------------------------------------------------------------------------
# propeller

def zero_thrust_pitch(cfg: HelicopterConfig, hub_velocity, guess=None):
    """Propeller collective (deg) giving zero thrust; zero thrust means zero inflow."""
    _, grid = _grids(cfg)
    u, v, w = (np.atleast_1d(np.asarray(q, dtype=float)) for q in hub_velocity)
    bsz = u.shape[0]
    zero = np.zeros(bsz)

    def thrust(th):
        res = rotor.blade_element(grid, cfg.air_density, (th, zero, zero), (zero, zero),
                                  (u, v, w), (zero, zero, zero), 1)
        return res["thrust"]

    x0 = np.radians(20.0) + np.arctan2(-w, grid.omega * grid.radius * 0.75) - grid.twist_field[
        np.argmin(np.abs(grid.xr[:, 0] - 0.75)), 0]
    x = x0 if guess is None else np.radians(np.broadcast_to(guess, (bsz,))).copy()
    h = 1e-6
    for _ in range(40):
        t0 = thrust(x)
        if np.all(np.abs(t0) < 1e-6):
            break
        slope = (thrust(x + h) - t0) / h
        x = x - t0 / np.where(np.abs(slope) > 1e-9, slope, 1e-9)
    return np.degrees(x) + cfg.calibration.zero_thrust_pitch_offset


def _propeller(cfg, theta_prop, vb, guess=None):
    _, grid = _grids(cfg)
    vp = vb @ PROP_FRAME.T
    loads, vi = rotor.solve_propeller(cfg, grid, np.radians(theta_prop), vp.T, guess=guess)
    force = loads.force @ PROP_FRAME
    react = np.zeros_like(loads.force)
    react[:, 2] = loads.torque
    moment_local = (loads.moment + react) @ PROP_FRAME
    pos = np.asarray(cfg.propeller.hub_position, dtype=float)
    moment = moment_local + np.cross(pos, force)
    return force, moment, loads, vi


def propeller_loads(theta_prop, condition: FlightCondition, cfg: HelicopterConfig,
                    pitch=0.0, roll=0.0) -> ComponentLoads:
    """Pusher propeller loads at a collective pitch (deg)."""
    if not 0.0 <= theta_prop <= 70.0:
        raise ValueError(f"propeller pitch {theta_prop} outside [0, 70] deg")
    cfg = _with_density(cfg, condition)
    vb = body_velocity(np.array([condition.airspeed]), np.array([pitch]), np.array([roll]))
    force, moment, _, _ = _propeller(cfg, np.array([theta_prop]), vb)
    return ComponentLoads("Prop", force[0], moment[0])


def _with_density(cfg, condition):
    if condition is not None and condition.air_density != cfg.air_density:
        return cfg.replace(air_density=condition.air_density)
    return cfg


# ---------------------------------------------------------------------------
# fuselage and empennage surrogates

def _wind_angles(vb):
    u, v, w = vb[..., 0], vb[..., 1], vb[..., 2]
    speed = np.sqrt(u * u + v * v + w * w)
    alpha = np.arctan2(w, u)
    beta = np.arcsin(np.divide(v, speed, out=np.zeros_like(v), where=speed > 0))
    return speed, alpha, beta


def _wind_to_body(vb, speed, alpha, drag, lift, side):
    """Drag along -V, lift normal to V in the symmetry plane (up), side force along y."""
    vhat = np.divide(vb, speed[..., None], out=np.zeros_like(vb), where=speed[..., None] > 0)
    lift_dir = np.stack([np.sin(alpha), np.zeros_like(alpha), -np.cos(alpha)], axis=-1)
    side_dir = np.zeros_like(vb)
    side_dir[..., 1] = 1.0
    return -drag[..., None] * vhat + lift[..., None] * lift_dir + side[..., None] * side_dir


def _fuselage(cfg, vb):
    cal = cfg.calibration
    speed, alpha, beta = _wind_angles(vb)
    q = 0.5 * cfg.air_density * speed ** 2
    drag = q * cal.fuselage_flat_plate_area * (1.0 + cal.fuselage_drag_attack_factor * alpha ** 2)
    lift = q * cal.fuselage_lift_slope * alpha
    side = q * cal.fuselage_side_slope * beta
    force = _wind_to_body(vb, speed, alpha, drag, lift, side)
    moment = np.stack([np.zeros_like(q), q * (cal.fuselage_moment_zero
                                              + cal.fuselage_moment_slope * alpha),
                       q * cal.fuselage_yaw_slope * beta], axis=-1)
    return force, moment


def fuselage_loads(condition: FlightCondition, cfg: HelicopterConfig, pitch=0.0, roll=0.0):
    """Fuselage surrogate: flat-plate drag with an incidence factor, linear lift and moment."""
    cfg = _with_density(cfg, condition)
    vb = body_velocity(np.array([condition.airspeed]), np.array([pitch]), np.array([roll]))
    force, moment = _fuselage(cfg, vb)
    return ComponentLoads("Fus", force[0], moment[0])


def _empennage(cfg, vb, airspeed, delta_e, delta_r):
    emp = cfg.empennage
    speed, alpha, beta = _wind_angles(vb)
    q = 0.5 * cfg.air_density * speed ** 2
    eta = elevator_effectiveness(airspeed, cfg)
    stall = math.radians(emp.stall_angle)
    a_hs = alpha + math.radians(emp.hs_incidence) + emp.elevator_effectiveness * eta * np.radians(delta_e)
    cl = emp.lift_curve_slope * np.clip(a_hs, -stall, stall)
    hs_force = _wind_to_body(vb, speed, alpha, q * emp.hs_area * (emp.cd0 + emp.induced_drag_factor * cl ** 2),
                             q * emp.hs_area * cl, np.zeros_like(q))
    a_vs = -beta - emp.rudder_effectiveness * eta * np.radians(delta_r)
    cy = emp.lift_curve_slope * np.clip(a_vs, -stall, stall)
    vs_force = _wind_to_body(vb, speed, alpha, q * emp.vs_area * (emp.cd0 + emp.induced_drag_factor * cy ** 2),
                             np.zeros_like(q), q * emp.vs_area * cy)
    hs_moment = np.cross(np.asarray(emp.hs_position, dtype=float), hs_force)
    vs_moment = np.cross(np.asarray(emp.vs_position, dtype=float), vs_force)
    return (hs_force, hs_moment), (vs_force, vs_moment)


def empennage_loads(condition: FlightCondition, cfg: HelicopterConfig, delta_e=0.0, delta_r=0.0,
                    pitch=0.0, roll=0.0):
    """(horizontal, vertical) stabiliser loads; control increments scaled by the wake ramp."""
    if not -25.0 <= delta_e <= 25.0:
        raise ValueError(f"elevator {delta_e} outside [-25, 25] deg")
    if not -30.0 <= delta_r <= 30.0:
        raise ValueError(f"rudder {delta_r} outside [-30, 30] deg")
    cfg = _with_density(cfg, condition)
    U = np.array([condition.airspeed])
    vb = body_velocity(U, np.array([pitch]), np.array([roll]))
    (hf, hm), (vf, vm) = _empennage(cfg, vb, U, np.array([delta_e]), np.array([delta_r]))
    return ComponentLoads("HS", hf[0], hm[0]), ComponentLoads("VS", vf[0], vm[0])


# ---------------------------------------------------------------------------
# assembly

@dataclass
class BatchLoads:
    """Per-row loads for a batch of control vectors at one airspeed."""
    force: np.ndarray          # (B, 7, 3)
    moment: np.ndarray         # (B, 7, 3)
    thrust_upper: np.ndarray
    thrust_lower: np.ndarray
    torque_upper: np.ndarray
    torque_lower: np.ndarray
    torque_prop: np.ndarray
    prop_thrust: np.ndarray
    hub_moment_upper: np.ndarray   # hub axes
    hub_moment_lower: np.ndarray
    coaxial: rotor.CoaxialSolution
    prop_inflow: np.ndarray
    theta_prop: np.ndarray
    stall_fraction: np.ndarray

    @property
    def total_force(self):
        return self.force.sum(axis=1)

    @property
    def total_moment(self):
        return self.moment.sum(axis=1)

    @property
    def rotor_load(self):
        return self.thrust_upper + self.thrust_lower

    def power(self, cfg):
        return ((np.abs(self.torque_upper) + np.abs(self.torque_lower)) * cfg.rotor_speed
                + np.abs(self.torque_prop) * cfg.propeller.speed)

    def warm(self, i=0):
        """Warm-start tuple for row ``i``."""
        c = self.coaxial
        return (c.state[i].copy(), float(self.prop_inflow[i]),
                None if c.jacobian is None else c.jacobian[i].copy())

    def lift_offset(self, cfg):
        s = 1.0 if cfg.upper_rotation == "ccw" else -1.0
        dmx = s * (self.hub_moment_lower[:, 0] - self.hub_moment_upper[:, 0])
        return rotor.lift_offset_from_moments(dmx, self.rotor_load, cfg.rotor_radius)

    def breakdown(self, i=0) -> LoadBreakdown:
        return LoadBreakdown([ComponentLoads(tag, self.force[i, k].copy(), self.moment[i, k].copy())
                              for k, tag in enumerate(COMPONENTS)])


def evaluate(cfg: HelicopterConfig, airspeed: float, X, *, zero_thrust_prop=False,
             warm=None, rotors=True, aero=True) -> BatchLoads:
    """Evaluate all seven component loads for a batch of control arrays X (B, 11) in deg.

    ``zero_thrust_prop`` replaces the propeller collective by the zero-thrust
    pitch for the actual inflow.  ``warm`` is an optional (coaxial state,
    propeller inflow[, coaxial Jacobian]) tuple used to start the Newton solves.  ``rotors`` and
    ``aero`` switch off the rotor or all aerodynamic loads (diagnostics).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    bsz = X.shape[0]
    col = lambda n: X[:, _IDX[n]]
    pitch, roll = col("pitch"), col("roll")
    U = np.full(bsz, float(airspeed))
    vb = body_velocity(U, pitch, roll)
    grid, _ = _grids(cfg)
    C = hub_frame(cfg)
    force = np.zeros((bsz, 7, 3))
    moment = np.zeros((bsz, 7, 3))

    s_up = 1.0 if cfg.upper_rotation == "ccw" else -1.0
    nan = np.full(bsz, np.nan)
    coax = None
    tu = tl = qu = ql = nan
    hmu = hml = np.zeros((bsz, 3))
    stall = np.zeros(bsz)
    if rotors and aero:
        vh = vb @ C.T
        up = [np.radians(col("theta0") + col("theta_diff")),
              *phased(cfg, s_up * np.radians(col("theta1c") + col("theta1c_diff")),
                      np.radians(col("theta1s") + col("theta1s_diff")))]
        lo = [np.radians(col("theta0") - col("theta_diff")),
              *phased(cfg, -s_up * np.radians(col("theta1c") - col("theta1c_diff")),
                      np.radians(col("theta1s") - col("theta1s_diff")))]
        guess = None if warm is None else warm[0]
        jac = None if warm is None or len(warm) < 3 else warm[2]
        coax = rotor.solve_coaxial_inflow(cfg, grid, up, lo, vh.T, guess=guess, jac=jac)
        hubs = (np.asarray(cfg.upper_hub_position), np.asarray(cfg.lower_hub_position))
        for k, (loads, sense, pos) in enumerate(zip(coax.loads, (s_up, -s_up), hubs)):
            f_body = loads.force @ C
            react = np.zeros_like(loads.force)
            react[:, 2] = sense * loads.torque
            m_body = (loads.moment + react) @ C + np.cross(pos, f_body)
            force[:, k] = f_body
            moment[:, k] = m_body
        lu, ll = coax.loads
        tu, tl, qu, ql = lu.thrust, ll.thrust, lu.torque, ll.torque
        hmu, hml = lu.moment, ll.moment
        stall = np.maximum(lu.stall_fraction, ll.stall_fraction)

    theta_prop = col("theta_prop").copy()
    qp = tp = vip = np.zeros(bsz)
    if aero:
        vp = vb @ PROP_FRAME.T
        if zero_thrust_prop:
            theta_prop = zero_thrust_pitch(cfg, vp.T)
        pguess = None if warm is None else warm[1]
        f, m, pl, vip = _propeller(cfg, theta_prop, vb, guess=pguess)
        force[:, 2], moment[:, 2] = f, m
        qp, tp = pl.torque, pl.thrust
        force[:, 3], moment[:, 3] = _fuselage(cfg, vb)
        (hf, hm), (vf, vm) = _empennage(cfg, vb, U, col("delta_e"), col("delta_r"))
        force[:, 4], moment[:, 4] = hf, hm
        force[:, 5], moment[:, 5] = vf, vm
    force[:, 6] = gravity_force(cfg, pitch, roll)

    return BatchLoads(force, moment, tu, tl, qu, ql, qp, tp, hmu, hml, coax, vip,
                      theta_prop, stall)


def total_loads(x: ControlVector, condition: FlightCondition, cfg: HelicopterConfig,
                **kw) -> LoadBreakdown:
    """Seven-component load breakdown for one control vector."""
    cfg = _with_density(cfg, condition)
    return evaluate(cfg, condition.airspeed, x.as_array()[None], **kw).breakdown(0)


def elevator_control_efficiency(condition: FlightCondition, baseline: ControlVector,
                                cfg: HelicopterConfig, step=0.5):
    """Pitch-moment sensitivity to elevator over the pitch inertia (central difference).

    Returned in rad/s^2 per degree of elevator.
    """
    cfg = _with_density(cfg, condition)
    X = np.stack([baseline.replace(delta_e=baseline.delta_e + step).as_array(),
                  baseline.replace(delta_e=baseline.delta_e - step).as_array()])
    bl = evaluate(cfg, condition.airspeed, X)
    my = bl.total_moment[:, 1]
    return (my[0] - my[1]) / (2.0 * step * cfg.pitch_inertia)
