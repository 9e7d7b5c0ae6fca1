"""Coaxial rotor aerodynamics.

Blade-element integration over a (radius, azimuth) grid, Pitt-Peters first
harmonic inflow, mutual interference between the two rotors, quasi-steady
flapping about an equivalent offset hinge and momentum closure of the mean
inflow.  Every routine accepts a leading batch dimension so that finite
difference Jacobians can be evaluated in one vectorised call.

Sign conventions: hub axes have x forward in the disk plane, y to starboard
and z down the shaft.  Azimuth is zero over the tail and advances in the
direction of rotation; ``sense`` is +1 for a rotor turning counter-clockwise
seen from the thrust side, -1 otherwise.  Inflow is positive downward
through the disk.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import HelicopterConfig, ModelError, interp_table

K1C_MAX = 15.0 * math.pi / 32.0


class InflowError(RuntimeError):
    """Momentum / blade-element closure failed to converge."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class FlapError(RuntimeError):
    pass


@dataclass(frozen=True)
class Airfoil:
    lift_slope: float = 5.73
    cd0: float = 0.01
    cd_k: float = 0.3
    stall_angle: float = 15.0  # deg

    def coefficients(self, alpha):
        """Lift and drag coefficients; linear up to stall, flat-plate-like beyond.

        The post-stall branch is continuous at the stall angle and periodic in
        alpha so that reversed flow is handled without jumps.
        """
        a_s = math.radians(self.stall_angle)
        cl_s = self.lift_slope * a_s
        cd_s = self.cd0 + self.cd_k * a_s ** 2
        s2 = math.sin(2.0 * a_s)
        ss = math.sin(a_s) ** 2
        attached = np.abs(alpha) <= a_s
        sin_a = np.sin(alpha)
        cl = np.where(attached, self.lift_slope * alpha, cl_s * np.sin(2.0 * alpha) / s2)
        cd = np.where(attached, self.cd0 + self.cd_k * alpha * alpha,
                      cd_s + (sin_a * sin_a - ss))
        return cl, cd, ~attached


@dataclass(frozen=True)
class RotorGrid:
    """Discretisation and blade properties of one rotor."""
    radius: float
    blades: int
    omega: float
    chord: float
    twist: float          # rad, root to tip
    reference: float      # fraction of radius where the collective is defined
    root_cutout: float
    hinge: float          # equivalent hinge offset, fraction of radius (0: rigid)
    n_radial: int
    n_azimuth: int
    airfoil: Airfoil
    flapping: bool = True
    hub_moment: str = "aerodynamic"   # or "equivalent_spring"

    def __post_init__(self):
        R = self.radius
        edges = np.linspace(self.root_cutout * R, R, self.n_radial + 1)
        r = 0.5 * (edges[1:] + edges[:-1])
        psi = np.arange(self.n_azimuth) * (2.0 * np.pi / self.n_azimuth)
        arm = np.clip(r - self.hinge * R, 0.0, None) if self.flapping else np.zeros_like(r)
        object.__setattr__(self, "r", r[:, None])
        object.__setattr__(self, "dr", np.diff(edges)[:, None])
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "cos", np.cos(psi)[None, :])
        object.__setattr__(self, "sin", np.sin(psi)[None, :])
        object.__setattr__(self, "xr", (r / R)[:, None])
        object.__setattr__(self, "twist_field", (self.twist * (r / R - self.reference))[:, None])
        object.__setattr__(self, "arm", arm[:, None])
        object.__setattr__(self, "outboard", (arm > 0).astype(float)[:, None])
        spring = self.flapping and self.hub_moment == "equivalent_spring"
        object.__setattr__(self, "moment_arm", (arm if spring else r)[:, None])

    @property
    def disk_area(self):
        return math.pi * self.radius ** 2

    @property
    def tip_speed(self):
        return self.omega * self.radius

    def with_stations(self, n_radial=None, n_azimuth=None):
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        if n_radial:
            kw["n_radial"] = n_radial
        if n_azimuth:
            kw["n_azimuth"] = n_azimuth
        return RotorGrid(**kw)


def main_rotor_grid(cfg: HelicopterConfig) -> RotorGrid:
    cal = cfg.calibration
    return RotorGrid(
        radius=cfg.rotor_radius, blades=cfg.blades_per_rotor, omega=cfg.rotor_speed,
        chord=cfg.chord, twist=math.radians(cfg.blade_twist),
        reference=cfg.pitch_reference_station, root_cutout=cfg.root_cutout,
        hinge=cfg.hinge_offset, n_radial=cfg.radial_stations, n_azimuth=cfg.azimuth_stations,
        airfoil=Airfoil(cal.lift_curve_slope, cal.cd0, cal.cd_k, cal.stall_angle),
        hub_moment=cal.hub_moment_model)


def propeller_grid(cfg: HelicopterConfig) -> RotorGrid:
    p = cfg.propeller
    return RotorGrid(
        radius=p.radius, blades=p.blade_count, omega=p.speed, chord=p.chord,
        twist=math.radians(p.twist), reference=p.pitch_reference_station,
        root_cutout=p.root_cutout, hinge=0.0, n_radial=p.radial_stations,
        n_azimuth=p.azimuth_stations,
        airfoil=Airfoil(p.lift_curve_slope, p.cd0, p.cd_k, p.stall_angle), flapping=False)


# ---------------------------------------------------------------------------
# inflow model pieces

def interference_factors(mu, cfg: HelicopterConfig):
    """(upper-to-lower, lower-to-upper) inflow interference factors at advance ratio mu."""
    cal = cfg.calibration
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ModelError("advance ratio must be non-negative")
    return interp_table(cal.interference_u2l, mu), interp_table(cal.interference_l2u, mu)


def wake_skew_angle(inplane, normal):
    """Wake skew angle in degrees, 0 for axial flow and 90 edgewise."""
    inplane = np.abs(np.asarray(inplane, dtype=float))
    normal = np.clip(np.asarray(normal, dtype=float), 0.0, None)
    chi = np.degrees(np.arctan2(inplane, normal))
    return np.minimum(chi, 90.0)


def pitt_peters_harmonics(chi_deg):
    """First harmonic inflow coefficients (K1s, K1c) for a wake skew angle in degrees."""
    chi = np.asarray(chi_deg, dtype=float)
    if np.any((chi < 0) | (chi > 90.0 + 1e-12)):
        raise ModelError(f"wake skew angle outside [0, 90] deg: {chi}")
    k1c = K1C_MAX * np.tan(np.radians(chi) / 2.0)
    return np.zeros_like(k1c), k1c


def couple_induced_velocities(v_upper, v_lower, d_u2l, d_l2u):
    """Total induced velocity of each rotor from the two inherent fields."""
    v_upper = np.asarray(v_upper, dtype=float)
    v_lower = np.asarray(v_lower, dtype=float)
    return v_upper + d_l2u * v_lower, v_lower + d_u2l * v_upper


def _k1c(inplane, normal):
    chi = np.radians(wake_skew_angle(inplane, normal))
    return K1C_MAX * np.tan(chi / 2.0)


# ---------------------------------------------------------------------------
# blade element

def _b(a):
    """Batch scalar -> (B, 1, 1) for broadcasting against the grid."""
    return np.asarray(a, dtype=float).reshape(-1, 1, 1)


def blade_element(grid: RotorGrid, rho, pitch, inflow, hub_velocity, flap, sense):
    """Integrate blade-element loads of one rotor.

    pitch: (theta0, theta1c, theta1s) in rad, each shape (B,)
    inflow: (v_mean, v_harmonic) in m/s; local inflow is
        ``v_mean + (r/R) v_harmonic cos(angle to downstream)``
    hub_velocity: (u, v, w) of the hub relative to air in hub axes
    flap: (beta0, beta1c, beta1s) in rad
    Returns a dict of batched results (hub axes).
    """
    th0, th1c, th1s = (_b(p) for p in pitch)
    v_mean, v_harm = (_b(v) for v in inflow)
    u, v, w = (_b(q) for q in hub_velocity)
    b0, b1c, b1s = (_b(b) for b in flap)
    s = float(sense)
    cos, sin = grid.cos, grid.sin

    v_ip = np.sqrt(u * u + v * v)
    safe = np.where(v_ip > 1e-9, v_ip, 1.0)
    downstream = np.where(v_ip > 1e-9, (cos * u - s * sin * v) / safe, 0.0)

    ut = grid.omega * grid.r + u * sin + s * v * cos
    radial = u * cos - s * v * sin
    beta = b0 + b1c * cos + b1s * sin
    dbeta = -b1c * sin + b1s * cos
    beta_loc = beta * grid.outboard
    up = (v_mean + grid.xr * v_harm * downstream - w + beta_loc * radial
          + grid.arm * grid.omega * dbeta)
    theta = th0 + grid.twist_field + th1c * cos + th1s * sin
    alpha = theta - np.arctan2(up, ut)
    alpha = (alpha + np.pi) % (2.0 * np.pi) - np.pi
    cl, cd, stalled = grid.airfoil.coefficients(alpha)
    speed = np.sqrt(ut * ut + up * up)
    q = 0.5 * rho * grid.chord * speed
    fn = q * (cl * ut - cd * up) * grid.dr   # normal to blade, thrust-wise
    fd = q * (cl * up + cd * ut) * grid.dr   # in plane, opposing rotation

    nb = grid.blades
    sb, cb = np.sin(beta_loc), np.cos(beta_loc)
    fx = nb * np.mean(np.sum(fn * sb * cos - fd * sin, axis=1), axis=-1)
    fy = nb * np.mean(np.sum(-s * (fn * sb * sin + fd * cos), axis=1), axis=-1)
    fz = -nb * np.mean(np.sum(fn * cb, axis=1), axis=-1)
    torque = nb * np.mean(np.sum(grid.r * fd, axis=1), axis=-1)

    # per-blade moment passed to the hub: about the hinge when the hub is
    # represented by the equivalent spring, else about the hub centre
    hub_m = np.sum(grid.moment_arm * fn, axis=1)            # (B, Npsi)
    c1, s1 = cos[0], sin[0]
    mx = nb * np.mean(-s * hub_m * s1, axis=-1)
    my = nb * np.mean(-hub_m * c1, axis=-1)

    hinge_m = np.sum(grid.arm * fn, axis=1)
    flap_moments = np.stack([np.mean(hinge_m, axis=-1),
                             2.0 * np.mean(hinge_m * c1, axis=-1),
                             2.0 * np.mean(hinge_m * s1, axis=-1)], axis=-1)
    live = (ut > 0) & (speed > 0.3 * grid.tip_speed)
    stall_fraction = np.mean(stalled & live, axis=(1, 2))
    return {
        "force": np.stack([fx, fy, fz], axis=-1),
        "moment": np.stack([mx, my, np.zeros_like(mx)], axis=-1),
        "thrust": -fz,
        "torque": torque,
        "flap_moments": flap_moments,
        "stall_fraction": stall_fraction,
    }


# ---------------------------------------------------------------------------
# results

@dataclass
class InflowState:
    inherent: np.ndarray     # v'_i0, m/s
    k1s: np.ndarray
    k1c: np.ndarray
    skew: np.ndarray         # deg
    total: np.ndarray        # v_i0 after coupling, m/s


@dataclass
class FlapState:
    beta0: np.ndarray
    beta1c: np.ndarray
    beta1s: np.ndarray

    @property
    def small_angle_ok(self):
        return np.all(np.abs(np.stack([self.beta0, self.beta1c, self.beta1s])) < 0.3, axis=0)


@dataclass
class RotorLoads:
    force: np.ndarray        # hub axes, N
    moment: np.ndarray       # hub moment (hub axes), N m
    thrust: np.ndarray
    torque: np.ndarray
    power: np.ndarray
    stall_fraction: np.ndarray

    def __getitem__(self, i):
        return RotorLoads(*(getattr(self, f)[i] for f in
                            ("force", "moment", "thrust", "torque", "power", "stall_fraction")))


def _loads(res, omega):
    return RotorLoads(res["force"], res["moment"], res["thrust"], res["torque"],
                      np.abs(res["torque"]) * omega, res["stall_fraction"])


# ---------------------------------------------------------------------------
# batched Newton for small square systems

def _newton(fun, z0, steps, tol, max_iter, error_cls, label, jac=None):
    """Solve fun(Z, rows) = 0 row-wise; ``rows`` maps each row of Z to its batch item.

    Chord-Newton: a supplied or previously computed Jacobian is reused while
    it keeps contracting the residual and rebuilt by forward differences
    otherwise.  Only unconverged rows are evaluated.  Returns (z, g, jac).
    """
    z = np.array(z0, dtype=float)
    bsz, n = z.shape
    eye = np.eye(n)
    every = np.arange(bsz)
    g = fun(z, every)
    if jac is None:
        J = np.zeros((bsz, n, n))
        have = np.zeros(bsz, dtype=bool)
    else:
        J = np.array(np.broadcast_to(jac, (bsz, n, n)), dtype=float)
        have = np.ones(bsz, dtype=bool)
    fresh = np.zeros(bsz, dtype=bool)
    for _ in range(max_iter):
        err = np.max(np.abs(g), axis=1)
        act = np.flatnonzero(err >= tol)
        if act.size == 0:
            return z, g, J
        need = act[~have[act]]
        if need.size:
            h = steps * (1.0 + np.abs(z[need]))
            zz = (z[need][:, None, :] + h[:, None, :] * eye[None]).reshape(-1, n)
            gg = fun(zz, np.repeat(need, n)).reshape(need.size, n, n)
            J[need] = (gg - g[need][:, None, :]).transpose(0, 2, 1) / h[:, None, :]
            have[need] = True
            fresh[need] = True
        try:
            dz = -np.linalg.solve(J[act], g[act][..., None])[..., 0]
        except np.linalg.LinAlgError:
            dz = -np.stack([np.linalg.pinv(J[i]) @ g[i] for i in act])
        step = np.ones(act.size)
        z_try = z[act] + dz
        g_try = fun(z_try, act)
        for _ in range(8):
            e_try = np.max(np.abs(g_try), axis=1)
            worse = ~(e_try < err[act] * (1.0 - 1e-4 * step))
            # a stale Jacobian is rebuilt rather than backtracked along
            retry = worse & fresh[act]
            if not np.any(retry):
                break
            step[retry] *= 0.5
            sub = np.flatnonzero(retry)
            z_try[sub] = z[act[sub]] + step[sub, None] * dz[sub]
            g_try[sub] = fun(z_try[sub], act[sub])
        e_try = np.max(np.abs(g_try), axis=1)
        ok = e_try < err[act]
        stale = ~fresh[act] & ~(e_try < 0.3 * err[act])
        have[act[stale]] = False
        take = ok | fresh[act]
        z[act[take]] = z_try[take]
        g[act[take]] = g_try[take]
        fresh[act[take]] = False
    err = np.max(np.abs(g), axis=1)
    if np.all(err < tol):
        return z, g, J
    raise error_cls(f"{label} did not converge (residual {err.max():.3e})", residual=g)


# ---------------------------------------------------------------------------
# single rotor flapping with prescribed inflow

def solve_flapping(grid: RotorGrid, cfg: HelicopterConfig, pitch, inflow, hub_velocity,
                   sense=1, rho=None, beta_guess=None, k_beta=None, tol=1e-9):
    """Quasi-steady first-harmonic flapping (beta0, beta1c, beta1s) in rad.

    Harmonic balance of the blade flap equation about the equivalent hinge:
    the aerodynamic hinge moment's mean and first harmonics balance the
    centrifugal, offset and spring stiffness.  ``k_beta`` overrides the
    spring stiffness (the first moment is held fixed).
    """
    rho = cfg.air_density if rho is None else rho
    nu2 = _nu2(cfg, k_beta)
    ib = cfg.flap_inertia * cfg.rotor_speed ** 2
    pitch = [np.atleast_1d(np.asarray(p, dtype=float)) for p in pitch]
    bsz = pitch[0].shape[0]
    inflow = [np.broadcast_to(np.asarray(v, dtype=float), (bsz,)) for v in inflow]
    hub_velocity = [np.broadcast_to(np.asarray(v, dtype=float), (bsz,)) for v in hub_velocity]

    def fun(z, rows):
        res = blade_element(grid, rho, [p[rows] for p in pitch], [v[rows] for v in inflow],
                            [v[rows] for v in hub_velocity], z.T, sense)
        m = res["flap_moments"] / ib
        return np.stack([nu2 * z[:, 0] - m[:, 0], (nu2 - 1) * z[:, 1] - m[:, 1],
                         (nu2 - 1) * z[:, 2] - m[:, 2]], axis=1)

    z0 = np.zeros((bsz, 3)) if beta_guess is None else np.atleast_2d(beta_guess)
    try:
        z, _, _ = _newton(fun, z0, 1e-7, tol, 200, InflowError, "flapping")
    except InflowError as exc:
        raise FlapError(str(exc)) from None
    return FlapState(z[:, 0], z[:, 1], z[:, 2])


def _nu2(cfg, k_beta=None):
    if k_beta is None:
        return cfg.flap_frequency_ratio ** 2
    m_beta = cfg.first_moment
    return (1.0 + cfg.hinge_offset * cfg.rotor_radius * m_beta / cfg.flap_inertia
            + k_beta / (cfg.flap_inertia * cfg.rotor_speed ** 2))


# ---------------------------------------------------------------------------
# coaxial pair

@dataclass
class CoaxialSolution:
    inflow: tuple            # (upper, lower) InflowState
    flap: tuple              # (upper, lower) FlapState
    loads: tuple             # (upper, lower) RotorLoads
    state: np.ndarray        # (B, 8) Newton unknowns, reusable as a warm start
    closure: np.ndarray      # (B, 2) blade-element minus momentum thrust, N
    jacobian: np.ndarray = None  # (B, 8, 8) last Newton Jacobian, reusable with ``state``


def _momentum_thrust(rho, area, v_own, v_total, u, v, w):
    return 2.0 * rho * area * v_own * np.sqrt(u * u + v * v + (v_total - w) ** 2)


def _propeller_momentum_thrust(rho, area, vi, u, v, w):
    """Momentum thrust with a v^2 term on the negative-thrust side.

    Plain momentum theory is not monotone in vi when the propeller unloads
    into the windmill/brake range, which gives two inflow solutions for the
    same thrust.  The extra term makes the closure single-valued and leaves
    positive thrust untouched.
    """
    neg = np.minimum(vi, 0.0)
    return 2.0 * rho * area * vi * np.sqrt(u * u + v * v + (vi - w) ** 2 + neg * neg)


def hover_guess(cfg, thrust, hub_velocity, rho):
    """Momentum-theory inflow for a given thrust, used as cold start."""
    u, v, w = (np.asarray(q, dtype=float) for q in hub_velocity)
    area = cfg.disk_area
    vi = np.sqrt(np.abs(thrust) / (2 * rho * area)) * np.ones_like(u)
    for _ in range(30):
        vt = np.sqrt(u * u + v * v + (vi - w) ** 2)
        vi = thrust / (2 * rho * area * np.maximum(vt, 1e-3))
    return vi


def solve_coaxial_inflow(cfg: HelicopterConfig, grid: RotorGrid, pitch_upper, pitch_lower,
                         hub_velocity, rho=None, guess=None, interference=True,
                         tol=1e-11, max_iter=60, jac=None):
    """Joint inflow/flapping solution of both rotors.

    Unknowns per batch row: inherent mean inflow of each rotor and the three
    flap harmonics of each rotor.  Closure requires blade-element thrust to
    equal the momentum thrust built from the coupled (total) mean inflow.
    """
    rho = cfg.air_density if rho is None else rho
    pitch_upper = [np.atleast_1d(np.asarray(p, dtype=float)) for p in pitch_upper]
    pitch_lower = [np.atleast_1d(np.asarray(p, dtype=float)) for p in pitch_lower]
    bsz = pitch_upper[0].shape[0]
    u, v, w = (np.broadcast_to(np.asarray(q, dtype=float), (bsz,)).copy() for q in hub_velocity)
    v_ip = np.sqrt(u * u + v * v)
    mu = v_ip / grid.tip_speed
    if interference:
        d_u2l, d_l2u = interference_factors(mu, cfg)
    else:
        d_u2l, d_l2u = np.zeros(bsz), np.zeros(bsz)
    d_u2l = np.broadcast_to(d_u2l, (bsz,))
    d_l2u = np.broadcast_to(d_l2u, (bsz,))
    s_up = 1 if cfg.upper_rotation == "ccw" else -1
    nu2 = _nu2(cfg)
    ib = cfg.flap_inertia * cfg.rotor_speed ** 2
    t_ref = 0.5 * cfg.weight
    area = grid.disk_area

    def parts(z, idx):
        vu, vl = z[:, 0], z[:, 1]
        uu, vv, ww = u[idx], v[idx], w[idx]
        du2l, dl2u = d_u2l[idx], d_l2u[idx]
        tot_u = vu + dl2u * vl
        tot_l = vl + du2l * vu
        ku = _k1c(v_ip[idx], tot_u - ww)
        kl = _k1c(v_ip[idx], tot_l - ww)
        return vu, vl, tot_u, tot_l, ku, kl, uu, vv, ww, du2l, dl2u

    def fun(z, idx):
        vu, vl, tot_u, tot_l, ku, kl, uu, vv, ww, du2l, dl2u = parts(z, idx)
        ru = blade_element(grid, rho, [p[idx] for p in pitch_upper],
                           (tot_u, vu * ku + dl2u * vl * kl), (uu, vv, ww), z[:, 2:5].T, s_up)
        rl = blade_element(grid, rho, [p[idx] for p in pitch_lower],
                           (tot_l, vl * kl + du2l * vu * ku), (uu, vv, ww), z[:, 5:8].T, -s_up)
        out = np.empty_like(z)
        out[:, 0] = (ru["thrust"] - _momentum_thrust(rho, area, vu, tot_u, uu, vv, ww)) / t_ref
        out[:, 1] = (rl["thrust"] - _momentum_thrust(rho, area, vl, tot_l, uu, vv, ww)) / t_ref
        for j, res in ((2, ru), (5, rl)):
            m = res["flap_moments"] / ib
            out[:, j] = nu2 * z[:, j] - m[:, 0]
            out[:, j + 1] = (nu2 - 1) * z[:, j + 1] - m[:, 1]
            out[:, j + 2] = (nu2 - 1) * z[:, j + 2] - m[:, 2]
        fun.last = (ru, rl)
        return out

    if guess is None:
        vi = hover_guess(cfg, t_ref, (u, v, w), rho)
        z0 = np.zeros((bsz, 8))
        z0[:, 0] = vi
        z0[:, 1] = vi
        z0[:, 2] = z0[:, 5] = 0.03
    else:
        z0 = np.array(np.broadcast_to(guess, (bsz, 8)), dtype=float)
    z, _, J = _newton(fun, z0, 1e-7, tol, max_iter, InflowError, "coaxial inflow", jac=jac)
    idx = np.arange(bsz)
    g = fun(z, idx)
    ru, rl = fun.last
    vu, vl, tot_u, tot_l, ku, kl, *_ = parts(z, idx)
    skew_u = wake_skew_angle(v_ip, tot_u - w)
    skew_l = wake_skew_angle(v_ip, tot_l - w)
    inflow = (InflowState(vu, np.zeros(bsz), ku, skew_u, tot_u),
              InflowState(vl, np.zeros(bsz), kl, skew_l, tot_l))
    flap = (FlapState(*z[:, 2:5].T), FlapState(*z[:, 5:8].T))
    loads = (_loads(ru, grid.omega), _loads(rl, grid.omega))
    closure = g[:, :2] * t_ref
    return CoaxialSolution(inflow, flap, loads, z, closure, J)


def solve_propeller(cfg: HelicopterConfig, grid: RotorGrid, pitch, hub_velocity, rho=None,
                    guess=None, tol=1e-11):
    """Rigid propeller: momentum-closed mean inflow, no flapping or cyclic."""
    rho = cfg.air_density if rho is None else rho
    pitch = np.atleast_1d(np.asarray(pitch, dtype=float))
    bsz = pitch.shape[0]
    u, v, w = (np.broadcast_to(np.asarray(q, dtype=float), (bsz,)).copy() for q in hub_velocity)
    v_ip = np.sqrt(u * u + v * v)
    zero = np.zeros(bsz)
    t_ref = 0.05 * cfg.weight

    def run(z, idx):
        vi = z[:, 0]
        k = _k1c(v_ip[idx], vi - w[idx])
        res = blade_element(grid, rho, (pitch[idx], zero[idx], zero[idx]), (vi, vi * k),
                            (u[idx], v[idx], w[idx]), (zero[idx],) * 3, 1)
        return res, k

    def fun(z, idx):
        res, _ = run(z, idx)
        tm = _propeller_momentum_thrust(rho, grid.disk_area, z[:, 0], u[idx], v[idx], w[idx])
        return ((res["thrust"] - tm) / t_ref)[:, None]

    if guess is None:
        z0 = np.full((bsz, 1), 1.0)
    else:
        z0 = np.array(np.broadcast_to(guess, (bsz,)), dtype=float)[:, None]
    z, g, _ = _newton(fun, z0, 1e-7, tol, 60, InflowError, "propeller inflow")
    res, k = run(z, np.arange(bsz))
    return _loads(res, grid.omega), z[:, 0]


def lift_offset(upper: RotorLoads, lower: RotorLoads, radius, sense_upper=1):
    """Lateral lift offset: differential rotor roll moment over (total thrust x radius).

    Positive when each rotor carries more lift on its advancing side.
    """
    total = np.asarray(upper.thrust) + np.asarray(lower.thrust)
    if np.any(total <= 0):
        raise ModelError("lift offset undefined for non-positive rotor thrust")
    dmx = sense_upper * (np.asarray(lower.moment)[..., 0] - np.asarray(upper.moment)[..., 0])
    return dmx / (total * radius)


def lift_offset_from_moments(dmx, thrust, radius):
    thrust = np.asarray(thrust, dtype=float)
    if np.any(thrust <= 0):
        raise ModelError("lift offset undefined for non-positive rotor thrust")
    return np.asarray(dmx, dtype=float) / (thrust * radius)
