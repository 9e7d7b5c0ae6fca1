"""Configuration, control bookkeeping and equivalent-hinge relations."""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

GRAVITY = 9.80665


class ConfigError(ValueError):
    """Missing or malformed configuration entry."""


class ValidationError(ValueError):
    """Configuration value outside its admissible range."""

    def __init__(self, field_name, value, bound):
        self.field = field_name
        self.value = value
        self.bound = bound
        super().__init__(f"{field_name}={value!r} violates {bound}")


class ModelError(RuntimeError):
    """Physically meaningless model input or result."""


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class PropellerConfig:
    blade_count: int
    radius: float
    speed: float
    twist: float
    solidity: float
    hub_position: tuple
    root_cutout: float = 0.15
    pitch_reference_station: float = 0.0
    radial_stations: int = 20
    azimuth_stations: int = 36
    lift_curve_slope: float = 5.73
    cd0: float = 0.01
    cd_k: float = 0.3
    stall_angle: float = 15.0

    @property
    def disk_area(self):
        return math.pi * self.radius ** 2

    @property
    def chord(self):
        return self.solidity * math.pi * self.radius / self.blade_count


@dataclass(frozen=True)
class EmpennageConfig:
    hs_position: tuple
    vs_position: tuple
    hs_area: float = 2.5
    vs_area: float = 1.5
    lift_curve_slope: float = 4.0
    elevator_effectiveness: float = 0.6
    rudder_effectiveness: float = 0.6
    hs_incidence: float = 0.0
    cd0: float = 0.01
    induced_drag_factor: float = 0.08
    stall_angle: float = 20.0


@dataclass(frozen=True)
class Calibration:
    lift_curve_slope: float = 5.73
    cd0: float = 0.01
    cd_k: float = 0.3
    stall_angle: float = 15.0
    fuselage_flat_plate_area: float = 2.3
    fuselage_drag_attack_factor: float = 1.0
    fuselage_lift_slope: float = 1.0
    fuselage_moment_slope: float = 4.0
    fuselage_moment_zero: float = 0.0
    fuselage_side_slope: float = -2.0
    fuselage_yaw_slope: float = -2.0
    elevator_ramp: tuple = (40.0, 50.0)
    interference_u2l: tuple = ((0.0, 1.0), (0.1, 0.7), (0.2, 0.35), (0.3, 0.12), (0.4, 0.0))
    interference_l2u: tuple = ((0.0, 0.15), (0.2, 0.05), (0.4, 0.0))
    pitch_preset: tuple = ((0.0, 3.0), (20.0, 3.0), (100.0, 0.0))
    los_coefficient: float = 0.0002
    los_cap: float = 0.35
    til_cap: float = 5.0
    zero_thrust_pitch_offset: float = 0.0
    control_phase: float = 79.0
    hub_moment_model: str = "aerodynamic"
    gravity: float = GRAVITY


@dataclass(frozen=True)
class HelicopterConfig:
    mass: float
    rotor_radius: float
    blades_per_rotor: int
    rotor_speed: float
    spring_stiffness: float
    rotor_solidity: float
    shaft_tilt: float
    blade_twist: float
    flap_inertia: float
    flap_frequency_ratio: float
    lock_number: float
    lower_hub_position: tuple
    shaft_spacing: float
    propeller: PropellerConfig
    empennage: EmpennageConfig
    calibration: Calibration = field(default_factory=Calibration)
    hinge_offset: float = 0.47
    solidity_basis: str = "per_rotor"
    upper_rotation: str = "ccw"
    root_cutout: float = 0.15
    pitch_reference_station: float = 0.75
    radial_stations: int = 25
    azimuth_stations: int = 72
    air_density: float = 1.225
    pitch_inertia: float = 25000.0

    # derived constants -------------------------------------------------
    @property
    def disk_area(self):
        return math.pi * self.rotor_radius ** 2

    @property
    def tip_speed(self):
        return self.rotor_speed * self.rotor_radius

    @property
    def chord(self):
        n = self.blades_per_rotor
        if self.solidity_basis == "total":
            n = 2 * self.blades_per_rotor
        return self.rotor_solidity * math.pi * self.rotor_radius / n

    @property
    def weight(self):
        return self.mass * self.calibration.gravity

    @property
    def first_moment(self):
        return back_solve_first_moment(self)

    @property
    def hub_stiffness(self):
        """Per-blade flapping stiffness seen at the hub, N m/rad."""
        return (self.flap_frequency_ratio ** 2 - 1.0) * self.flap_inertia * self.rotor_speed ** 2

    @property
    def upper_hub_position(self):
        g = math.radians(self.shaft_tilt)
        lower = np.asarray(self.lower_hub_position, dtype=float)
        return tuple(lower + self.shaft_spacing * np.array([math.sin(g), 0.0, -math.cos(g)]))

    def replace(self, **changes):
        """Copy with top-level or dotted ``section.key`` overrides."""
        top = {}
        nested: dict[str, dict] = {}
        for key, value in changes.items():
            if "." in key:
                sec, sub = key.split(".", 1)
                nested.setdefault(sec, {})[sub] = value
            else:
                top[key] = value
        for sec, sub in nested.items():
            top[sec] = dataclasses.replace(getattr(self, sec), **sub)
        return _check(dataclasses.replace(self, **top))


_REQUIRED = {
    "helicopter": ("mass", "rotor_radius", "blades_per_rotor", "rotor_speed",
                   "spring_stiffness", "rotor_solidity", "shaft_tilt", "blade_twist",
                   "flap_inertia", "flap_frequency_ratio", "lock_number",
                   "lower_hub_position", "shaft_spacing"),
    "propeller": ("blade_count", "radius", "speed", "twist", "solidity", "hub_position"),
    "empennage": ("hs_position", "vs_position"),
}


def _freeze(value):
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _build(cls, section: Mapping[str, Any], name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    return cls(**{k: _freeze(v) for k, v in section.items()})


def _positive(cfg, names):
    for name in names:
        value = cfg
        for part in name.split("."):
            value = getattr(value, part)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise ValidationError(name, value, "> 0")


def _table_ok(name, table, lo=-math.inf, hi=math.inf):
    xs = [row[0] for row in table]
    if len(table) < 1 or any(len(row) != 2 for row in table):
        raise ValidationError(name, table, "rows of (breakpoint, value)")
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValidationError(name, table, "strictly increasing breakpoints")
    for _, v in table:
        if not lo <= v <= hi:
            raise ValidationError(name, v, f"[{lo}, {hi}]")


def _check(cfg: HelicopterConfig) -> HelicopterConfig:
    _positive(cfg, ["mass", "rotor_radius", "blades_per_rotor", "rotor_speed",
                    "flap_inertia", "lock_number", "shaft_spacing", "air_density",
                    "pitch_inertia", "hinge_offset",
                    "propeller.radius", "propeller.speed", "propeller.blade_count",
                    "propeller.solidity", "empennage.hs_area", "empennage.vs_area",
                    "calibration.lift_curve_slope", "calibration.gravity"])
    if cfg.spring_stiffness < 0:
        raise ValidationError("spring_stiffness", cfg.spring_stiffness, ">= 0")
    for name, val in (("rotor_solidity", cfg.rotor_solidity),
                      ("propeller.solidity", cfg.propeller.solidity)):
        if not 0 < val < 1:
            raise ValidationError(name, val, "(0, 1)")
    if not cfg.flap_frequency_ratio > 1:
        raise ValidationError("flap_frequency_ratio", cfg.flap_frequency_ratio, "> 1")
    for name, val in (("blade_twist", cfg.blade_twist), ("shaft_tilt", cfg.shaft_tilt),
                      ("propeller.twist", cfg.propeller.twist)):
        if not math.isfinite(val):
            raise ValidationError(name, val, "finite")
    if cfg.solidity_basis not in ("per_rotor", "total"):
        raise ValidationError("solidity_basis", cfg.solidity_basis, "per_rotor|total")
    if cfg.upper_rotation not in ("ccw", "cw"):
        raise ValidationError("upper_rotation", cfg.upper_rotation, "ccw|cw")
    for name, val in (("root_cutout", cfg.root_cutout),
                      ("propeller.root_cutout", cfg.propeller.root_cutout)):
        if not 0 <= val < 1:
            raise ValidationError(name, val, "[0, 1)")
    if cfg.radial_stations < 20 or cfg.azimuth_stations < 36:
        raise ValidationError("stations", (cfg.radial_stations, cfg.azimuth_stations),
                              "radial >= 20, azimuth >= 36")
    if not cfg.chord > 0:
        raise ValidationError("chord", cfg.chord, "> 0")
    cal = cfg.calibration
    _table_ok("calibration.interference_u2l", cal.interference_u2l, 0.0, 1.2)
    _table_ok("calibration.interference_l2u", cal.interference_l2u, 0.0, 1.2)
    _table_ok("calibration.pitch_preset", cal.pitch_preset, -20.0, 20.0)
    lo, hi = cal.elevator_ramp
    if not 0 <= lo < hi:
        raise ValidationError("calibration.elevator_ramp", cal.elevator_ramp, "0 <= start < end")
    if cal.los_cap <= 0 or cal.los_coefficient < 0:
        raise ValidationError("calibration.los_cap", cal.los_cap, "> 0")
    if not cal.til_cap > 0:
        raise ValidationError("calibration.til_cap", cal.til_cap, "> 0")
    if cal.hub_moment_model not in ("equivalent_spring", "aerodynamic"):
        raise ValidationError("calibration.hub_moment_model", cal.hub_moment_model,
                              "equivalent_spring|aerodynamic")
    if back_solve_first_moment(cfg) <= 0:
        raise ValidationError("hinge_offset", cfg.hinge_offset,
                              "spring stiffness leaves no centrifugal stiffening")
    return cfg


def validate_config(raw: Mapping[str, Any] | str, *, defaults: bool = True) -> HelicopterConfig:
    """Build a checked :class:`HelicopterConfig` from parsed TOML or TOML text.

    Sections ``[helicopter]``, ``[propeller]``, ``[empennage]`` and
    ``[calibration]`` are recognised.  Keys in the published parameter table
    are mandatory when ``defaults`` is False; otherwise the packaged values
    fill any gap.
    """
    if isinstance(raw, str):
        raw = tomllib.loads(raw)
    unknown = set(raw) - {"helicopter", "propeller", "empennage", "calibration"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    base = default_raw() if defaults else {}
    merged = {}
    for sec in ("helicopter", "propeller", "empennage", "calibration"):
        merged[sec] = {**base.get(sec, {}), **raw.get(sec, {})}
    for sec, keys in _REQUIRED.items():
        for key in keys:
            if key not in merged[sec]:
                raise ConfigError(f"missing required key [{sec}] {key}")
    heli = dict(merged["helicopter"])
    try:
        heli["propeller"] = _build(PropellerConfig, merged["propeller"], "propeller")
        heli["empennage"] = _build(EmpennageConfig, merged["empennage"], "empennage")
        heli["calibration"] = _build(Calibration, merged["calibration"], "calibration")
        cfg = _build(HelicopterConfig, heli, "helicopter")
    except TypeError as exc:  # wrong arity, e.g. missing required field
        raise ConfigError(str(exc)) from None
    cfg = _check(cfg)
    log.debug("first moment of inertia back-solved: %.3f kg m", cfg.first_moment)
    return cfg


def default_raw() -> dict:
    text = resources.files("cchtrim").joinpath("default.toml").read_text()
    return tomllib.loads(text)


def load_config(path: str | Path | None = None) -> HelicopterConfig:
    """Read a TOML configuration file; ``None`` gives the packaged default."""
    if path is None:
        return default_config()
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return validate_config(raw)


_DEFAULT = None


def default_config() -> HelicopterConfig:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = validate_config(default_raw())
    return _DEFAULT


# ---------------------------------------------------------------------------
# equivalent hinge

def equivalent_hinge_offset(freq_ratio, k_beta, i_beta, m_beta, omega, radius):
    """Dimensionless hinge offset reproducing the flap frequency of a hingeless blade.

    Solves ``wn^2 = Omega^2 (1 + e R M_b / I_b + K_b / (I_b Omega^2))`` for e.
    """
    for name, v in (("i_beta", i_beta), ("m_beta", m_beta), ("omega", omega), ("radius", radius)):
        if not v > 0:
            raise ModelError(f"{name} must be positive, got {v}")
    e = (freq_ratio ** 2 - 1.0 - k_beta / (i_beta * omega ** 2)) * i_beta / (radius * m_beta)
    if e < 0:
        raise ModelError(f"flap frequency ratio {freq_ratio} too low for spring stiffness {k_beta}")
    return e


def flap_frequency_ratio(e, k_beta, i_beta, m_beta, omega, radius):
    return math.sqrt(1.0 + e * radius * m_beta / i_beta + k_beta / (i_beta * omega ** 2))


def back_solve_first_moment(cfg: HelicopterConfig) -> float:
    """First moment of blade mass about the hinge consistent with ``cfg.hinge_offset``."""
    spring = cfg.spring_stiffness / (cfg.flap_inertia * cfg.rotor_speed ** 2)
    return ((cfg.flap_frequency_ratio ** 2 - 1.0 - spring) * cfg.flap_inertia
            / (cfg.hinge_offset * cfg.rotor_radius))


# ---------------------------------------------------------------------------
# controls

CONTROL_NAMES = ("theta0", "theta_diff", "theta1c", "theta1c_diff", "theta1s",
                 "theta1s_diff", "theta_prop", "delta_e", "delta_r", "pitch", "roll")

CONTROL_BOUNDS = {
    "theta0": (0.0, 20.0),
    "theta_diff": (-5.0, 5.0),
    "theta1c": (-6.25, 6.25),
    "theta1c_diff": (0.0, 4.5),
    "theta1s": (-10.0, 10.0),
    "theta1s_diff": (-1.0, 1.0),
    "theta_prop": (0.0, 70.0),
    "delta_e": (-25.0, 25.0),
    "delta_r": (-30.0, 30.0),
    "pitch": (-20.0, 20.0),
    "roll": (-20.0, 20.0),
}


@dataclass(frozen=True)
class ControlVector:
    """Controls and attitude, all in degrees."""
    theta0: float = 0.0
    theta_diff: float = 0.0
    theta1c: float = 0.0
    theta1c_diff: float = 0.0
    theta1s: float = 0.0
    theta1s_diff: float = 0.0
    theta_prop: float = 0.0
    delta_e: float = 0.0
    delta_r: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def as_array(self):
        return np.array([getattr(self, n) for n in CONTROL_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values):
        return cls(*(float(v) for v in values))

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def rotor_pitches(self):
        """Per-rotor (collective, lateral cyclic, longitudinal cyclic) for upper and lower."""
        upper = (self.theta0 + self.theta_diff, self.theta1c + self.theta1c_diff,
                 self.theta1s + self.theta1s_diff)
        lower = (self.theta0 - self.theta_diff, self.theta1c - self.theta1c_diff,
                 self.theta1s - self.theta1s_diff)
        return upper, lower

    @classmethod
    def from_rotor_pitches(cls, upper, lower, **others):
        mean = [(u + l) / 2 for u, l in zip(upper, lower)]
        diff = [(u - l) / 2 for u, l in zip(upper, lower)]
        return cls(theta0=mean[0], theta_diff=diff[0], theta1c=mean[1], theta1c_diff=diff[1],
                   theta1s=mean[2], theta1s_diff=diff[2], **others)


@dataclass(frozen=True)
class Violation:
    control: str
    value: float
    bound: tuple


def clamp_check(x: ControlVector) -> list[Violation]:
    """Controls lying outside their admissible (closed) range."""
    out = []
    for name in CONTROL_NAMES:
        lo, hi = CONTROL_BOUNDS[name]
        v = getattr(x, name)
        if not lo <= v <= hi:
            out.append(Violation(name, v, (lo, hi)))
    return out


@dataclass(frozen=True)
class FlightCondition:
    airspeed: float
    air_density: float = 1.225

    def __post_init__(self):
        if not 0.0 <= self.airspeed <= 100.0:
            raise ValidationError("airspeed", self.airspeed, "[0, 100]")
        if not self.air_density > 0:
            raise ValidationError("air_density", self.air_density, "> 0")


def interp_table(table, x):
    """Piecewise-linear lookup in a (breakpoint, value) table, clamped at the ends."""
    arr = np.asarray(table, dtype=float)
    return np.interp(x, arr[:, 0], arr[:, 1])
