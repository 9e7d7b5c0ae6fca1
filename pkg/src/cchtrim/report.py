"""Figures written next to the CSV products (non-interactive Agg backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .airframe import COMPONENTS  # noqa: E402

_STYLE = {"BL": "k--", "STrim": "C0-", "MPTrim": "C2-.", "HTrim": "C3-"}
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def power_vs_speed(records_by_kind, path, bands=None):
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for kind, recs in records_by_kind.items():
        ax.plot([r.U for r in recs], [r.power for r in recs], _STYLE.get(kind, "-"), label=kind)
    if bands is not None:
        if bands.propeller:
            ax.axvspan(*bands.propeller, color="r", alpha=0.15, label="propeller engages")
        if bands.elevator:
            ax.axvspan(*bands.elevator, color="g", alpha=0.15, label="elevator engages")
    ax.set_xlabel("airspeed (m/s)")
    ax.set_ylabel("power required (kW)")
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, path)


_PANELS = (("theta0", "collective (deg)"), ("theta_diff", "differential collective (deg)"),
           ("theta1c", "lateral cyclic (deg)"), ("theta1s", "longitudinal cyclic (deg)"),
           ("theta_prop", "propeller pitch (deg)"), ("pitch", "pitch attitude (deg)"),
           ("roll", "roll attitude (deg)"), ("delta_e", "elevator (deg)"),
           ("theta1c_diff", "lateral differential (deg)"))


def controls_vs_speed(solutions_by_kind, path):
    fig, axes = plt.subplots(3, 3, figsize=(11, 8.5), sharex=True)
    for ax, (name, label) in zip(axes.flat, _PANELS):
        for kind, sols in solutions_by_kind.items():
            ax.plot([s.airspeed for s in sols], [getattr(s.controls, name) for s in sols],
                    _STYLE.get(kind, "-"), label=kind)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("airspeed (m/s)")
    axes[0, 0].legend(fontsize=8)
    _save(fig, path)


def elevator_study(rows, path):
    """Power and rotor load against elevator angle, one line per airspeed."""
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    for U in sorted({r["U"] for r in rows}):
        pts = sorted((r for r in rows if r["U"] == U and not r["failed"]),
                     key=lambda r: r["delta_e"])
        de = [r["delta_e"] for r in pts]
        a1.plot(de, [r["power_kW"] for r in pts], "o-", label=f"{U:g} m/s")
        a2.plot(de, [r["rotor_load_kN"] for r in pts], "o-", label=f"{U:g} m/s")
    a1.set_ylabel("power required (kW)")
    a2.set_ylabel("rotor load (kN)")
    for ax in (a1, a2):
        ax.set_xlabel("elevator deflection (deg)")
        ax.grid(alpha=0.3)
    a1.legend()
    _save(fig, path)


def distribution(breakdowns, path, airspeed):
    """Component x-force, pitch moment, roll moment and z-force against elevator angle.

    ``breakdowns`` maps elevator angle to a LoadBreakdown.
    """
    de = sorted(breakdowns)
    panels = (("x-force (kN)", 0, True), ("pitch moment (kN m)", 1, False),
              ("roll moment (kN m)", 0, False), ("z-force (kN)", 2, True))
    fig, axes = plt.subplots(2, 2, figsize=(10, 7.5), sharex=True)
    for ax, (label, axis, is_force) in zip(axes.flat, panels):
        for tag in COMPONENTS:
            vals = [(breakdowns[d][tag].force if is_force else breakdowns[d][tag].moment)[axis] / 1e3
                    for d in de]
            ax.plot(de, vals, "o-", label=tag)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("elevator deflection (deg)")
    axes[0, 0].legend(fontsize=8)
    fig.suptitle(f"load distribution at {airspeed:g} m/s")
    _save(fig, path)
