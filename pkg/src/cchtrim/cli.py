"""Command line front end: ``cch-trim sweep|elevator-study|distribution``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import report, strategy, trim
from .core import ConfigError, ValidationError, default_config, load_config

log = logging.getLogger("cchtrim")

ENV_CONFIG = "CCH_TRIM_CONFIG"
DEFAULT_DE_GRID = "0,-2,-4,-6,-7,-10"


class UsageError(ValueError):
    pass


def _floats(text, what):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what}: cannot parse {text!r}") from None
    if not vals:
        raise UsageError(f"{what} is empty")
    return vals


def _strategies(text):
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    if not kinds:
        raise UsageError("strategy list is empty")
    bad = [k for k in kinds if k not in trim.STRATEGIES]
    if bad:
        raise UsageError(f"unknown strategies {bad}; choose from {list(trim.STRATEGIES)}")
    # fixed order keeps outputs independent of how the list was typed
    return [k for k in trim.STRATEGIES if k in kinds]


def _config(path):
    path = path or os.environ.get(ENV_CONFIG)
    return load_config(path) if path else default_config()


def _speeds(args):
    if getattr(args, "speeds", None):
        speeds = _floats(args.speeds, "speed list")
        if any(not 0.0 <= u <= 100.0 for u in speeds):
            raise UsageError("speeds must lie within [0, 100] m/s")
        return sorted(set(speeds))
    try:
        return trim.speed_grid(args.vmin, args.vmax, args.dv)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _num(v):
    """Round to the CSV precision so JSON output is stable across platforms."""
    if v is None or isinstance(v, (bool, str)):
        return v
    v = float(v)
    return v if not math.isfinite(v) else float(trim.fmt(v))


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([trim.fmt(v) if not isinstance(v, bool) else str(v).lower() for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# sweep

def cmd_sweep(args, cfg, out: Path):
    speeds = _speeds(args)
    kinds = _strategies(args.strategies)
    log.info("STrim reference sweep over %d speeds", len(speeds))
    failures = {}
    records, solutions = {}, {}
    try:
        reference = trim.sweep("STrim", speeds, cfg=cfg)
    except trim.SweepError as exc:
        reference = None
        failures["STrim"] = str(exc)
    if reference is not None:
        for kind in kinds:
            log.info("running %s", kind)
            try:
                recs = strategy.run_strategy(kind, speeds, cfg, args.til_cap, reference,
                                             workers=args.workers)
            except (trim.SweepError, strategy.SearchError, trim.TrimError) as exc:
                failures[kind] = str(exc)
                log.error("%s failed: %s", kind, exc)
                continue
            records[kind] = recs
            solutions[kind] = [r.solution for r in recs]
    else:
        for kind in kinds:
            failures.setdefault(kind, "STrim reference sweep failed")

    written = []
    try:
        for kind in records:
            p = out / f"sweep_{kind}.csv"
            _write(p, trim.sweep_csv(solutions[kind]))
            written.append(p)
        if records:
            all_recs = [r for k in records for r in records[k]]
            p = out / "strategies.csv"
            _write(p, strategy.records_csv(all_recs))
            written.append(p)
            p = out / "power_vs_speed.csv"
            _write(p, _power_table(records, speeds))
            written.append(p)
            p = out / "controls_vs_speed.csv"
            _write(p, trim.sweep_csv([s for k in solutions for s in solutions[k]]))
            written.append(p)
        summary = _summary(records, failures, cfg, speeds, args)
        p = out / "summary.json"
        _write(p, json.dumps(summary, indent=2) + "\n")
        written.append(p)
        if records and not args.no_figures:
            bands = strategy.engagement_speeds(records.get("STrim", ()), records.get("HTrim", ()),
                                               cfg) if "STrim" in records else None
            report.power_vs_speed(records, out / "power_vs_speed.png", bands)
            report.controls_vs_speed(solutions, out / "controls_vs_speed.png")
    except OSError:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    for kind, msg in failures.items():
        print(f"cch-trim: {kind} failed: {msg}", file=sys.stderr)
    return 1 if failures else 0


def _power_table(records, speeds):
    kinds = list(records)
    by = {k: {r.U: r.power for r in records[k]} for k in kinds}
    header = ["U"] + [f"P_{k}_kW" for k in kinds]
    rows = [[u] + [by[k].get(u, float("nan")) for k in kinds] for u in speeds]
    return _csv(header, rows)


def _summary(records, failures, cfg, speeds, args):
    out = {"speeds": {"min": speeds[0], "max": speeds[-1], "count": len(speeds)},
           "strategies": list(records), "failed": dict(failures)}
    if "STrim" in records:
        bands = strategy.engagement_speeds(records["STrim"], records.get("HTrim", ()), cfg)
        out["engagement"] = {k: ([_num(x) for x in v] if isinstance(v, list) else v)
                             for k, v in bands.as_dict().items()}
        if "HTrim" not in records:
            out["engagement"]["elevator"] = None
            out["engagement"]["elevator_open"] = None
    ok, violations = strategy.power_ordering(records)
    out["power_ordering"] = {"satisfied": ok and not failures, "violations": violations}
    if "HTrim" in records:
        best = max(records["HTrim"], key=lambda r: (r.reduction, -r.U))
        out["htrim_max_reduction"] = {"U": _num(best.U), "reduction_pct": _num(best.reduction),
                                      "delta_e": _num(best.delta_e)}
    cap = cfg.calibration.til_cap if args.til_cap is None else args.til_cap
    out["til_cap_pct"] = _num(cap)
    return out


# ---------------------------------------------------------------------------
# elevator study

STUDY_COLUMNS = ("U", "delta_e", "power_kW", "rotor_load_kN", "TIL_pct", "reduction_pct",
                 "failed")


def cmd_elevator_study(args, cfg, out: Path):
    speeds = _speeds(args)
    grid = _floats(args.de_grid, "elevator grid")
    if any(not strategy.DOMAIN[0] <= d <= strategy.DOMAIN[1] for d in grid):
        raise UsageError(f"elevator grid must lie within {list(strategy.DOMAIN)} deg")
    grid = sorted(set(grid), reverse=True)
    rows, reports, failed = [], [], 0
    for U in speeds:
        try:
            ref = trim.trim(U, "STrim", cfg=cfg)
        except trim.TrimError as exc:
            log.error("STrim reference failed at %g m/s: %s", U, exc)
            failed += len(grid)
            rows += [dict(U=U, delta_e=d, failed=True) for d in grid]
            continue
        probe = strategy.TrimProbe(U, "HTrim", ref, cfg)
        samples = []
        for d in grid:
            try:
                s = probe.solve(d)
            except trim.TrimError as exc:
                log.error("trim failed at %g m/s, %g deg: %s", U, d, exc)
                failed += 1
                rows.append(dict(U=U, delta_e=d, failed=True))
                continue
            row = dict(U=U, delta_e=d, power_kW=s.power / 1e3, rotor_load_kN=s.rotor_load / 1e3,
                       TIL_pct=strategy.til_from_loads(s.rotor_load, ref.rotor_load),
                       reduction_pct=(1.0 - s.power / ref.power) * 100.0, failed=False)
            rows.append(row)
            samples.append(row)
        if samples:
            rep = strategy.check_properties([r["delta_e"] for r in samples],
                                            [r["rotor_load_kN"] for r in samples],
                                            [r["TIL_pct"] for r in samples],
                                            [r["power_kW"] for r in samples], U)
            reports.append({"U": _num(U), "load_monotone": rep.load_monotone,
                            "til_monotone": rep.til_monotone,
                            "power_unimodal": rep.power_unimodal,
                            "turning_point": _num(rep.turning_point),
                            "violations": rep.violations})
    nan = float("nan")
    table = _csv(STUDY_COLUMNS, [[r.get(c, nan) for c in STUDY_COLUMNS] for r in rows])
    _write(out / "elevator_study.csv", table)
    _write(out / "elevator_properties.json",
           json.dumps({"grid": [_num(d) for d in grid], "reports": reports}, indent=2) + "\n")
    if not args.no_figures:
        report.elevator_study(rows, out / "elevator_study.png")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# distribution

DIST_COLUMNS = ("component", "Fx_N", "Fy_N", "Fz_N", "Mx_Nm", "My_Nm", "Mz_Nm")


def cmd_distribution(args, cfg, out: Path):
    U = args.speed
    if not 0.0 <= U <= 100.0:
        raise UsageError("speed must lie within [0, 100] m/s")
    grid = _floats(args.de_grid, "elevator grid")
    lo, hi = trim.CONTROL_BOUNDS["delta_e"]
    if any(not lo <= d <= hi for d in grid):
        raise UsageError(f"elevator grid must lie within [{lo}, {hi}] deg")
    grid = sorted(set(grid), reverse=True)
    try:
        ref = trim.trim(U, "STrim", cfg=cfg)
    except trim.TrimError as exc:
        print(f"cch-trim: STrim trim failed at {U:g} m/s: {exc}", file=sys.stderr)
        return 1
    probe = strategy.TrimProbe(U, "HTrim", ref, cfg)
    breakdowns, failed, long_rows = {}, 0, []
    for d in grid:
        try:
            s = probe.solve(d)
        except trim.TrimError as exc:
            log.error("trim failed at %g deg: %s", d, exc)
            failed += 1
            long_rows.append([d, "failed"] + [float("nan")] * 6)
            continue
        breakdowns[d] = s.loads
        rows = s.loads.rows()
        _write(out / f"distribution_U{U:g}_de{d:g}.csv", _csv(DIST_COLUMNS, rows))
        long_rows += [[d, *r] for r in rows]
    _write(out / f"distribution_U{U:g}.csv", _csv(("delta_e",) + DIST_COLUMNS, long_rows))
    if breakdowns and not args.no_figures:
        report.distribution(breakdowns, out / f"distribution_U{U:g}.png", U)
    return 1 if failed else 0


# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"TOML configuration (falls back to ${ENV_CONFIG})")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--vmin", type=float, default=0.0)
    common.add_argument("--vmax", type=float, default=100.0)
    common.add_argument("--dv", type=float, default=5.0)
    common.add_argument("--strategies", default=",".join(trim.STRATEGIES))
    common.add_argument("--til-cap", type=float, default=None,
                        help="HTrim rotor load increase limit in percent")
    common.add_argument("--de-grid", default=DEFAULT_DE_GRID,
                        help="comma-separated elevator angles (deg)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="cch-trim",
                                 description="Trim and elevator allocation for a coaxial "
                                             "compound helicopter")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="speed sweeps for the trim strategies")
    st = sub.add_parser("elevator-study", parents=[common],
                        help="power and rotor load against elevator angle")
    st.add_argument("--speeds", help="comma-separated airspeeds; overrides --vmin/--vmax/--dv")
    d = sub.add_parser("distribution", parents=[common],
                       help="component loads against elevator angle at one speed")
    d.add_argument("--speed", type=float, default=70.0)
    return ap


COMMANDS = {"sweep": cmd_sweep, "elevator-study": cmd_elevator_study,
            "distribution": cmd_distribution}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.workers < 1:
        ap.error("--workers must be at least 1")
    if args.til_cap is not None and not args.til_cap > 0:
        ap.error("--til-cap must be positive")
    try:
        cfg = _config(args.config)
    except (ConfigError, ValidationError, OSError) as exc:
        print(f"cch-trim: configuration error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cch-trim: cannot create {out}: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, cfg, out)
    except UsageError as exc:
        ap.error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
