"""Command-line front end: simulate, fit, gear-check, report, presets.

Exit codes: 0 success, 2 usage, 3 config error, 4 data error, 5 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, load_preset, preset_names, preset_text
from .detector_sim import (CountRecord, mean_rate, read_record, simulate_chirp, simulate_sweep,
                           write_record)
from .estimation import (AlignmentError, DegenerateGridError, FitFailedError, FitReport,
                         IllConditionedError, analyze_sweep, count_maxima, fit_chirp)
from .estimation.uncertainty import angle_spread, klyshko_efficiency, matched_heisenberg_deg
from .gear_optics import GeometryError, convergence_study, dump_field, run_gear
from .models import FringeModel

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4, 5


class DataError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    config_sha256: str | None
    seed: int | None
    outputs: list[str] = field(default_factory=list)
    tool_version: str = __version__
    duration_s: float = 0.0

    def write(self, out_dir: Path, name: str) -> Path:
        path = out_dir / name
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def _resolve_config(args) -> RunConfig:
    if args.preset and args.config:
        raise ConfigError("give either --preset or --config, not both")
    if args.preset:
        return load_preset(args.preset)
    if args.config:
        return load_config(args.config)
    raise ConfigError("need --preset or --config")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg = _resolve_config(args)
    if cfg.kind == "gear":
        raise ConfigError("simulate needs a sweep or chirp config; use gear-check for gear configs")
    exp = cfg.experiment(seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_name = "manifest_simulate.json"
    if cfg.kind == "sweep":
        records = simulate_sweep(exp, cfg.angles(), cfg.sweep_offset())
    else:
        chirp = cfg.chirp()
        records = [simulate_chirp(exp, chirp, run_index=m) for m in range(exp.repeats)]
    outputs = []
    for rec in records:
        rec.extra["preset"] = cfg.name
        path = write_record(rec, out / f"{cfg.name}_run{rec.run_index:03d}.csv", manifest=manifest_name)
        outputs += [path.name, path.with_suffix(".json").name]
    man = RunManifest("simulate", cfg.source, cfg.sha256, exp.rng_seed, outputs)
    man.duration_s = time.perf_counter() - t0
    man.write(out, manifest_name)
    print(f"wrote {len(records)} {cfg.kind} record(s) for {cfg.name} to {out}")
    return EXIT_OK


def _collect_records(paths) -> list[CountRecord]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(f for f in p.glob("*.csv") if f.with_suffix(".json").exists()
                            and _is_record(f))
        else:
            files.append(p)
    if not files:
        raise DataError("no record files found")
    records = []
    for f in files:
        try:
            records.append(read_record(f))
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"{f}: {exc}") from exc
    return records


def _is_record(path: Path) -> bool:
    with open(path) as fh:
        return fh.readline().strip() == "abscissa,coincidences,singles1,singles2"


def _label(records: list[CountRecord]) -> str:
    label = records[0].extra.get("preset")
    if label:
        return str(label)
    return f"N{records[0].config.get('N', 2)}_l{records[0].config.get('ell', 1)}"


def _fit_fringe_mode(records, N, ell, out: Path, label: str) -> tuple[list[str], str]:
    an = analyze_sweep(records, N, ell, drop_failed=True)
    for i in an.alignment.failed:
        print(f"run {records[i].run_index}: alignment failed (correlation peak below threshold)",
              file=sys.stderr)
    acq = records[0].config.get("acquisition_time")
    fit = an.fit
    counts = np.array([r.coincidences for r in an.alignment.aligned], dtype=float)
    curve = an.curve
    fit.extra.update({
        "label": label,
        "manifest": f"manifest_fit_{label}.json",
        "acquisition_time": acq,
        "data": {"theta_deg": an.alignment.aligned[0].abscissa.tolist(),
                 "mean": counts.mean(axis=0).tolist(),
                 "std": (angle_spread(an.alignment.aligned, fit.model) if len(counts) > 1
                         else np.zeros(counts.shape[1])).tolist()},
        "uncertainty": {"theta_deg": curve.angles.tolist(), "poisson": curve.poisson.tolist(),
                        "measured": None if curve.measured is None else curve.measured.tolist(),
                        "excluded": curve.excluded.tolist(),
                        "min_poisson_deg": curve.min_poisson,
                        "min_measured_deg": curve.min_measured},
        "alignment": {"lags": an.alignment.lags.tolist(),
                      "phase_shifts_deg": an.alignment.phase_shifts.tolist(),
                      "failed_runs": [records[i].run_index for i in an.alignment.failed]},
        "mean_rate_hz": mean_rate(an.alignment.aligned),
        "max_rate_hz": (fit.model.A + fit.model.B) / acq if acq else None,
        "heisenberg_matched_deg": matched_heisenberg_deg(fit.model),
    })
    s = records[0].config.get("singles_rates") or [0, 0]
    if min(s) > 0 and acq:
        fit.extra["klyshko_efficiency"] = klyshko_efficiency(fit.extra["max_rate_hz"], *s)
    fit_path = out / f"fit_{label}.json"
    fit_path.write_text(fit.to_json())
    unc_path = out / f"uncertainty_{label}.csv"
    curve.write_csv(unc_path)
    msg = (f"{label}: visibility {fit.visibility:.4f} +/- {fit.visibility_err:.4f}; "
           f"mean rate {fit.extra['mean_rate_hz']:.1f} /s; "
           f"A={fit.model.A:.2f} B={fit.model.B:.2f} C={fit.model.C:.3f} deg; "
           f"min dtheta poisson {curve.min_poisson:.4g} deg")
    if curve.min_measured is not None:
        msg += f", measured {curve.min_measured:.4g} deg"
    return [fit_path.name, unc_path.name], msg


def _fit_chirp_mode(records, N, ell, out: Path, label: str) -> tuple[list[str], str]:
    fits, lines = [], []
    for rec in records:
        f = fit_chirp(rec, N, ell)
        f.extra.update({"label": label, "run_index": rec.run_index,
                        "manifest": f"manifest_fit_{label}.json",
                        "data": {"t_s": rec.abscissa.tolist(),
                                 "coincidences": rec.coincidences.tolist()}})
        fits.append(f)
        lines.append(f"{label} run {rec.run_index}: acceleration "
                     f"{f.extra['acceleration_deg_s2']:.4f} +/- "
                     f"{f.extra['acceleration_err_deg_s2']:.4f} deg/s^2")
    names = []
    for f in fits:
        p = out / f"fit_{label}_run{f.extra['run_index']:03d}.json"
        p.write_text(f.to_json())
        names.append(p.name)
    return names, "\n".join(lines)


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    records = _collect_records(args.records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    N = args.N if args.N is not None else int(records[0].config.get("N", 2))
    ell = args.ell if args.ell is not None else int(records[0].config.get("ell", 1))
    label = args.label or _label(records)
    kinds = {r.kind for r in records}
    want = "angle_deg" if args.mode == "fringe" else "time_s"
    if kinds != {want}:
        raise DataError(f"{args.mode} mode needs {want} records, got {sorted(kinds)}")
    if args.mode == "fringe":
        outputs, msg = _fit_fringe_mode(records, N, ell, out, label)
    else:
        outputs, msg = _fit_chirp_mode(records, N, ell, out, label)
    print(msg)
    man = RunManifest("fit", None, None, records[0].config.get("rng_seed"), outputs)
    man.duration_s = time.perf_counter() - t0
    man.write(out, f"manifest_fit_{label}.json")
    return EXIT_OK


def cmd_gear_check(args) -> int:
    t0 = time.perf_counter()
    cfg = _resolve_config(args)
    if cfg.kind != "gear":
        raise ConfigError("gear-check needs a gear config")
    geom = cfg.gear()
    thetas = args.theta if args.theta else cfg.gear_thetas_deg()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for th in thetas:
        rep, ref, psi2 = run_gear(geom, math.radians(th))
        rows.append({"theta_deg": th, **rep.to_dict()})
        if args.dump_fields:
            dump_field(ref, out / f"psi0_theta{th:g}.fgrd")
            dump_field(psi2, out / f"psi2_theta{th:g}.fgrd")
    result = {"preset": cfg.name, "ell": geom.ell, "distance_m": geom.distance,
              "offset_m": list(geom.offset), "grid_n": geom.grid.n, "reports": rows,
              "manifest": f"manifest_gear_{cfg.name}.json"}
    if geom.distance > 0 and not args.no_convergence:
        sizes = tuple(cfg.raw["gear"].get("convergence_sizes", (512, 1024, 2048)))
        result["convergence"] = convergence_study(geom, math.radians(thetas[-1]), sizes)
    path = out / f"gear_{cfg.name}.json"
    path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    for r in rows:
        print(f"theta {r['theta_deg']:g} deg: residual mean {r['residual_mean']:.3e} rad, "
              f"std {r['residual_std']:.3e} rad")
    if "convergence" in result:
        c = result["convergence"]
        print(f"convergence over n={c['sizes']}: {'ok' if c['converged'] else 'NOT converged'}")
    man = RunManifest("gear-check", cfg.source, cfg.sha256, None, [path.name])
    man.duration_s = time.perf_counter() - t0
    man.write(out, f"manifest_gear_{cfg.name}.json")
    return EXIT_OK


def _load_fit(path) -> FitReport:
    try:
        return FitReport.from_dict(json.loads(Path(path).read_text()))
    except (OSError, KeyError, TypeError, json.JSONDecodeError, ValueError) as exc:
        raise DataError(f"{path}: not a fit report ({exc})") from exc


def cmd_report(args) -> int:
    if not args.fits:
        raise DataError("no fit reports given")
    fits = [_load_fit(p) for p in args.fits]
    kinds = {f.kind for f in fits}
    if len(kinds) != 1:
        raise DataError(f"cannot mix fit kinds {sorted(kinds)} in one report")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary, outputs, used = [], [], set()
    for i, f in enumerate(fits):
        label = str(f.extra.get("label", f"fit{i}"))
        if label in used:
            label = f"{label}_{i}"
        used.add(label)
        if f.kind == "fringe":
            m: FringeModel = f.model
            theta = np.arange(36000) * 0.01
            curve = m.rate(theta)
            p = out / f"fringe_{label}.csv"
            _write_csv(p, ("theta_deg", "model_counts"), zip(theta, curve))
            outputs.append(p.name)
            data = f.extra.get("data")
            if data:
                p = out / f"fringe_data_{label}.csv"
                _write_csv(p, ("theta_deg", "mean_counts", "std_counts"),
                           zip(data["theta_deg"], data["mean"], data["std"]))
                outputs.append(p.name)
            unc = f.extra.get("uncertainty")
            if unc:
                p = out / f"uncertainty_{label}.csv"
                meas = unc["measured"] or [None] * len(unc["theta_deg"])
                rows = [(th, "" if me is None else me, po)
                        for th, me, po, ex in zip(unc["theta_deg"], meas, unc["poisson"], unc["excluded"])
                        if not ex]
                _write_csv(p, ("theta_deg", "dtheta_measured_deg", "dtheta_poisson_deg"), rows)
                outputs.append(p.name)
            summary.append({"label": label, "N": m.N, "ell": m.ell, "visibility": f.visibility,
                            "maxima_per_turn": count_maxima(curve),
                            "min_dtheta_poisson_deg": unc and unc["min_poisson_deg"],
                            "min_dtheta_measured_deg": unc and unc["min_measured_deg"]})
        else:
            data = f.extra.get("data", {})
            t = np.asarray(data.get("t_s", np.linspace(0, f.model.T, 1001)), dtype=float)
            model_counts = f.model.rate(t, f.params["A"], f.params["B"])
            obs = data.get("coincidences", [""] * t.size)
            p = out / f"chirp_{label}.csv"
            _write_csv(p, ("t_s", "coincidences", "model_counts"), zip(t, obs, model_counts))
            outputs.append(p.name)
            summary.append({"label": label, "ell": f.model.ell,
                            "acceleration_deg_s2": f.extra.get("acceleration_deg_s2"),
                            "acceleration_err_deg_s2": f.extra.get("acceleration_err_deg_s2")})
    p = out / "summary.json"
    p.write_text(json.dumps({"manifest": "manifest_report.json", "series": summary},
                            indent=2, sort_keys=True) + "\n")
    outputs.append(p.name)
    for s in summary:
        print(json.dumps(s, sort_keys=True))
    man = RunManifest("report", None, None, None, outputs)
    man.write(out, "manifest_report.json")
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.action == "list":
        for name in preset_names():
            cfg = load_preset(name)
            print(f"{name}\t{cfg.kind}")
    else:
        if not args.name:
            raise ConfigError("presets show needs a preset name")
        sys.stdout.write(preset_text(args.name))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavegear", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"wavegear {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate count records from a config or preset")
    s.add_argument("--config")
    s.add_argument("--preset")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="align/fit/uncertainty (fringe) or chirp fit of records")
    f.add_argument("records", nargs="+", help="record CSV files or directories")
    f.add_argument("--mode", choices=("fringe", "chirp"), default="fringe")
    f.add_argument("--N", type=int)
    f.add_argument("--ell", type=int)
    f.add_argument("--label")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("gear-check", help="plate-propagate-plate residual phase check")
    g.add_argument("--config")
    g.add_argument("--preset")
    g.add_argument("--theta", type=float, nargs="+", help="rotation angles in degrees")
    g.add_argument("--dump-fields", action="store_true")
    g.add_argument("--no-convergence", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gear_check)

    r = sub.add_parser("report", help="plot-data CSVs from fit reports")
    r.add_argument("fits", nargs="*")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    pr = sub.add_parser("presets", help="list or show bundled presets")
    pr.add_argument("action", choices=("list", "show"))
    pr.add_argument("name", nargs="?")
    pr.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, AlignmentError, IllConditionedError, DegenerateGridError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GeometryError as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitFailedError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
