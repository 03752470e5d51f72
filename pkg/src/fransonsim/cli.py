"""Command-line driver: scan, accidentals, analyze, envelope.

Every command is deterministic under a fixed seed: output files carry
no timestamps or absolute paths, so re-running a command with the same
scenario and seed reproduces them byte for byte.  Exit codes: 0 ok,
2 validation or input error, 3 fit failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    accidental_rate_estimate,
    bell_report,
    fit_envelope,
    fit_fringe,
    fourier_significant_frequencies_xy,
    subtract_accidentals_xy,
    fit_fringe_xy,
)
from .errors import FitError, InsufficientDataError, ScenarioError
from .model import PhaseSetting
from .montecarlo import measure_accidentals, run_scan
from .rngstreams import stream_key
from .scenario import Scenario, bundled_scenario_path, load_scenario

SCAN_COLUMNS = ("point_index", "phase_rad", "duration_s", "singles1", "singles2",
                "coincidences", "histogram_file")
NET_COLUMNS = ("point_index", "phase_rad", "net_coincidences")
HIST_COLUMNS = ("bin_center_ps", "count")


def _versions() -> dict:
    import numba
    import scipy
    return {"fransonsim": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _resolve_scenario(name_or_path: str) -> Scenario:
    path = Path(name_or_path)
    if path.exists():
        return load_scenario(path)
    if path.suffix == "" and os.sep not in name_or_path:
        return load_scenario(bundled_scenario_path(name_or_path))
    raise ScenarioError(f"scenario file not found: {name_or_path}")


def _out_prefix(out: str | None, default: str) -> Path:
    prefix = Path(out) if out else Path(default)
    if not prefix.is_absolute():
        base = os.environ.get("FRANSONSIM_OUTDIR")
        if base:
            prefix = Path(base) / prefix
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    return prefix


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _scan_phases(scenario: Scenario, points: int, mismatch_um: float):
    if points < 1:
        raise ScenarioError(f"scan needs at least one point, got {points}")
    base1 = scenario.interferometer1.phase_rad
    base2 = scenario.interferometer2.phase_rad
    step = 2.0 * math.pi / points
    return [PhaseSetting(base1, base2 + i * step, mismatch_um) for i in range(points)]


def _run_and_write_scan(scenario: Scenario, prefix: Path, points: int, duration: float,
                        seed: int, workers, hist_bin_ps: float, mismatch_um: float):
    phases = _scan_phases(scenario, points, mismatch_um)
    records = run_scan(scenario, phases, duration, seed, workers=workers,
                       histogram_bin_ps=hist_bin_ps)
    rows = []
    hist_files = []
    for i, rec in enumerate(records):
        hist_name = f"{prefix.name}_hist_{i:03d}.csv"
        _write_csv(prefix.parent / hist_name, HIST_COLUMNS,
                   zip(rec.histogram_centers_ps.astype(int).tolist(),
                       rec.histogram_counts.tolist()))
        hist_files.append(hist_name)
        rows.append((i, rec.phase.phase_sum_rad, rec.duration_s, rec.singles1,
                     rec.singles2, rec.windowed_coincidences, hist_name))
    scan_path = prefix.parent / f"{prefix.name}_scan.csv"
    _write_csv(scan_path, SCAN_COLUMNS, rows)
    return records, scan_path, hist_files


def cmd_scan(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    prefix = _out_prefix(args.out, f"{scenario.name}")
    records, scan_path, hist_files = _run_and_write_scan(
        scenario, prefix, args.points, args.duration, args.seed, args.workers,
        args.hist_bin_ps, args.mismatch_um)
    manifest = {
        "command": "scan",
        "scenario_name": scenario.name,
        "scenario_sha256": scenario.sha256(),
        "seed": args.seed,
        "points": args.points,
        "duration_s": args.duration,
        "histogram_bin_ps": args.hist_bin_ps,
        "mismatch_um": args.mismatch_um,
        "phase1_rad": scenario.interferometer1.phase_rad,
        "phase2_base_rad": scenario.interferometer2.phase_rad,
        "phase2_step_rad": 2.0 * math.pi / args.points,
        "outputs": [scan_path.name] + hist_files,
        "versions": _versions(),
    }
    manifest_path = prefix.parent / f"{prefix.name}_manifest.json"
    _write_json(manifest_path, manifest)
    mean_singles1 = sum(r.singles1 for r in records) / len(records) / args.duration
    mean_singles2 = sum(r.singles2 for r in records) / len(records) / args.duration
    print(f"scan: {args.points} points x {args.duration} s, seed {args.seed}")
    print(f"  mean singles {mean_singles1:.0f} / {mean_singles2:.0f} Hz, "
          f"windowed coincidences per point "
          f"{sum(r.windowed_coincidences for r in records) / len(records):.1f}")
    print(f"  wrote {scan_path} (+{len(hist_files)} histograms) and {manifest_path}")
    return 0


def cmd_accidentals(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    prefix = _out_prefix(args.out, f"{scenario.name}")
    record = measure_accidentals(scenario, args.duration, args.seed, full_record=True)
    count = record.offwindow_coincidences
    payload = {
        "command": "accidentals",
        "scenario_name": scenario.name,
        "scenario_sha256": scenario.sha256(),
        "seed": args.seed,
        "duration_s": args.duration,
        "window_ps": scenario.electronics.window_ps,
        "accidental_delay_ns": scenario.electronics.accidental_delay_ns,
        "count": count,
        "rate_hz": count / args.duration,
        "singles1_rate_hz": record.singles1_rate_hz,
        "singles2_rate_hz": record.singles2_rate_hz,
        "flat_background_bound_hz": accidental_rate_estimate(
            record.singles1_rate_hz, record.singles2_rate_hz,
            scenario.electronics.window_ps),
        "versions": _versions(),
    }
    out_path = prefix.parent / f"{prefix.name}_accidentals.json"
    _write_json(out_path, payload)
    print(f"accidentals: {count} in {args.duration} s "
          f"({count / args.duration:.2f} /s), wrote {out_path}")
    return 0


def _read_scan_csv(path: Path):
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise ScenarioError(f"cannot read scan file {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ScenarioError(f"{path}:1: empty scan file") from None
        if tuple(header) != SCAN_COLUMNS:
            raise ScenarioError(
                f"{path}:1: expected columns {','.join(SCAN_COLUMNS)}, "
                f"got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(SCAN_COLUMNS):
                raise ScenarioError(f"{path}:{lineno}: expected "
                                    f"{len(SCAN_COLUMNS)} columns, got {len(row)}")
            try:
                rows.append((int(row[0]), float(row[1]), float(row[2]),
                             int(row[3]), int(row[4]), int(row[5])))
            except ValueError as exc:
                raise ScenarioError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ScenarioError(f"{path}: no data rows")
    return rows


def _read_accidentals_json(path: Path) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"cannot read accidentals file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON: {exc}") from None
    for key in ("count", "duration_s"):
        if key not in payload:
            raise ScenarioError(f"{path}: missing key {key!r}")
    if payload["count"] < 0 or payload["duration_s"] <= 0:
        raise ScenarioError(f"{path}: count must be >= 0 and duration_s > 0")
    return payload


def cmd_analyze(args) -> int:
    scan_path = Path(args.scan)
    rows = _read_scan_csv(scan_path)
    acc = _read_accidentals_json(Path(args.accidentals))
    durations = {r[2] for r in rows}
    if len(durations) != 1:
        raise ScenarioError(f"{scan_path}: mixed point durations {sorted(durations)}; "
                            "cannot scale the accidental level")
    point_duration = durations.pop()
    scale = point_duration / acc["duration_s"]
    acc_per_point = acc["count"] * scale
    acc_sigma = math.sqrt(acc["count"]) * scale

    phases = np.array([r[1] for r in rows])
    counts = np.array([r[5] for r in rows], dtype=float)
    raw_fit = fit_fringe_xy(phases, counts)
    harmonics = fourier_significant_frequencies_xy(phases, counts)
    net_counts, net_fit = subtract_accidentals_xy(phases, counts, acc_per_point,
                                                  acc_sigma)
    report = bell_report(raw_fit, net_fit, acc_per_point)

    default_stem = scan_path.name[:-len("_scan.csv")] if scan_path.name.endswith(
        "_scan.csv") else scan_path.stem
    prefix = _out_prefix(args.out, default_stem)
    report_path = prefix.parent / f"{prefix.name}_report.json"
    _write_json(report_path, report.as_dict())
    net_path = prefix.parent / f"{prefix.name}_net.csv"
    _write_csv(net_path, NET_COLUMNS,
               [(r[0], r[1], float(net)) for r, net in zip(rows, net_counts)])
    print(f"analyze: raw V = {report.raw_visibility:.4f} ± "
          f"{report.raw_visibility_sigma:.4f}, net V = {report.net_visibility:.4f} ± "
          f"{report.net_visibility_sigma:.4f}")
    print(f"  accidentals per point {acc_per_point:.1f}, significant harmonics "
          f"{len(harmonics)}, violation {report.sigma_violation:.2f} sigma")
    print(f"  wrote {report_path} and {net_path}")
    return 0


def _parse_mismatch_list(text: str):
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ScenarioError(f"bad mismatch list {text!r}; expected comma-separated "
                            "micrometre values") from None
    if not values:
        raise ScenarioError("mismatch list is empty")
    if any(v < 0 for v in values):
        raise ScenarioError("mismatches must be non-negative")
    return values


def cmd_envelope(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    mismatches = _parse_mismatch_list(args.mismatch_list)
    prefix = _out_prefix(args.out, f"{scenario.name}")
    per_mismatch = []
    for m_idx, mismatch in enumerate(mismatches):
        phases = _scan_phases(scenario, args.points, mismatch)
        records = run_scan(scenario, phases, args.duration,
                           stream_key(args.seed, "mismatch", m_idx),
                           workers=args.workers)
        fit = fit_fringe(records)
        per_mismatch.append({"mismatch_um": mismatch, "visibility": fit.visibility,
                             "visibility_sigma": fit.visibility_sigma})
    csv_path = prefix.parent / f"{prefix.name}_envelope.csv"
    _write_csv(csv_path, ("mismatch_um", "visibility", "visibility_sigma"),
               [(p["mismatch_um"], p["visibility"], p["visibility_sigma"])
                for p in per_mismatch])
    print(f"envelope: fitted {len(per_mismatch)} mismatch points, wrote {csv_path}")
    env = fit_envelope([p["mismatch_um"] for p in per_mismatch],
                       [p["visibility"] for p in per_mismatch],
                       [p["visibility_sigma"] for p in per_mismatch],
                       scenario.spectral.center_wavelength_nm)
    payload = {
        "command": "envelope",
        "scenario_name": scenario.name,
        "scenario_sha256": scenario.sha256(),
        "seed": args.seed,
        "points": args.points,
        "duration_s": args.duration,
        "per_mismatch": per_mismatch,
        "peak_visibility": env.peak_visibility,
        "peak_visibility_sigma": env.peak_visibility_sigma,
        "coherence_length_um": env.coherence_length_um,
        "coherence_length_sigma_um": env.coherence_length_sigma_um,
        "half_visibility_mismatch_um": env.half_visibility_mismatch_um,
        "chi_square_per_dof": env.chi_square_per_dof,
        "versions": _versions(),
    }
    json_path = prefix.parent / f"{prefix.name}_envelope.json"
    _write_json(json_path, payload)
    print(f"  L_c = {env.coherence_length_um:.2f} ± "
          f"{env.coherence_length_sigma_um:.2f} um, half visibility at "
          f"{env.half_visibility_mismatch_um:.1f} um, wrote {json_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fransonsim",
        description="Simulate and analyze a long-distance energy-time Bell test.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, scenario=True):
        if scenario:
            p.add_argument("scenario",
                           help="scenario file path, or the name of a bundled "
                                "scenario such as 'geneva1998'")
        p.add_argument("--seed", type=int, default=1, help="global random seed")
        p.add_argument("--out", help="output path prefix (files get suffixes); "
                                     "relative prefixes live under $FRANSONSIM_OUTDIR")

    p = sub.add_parser("scan", help="phase scan of windowed coincidences")
    add_common(p)
    p.add_argument("--points", type=int, default=25, help="phase points over 2 pi")
    p.add_argument("--duration", type=float, default=20.0, help="seconds per point")
    p.add_argument("--workers", type=int, default=None, help="parallel point workers")
    p.add_argument("--hist-bin-ps", type=float, default=100.0,
                   help="histogram bin width in ps")
    p.add_argument("--mismatch-um", type=float, default=0.0,
                   help="arm-length mismatch between the analyzers")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("accidentals", help="measure the flat background in the "
                                           "delayed window")
    add_common(p)
    p.add_argument("--duration", type=float, default=20.0, help="seconds")
    p.set_defaults(func=cmd_accidentals)

    p = sub.add_parser("analyze", help="fit a scan and report the Bell verdict")
    add_common(p, scenario=False)
    p.add_argument("--scan", required=True, help="scan CSV from the scan command")
    p.add_argument("--accidentals", required=True,
                   help="accidentals JSON from the accidentals command")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("envelope", help="visibility versus arm mismatch and the "
                                        "coherence-length fit")
    add_common(p)
    p.add_argument("--mismatch-list", default="0,10,20,30,40,50",
                   help="comma-separated mismatches in micrometres")
    p.add_argument("--points", type=int, default=25, help="phase points per mismatch")
    p.add_argument("--duration", type=float, default=20.0, help="seconds per point")
    p.add_argument("--workers", type=int, default=None, help="parallel point workers")
    p.set_defaults(func=cmd_envelope)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FitError as exc:  # includes InsufficientDataError
        print(f"fit error: {exc}", file=sys.stderr)
        if getattr(exc, "diagnostics", None):
            print(f"  diagnostics: {exc.diagnostics}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
