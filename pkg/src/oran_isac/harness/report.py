"""Deterministic report files: JSON lines per occasion, CSV tables."""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

from .engine import RunReport

FORMATS = ("jsonl", "csv")

OCCASION_COLUMNS = ("occasion_id", "signal_type", "n_subcarriers", "n_symbols", "beams",
                    "n_detections", "n_matched", "false_alarms", "fronthaul_bits",
                    "papr_db", "mean_peak_snr", "quality_below_target", "suspected_spoof",
                    "integrity_failure", "commands", "status", "attack_kind",
                    "fake_target_detected", "attacker_access", "attacker_map_nmse")


class ReportError(OSError):
    pass


def json_safe(value):
    """Replace non-finite floats by ``None`` so the output is strict JSON."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return str(v)


def write_table(rows: Iterable[dict], path: str | Path, columns: Sequence[str]) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_cell(r.get(c)) for c in columns])
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def occasion_row(rec: dict) -> dict:
    q, fl, a = rec["quality"] or {}, rec["flags"] or {}, rec["attack"] or {}
    return {
        "occasion_id": rec["occasion_id"], "signal_type": rec["signal_type"],
        "n_subcarriers": rec["n_subcarriers"], "n_symbols": rec["n_symbols"],
        "beams": rec["beams"], "n_detections": len(rec["detections"]),
        "n_matched": len(rec["matched"]), "false_alarms": rec["false_alarms"],
        "fronthaul_bits": rec["fronthaul_bits"], "papr_db": rec["papr_db"],
        "mean_peak_snr": q.get("mean_peak_snr"),
        "quality_below_target": q.get("quality_below_target"),
        "suspected_spoof": fl.get("suspected_spoof"),
        "integrity_failure": fl.get("integrity_failure"),
        "commands": [c["kind"] for c in rec["commands"]], "status": rec["status"],
        "attack_kind": a.get("kind"), "fake_target_detected": a.get("fake_target_detected"),
        "attacker_access": a.get("access"), "attacker_map_nmse": a.get("attacker_map_nmse"),
    }


def aggregate_columns(report: RunReport) -> list[str]:
    return ["scenario_id", "master_seed", *report.aggregate]


def emit_reports(report: RunReport, out_dir: str | Path,
                 formats: Iterable[str] = FORMATS) -> list[Path]:
    """Write ``run.jsonl`` and/or ``aggregate.csv`` plus ``occasions.csv``."""
    formats = list(formats)
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ValueError(f"unknown report format(s) {bad}; choose from {FORMATS}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {out}: {exc.strerror}") from exc
    written = []
    if "jsonl" in formats:
        path = out / "run.jsonl"
        try:
            with path.open("w") as f:
                for rec in report.records:
                    line = {"scenario_id": report.scenario_id, "master_seed": report.master_seed,
                            **rec}
                    f.write(json.dumps(json_safe(line), sort_keys=True, allow_nan=False) + "\n")
        except OSError as exc:
            raise ReportError(f"cannot write {path}: {exc.strerror}") from exc
        written.append(path)
    if "csv" in formats:
        cols = aggregate_columns(report)
        rows = []
        if report.records:
            rows = [{"scenario_id": report.scenario_id, "master_seed": report.master_seed,
                     **report.aggregate}]
        written.append(write_table(rows, out / "aggregate.csv", cols))
        written.append(write_table([occasion_row(r) for r in report.records],
                                   out / "occasions.csv", OCCASION_COLUMNS))
    return written
