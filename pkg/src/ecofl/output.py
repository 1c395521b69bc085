"""Run outputs: metrics CSV, JSON summary, manifest, and suite tables.

Numbers are written with 9 significant digits through ``format`` (never
locale-aware), so fixed inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from pathlib import Path

from .engine import CSV_COLUMNS, RunResult, SuiteResult


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".9g")


def _round9(v):
    """JSON-friendly value: 9 significant digits, non-finite as null."""
    if isinstance(v, dict):
        return {k: _round9(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_round9(x) for x in v]
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return v
    v = float(v)
    return float(format(v, ".9g")) if math.isfinite(v) else None


def metrics_csv(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for m in result.metrics:
        w.writerow([fmt(getattr(m, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_metrics_csv(text: str) -> list[dict[str, float]]:
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]


def summary_json(result: RunResult) -> str:
    data = result.summary()
    data["fl_rounds"] = [dataclasses.asdict(r) for r in result.rounds]
    return json.dumps(_round9(data), indent=2, sort_keys=True) + "\n"


def manifest_json(manifest: dict) -> str:
    return json.dumps(_round9(manifest), indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str):
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_outputs(result: RunResult, manifest: dict, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    paths = {"run": out / "run.csv", "summary": out / "summary.json", "manifest": out / "manifest.json"}
    manifest = dict(manifest, outputs={k: str(p) for k, p in paths.items()})
    _write(paths["run"], metrics_csv(result))
    _write(paths["summary"], summary_json(result))
    _write(paths["manifest"], manifest_json(manifest))
    return paths


def _table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(rows[0].keys())
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r.values()])
    return buf.getvalue()


def emit_suite(suite: SuiteResult, manifest: dict, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outage, power = suite.outage_table(), suite.power_table()
    paths = {
        "outage": out / "suite_outage.csv",
        "power": out / "suite_power.csv",
        "report": out / "suite_report.json",
        "manifest": out / "manifest.json",
    }
    report = {
        "seeds": suite.seeds,
        "mean_outage_rate_embb": suite.mean_by_mode("outage_rate_embb"),
        "mean_outage_rate_voice": suite.mean_by_mode("outage_rate_voice"),
        "mean_outage_rate_total": suite.mean_by_mode("outage_rate_total"),
        "mean_power_reduction": sum(r["power_reduction"] for r in power) / len(power),
        "mean_ecofl_eta_ee": sum(r["ecofl_eta_ee"] for r in power) / len(power),
        "mean_baseline_eta_ee": sum(r["baseline_eta_ee"] for r in power) / len(power),
    }
    _write(paths["outage"], _table_csv(outage))
    _write(paths["power"], _table_csv(power))
    _write(paths["report"], json.dumps(_round9(report), indent=2, sort_keys=True) + "\n")
    _write(paths["manifest"], manifest_json(dict(manifest, outputs={k: str(p) for k, p in paths.items()})))
    return paths
