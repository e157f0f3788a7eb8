"""Report assembly and persistence: a machine-readable JSON document, one
flat TSV table per decay check, and a human-readable summary.

File names are deterministic functions of the suite name and a hash of the
semantic config; writes are atomic (temp file + rename).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field

from . import __version__
from .config import ExperimentConfig, config_to_dict


@dataclass
class CheckRecord:
    name: str
    value: float
    threshold: float
    passed: bool
    runtime: float
    comparison: str = "<="        # how value relates to threshold
    details: dict = field(default_factory=dict)
    table: list | None = None     # rows (k, value, fit, residual) for decay checks


@dataclass
class Report:
    suite: str
    records: list
    environment: dict
    config: ExperimentConfig

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(path) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-report-")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write report file {path}: {exc}") from exc


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def emit_report(report: Report, out_dir: str) -> dict:
    """Write the report files; returns a dict of the paths written."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    h = config_hash(report.config)
    stem = f"{report.suite}-{h}"
    paths = {}

    doc = {
        "suite": report.suite,
        "overall": "pass" if report.passed else "fail",
        "config": config_to_dict(report.config),
        "environment": report.environment,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "checks": [
            {
                "name": r.name,
                "value": r.value,
                "threshold": r.threshold,
                "comparison": r.comparison,
                "passed": r.passed,
                "runtime_s": round(r.runtime, 3),
                "details": r.details,
            }
            for r in report.records
        ],
    }
    path = os.path.join(out_dir, f"{stem}.report.json")
    _atomic_write(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")
    paths["report"] = path

    for r in report.records:
        if not r.table:
            continue
        safe = r.name.replace("/", "-").replace(" ", "_")
        tpath = os.path.join(out_dir, f"{stem}-{safe}.tsv")
        lines = ["k\tvalue\tfit\tresidual"]
        for row in r.table:
            lines.append("\t".join(_fmt(x) for x in row))
        _atomic_write(tpath, "\n".join(lines) + "\n")
        paths.setdefault("tables", []).append(tpath)

    lines = [f"suite: {report.suite}",
             f"status: {'PASS' if report.passed else 'FAIL'}",
             ""]
    for r in report.records:
        mark = "PASS" if r.passed else "FAIL"
        lines.append(f"[{mark}] {r.name}: {r.value:.6g} {r.comparison} {r.threshold:.6g}"
                     f"  ({r.runtime:.2f}s)")
    spath = os.path.join(out_dir, f"{stem}.summary.txt")
    _atomic_write(spath, "\n".join(lines) + "\n")
    paths["summary"] = spath
    return paths


def environment_stamp(cfg: ExperimentConfig) -> dict:
    from .quantization import DEFAULT_TAIL

    return {
        "version": __version__,
        "model": {"kind": cfg.kind, **cfg.grid},
        "theta_tail": DEFAULT_TAIL,
        "seed": cfg.seed,
        "order": cfg.order,
    }
