"""Report envelopes, deterministic JSON, atomic writes and CSV exports."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

PLOT_KINDS = ("torus", "actions", "deviation")


class MissingBlock(KeyError):
    """The report has no block for the requested plot data."""


@dataclass
class ReportEnvelope:
    tool: str
    version: str
    command: str
    config_hash: str
    results: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(b.get("passed", True) for b in self.results.values())

    def to_dict(self) -> dict:
        return {
            "tool": self.tool,
            "version": self.version,
            "command": self.command,
            "config_hash": self.config_hash,
            "status": "pass" if self.passed else "fail",
            "results": self.results,
            "warnings": list(self.warnings),
            "timing": self.timing,
        }


def clean(obj):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def dumps(obj) -> str:
    """Sorted keys, two-space indent, shortest round-trip floats."""
    return json.dumps(clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def without_timing(text: str) -> str:
    d = json.loads(text)
    d.pop("timing", None)
    return dumps(d)


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def plot_tables(report: dict, what: str) -> dict[str, str]:
    """CSV text per file name for one plot kind."""
    res = report.get("results", {})
    if what == "torus":
        ts = res.get("chart", {}).get("torus_samples")
        if ts is None:
            raise MissingBlock("report has no chart block with torus samples")
        return {"torus_samples.csv": _csv(ts["columns"], ts["rows"])}
    if what == "actions":
        prof = res.get("actions", {}).get("profile")
        if prof is None:
            raise MissingBlock("report has no actions block with a profile")
        return {"action_profile.csv": _csv(prof["columns"], prof["rows"])}
    if what == "deviation":
        block = res.get("conservation")
        if block is None:
            raise MissingBlock("report has no conservation block")
        out = {}
        grid = block["grid"]
        for t in block["tensors"]:
            dev = t.get("deviation_field")
            if dev is None:
                continue
            p = round(math.log(len(dev), grid)) if len(dev) > 1 else 1
            idx = np.indices((grid,) * p).reshape(p, -1).T
            rows = [[*(float(i) / grid for i in ij), float(v)] for ij, v in zip(idx, dev)]
            out[f"deviation_{t['tensor']}.csv"] = _csv([f"theta_{k + 1}" for k in range(p)] + ["deviation"], rows)
        if not out:
            raise MissingBlock("conservation block has no deviation fields")
        return out
    raise ValueError(f"unknown plot data kind '{what}' (choose from {', '.join(PLOT_KINDS)})")


def emit_plotdata(report: dict, what: str, out_dir: str) -> list[str]:
    written = []
    for name, text in sorted(plot_tables(report, what).items()):
        path = os.path.join(out_dir, name)
        atomic_write(path, text)
        written.append(path)
    return written
