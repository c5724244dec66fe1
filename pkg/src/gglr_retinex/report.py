"""Run report: per-solve records plus one summary block, as plain text.

Layout::

    # gglr-retinex report v1
    solve patch=<idx> row=<r> col=<c> outer=<k> kind=<reflectance|illumination> iterations=<int> residual=<float> converged=<0|1> kappa_before=<float|none> kappa_after=<float|none> wall_time=<float>
    ...
    [summary]
    key = value
    ...

One ``solve`` line per CG solve, ordered by patch index (row-major over the
patch grid) and then by execution order inside the patch. Floats are written
with ``repr`` so a report read back reproduces the exact values. Keys ending
in ``wall_time`` are the only run-to-run varying fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .retinex import EnhanceReport

HEADER = "# gglr-retinex report v1"
TIMING_KEYS = ("wall_time",)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(v: str):
    if v == "none":
        return None
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


@dataclass
class RunReport:
    records: List[Dict] = field(default_factory=list)
    summary: Dict = field(default_factory=dict)

    @classmethod
    def from_enhance(cls, rep: EnhanceReport, extra: Optional[Dict] = None) -> "RunReport":
        records = []
        for idx, patch in enumerate(rep.patches):
            outer = 0
            for kind, s in patch.reports:
                if kind == "reflectance":
                    outer += 1
                records.append({
                    "patch": idx,
                    "row": patch.origin[0],
                    "col": patch.origin[1],
                    "outer": outer,
                    "kind": kind,
                    "iterations": s.iterations,
                    "residual": float(s.final_relative_residual),
                    "converged": bool(s.converged),
                    "kappa_before": None if s.kappa_before is None else float(s.kappa_before),
                    "kappa_after": None if s.kappa_after is None else float(s.kappa_after),
                    "wall_time": float(s.wall_time),
                })
        summary = {
            "height": rep.height,
            "width": rep.width,
            "patches": len(rep.patches),
        }
        summary.update(aggregate(records))
        summary["wall_time"] = float(rep.wall_time)
        if extra:
            summary.update(extra)
        return cls(records, summary)

    def to_text(self) -> str:
        lines = [HEADER]
        for rec in self.records:
            lines.append("solve " + " ".join(f"{k}={_fmt(v)}" for k, v in rec.items()))
        lines.append("[summary]")
        for k, v in self.summary.items():
            lines.append(f"{k} = {_fmt(v)}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    def without_timings(self) -> "RunReport":
        strip = lambda d: {k: v for k, v in d.items() if not k.endswith(TIMING_KEYS)}
        return RunReport([strip(r) for r in self.records], strip(self.summary))


def aggregate(records: List[Dict]) -> Dict:
    def stats(key):
        vals = [r[key] for r in records if r[key] is not None]
        if not vals:
            return None, None
        return float(np.mean(vals)), float(np.max(vals))

    out = {
        "solves": len(records),
        "cg_iterations_total": int(sum(r["iterations"] for r in records)),
        "all_converged": all(r["converged"] for r in records),
    }
    for kind in ("reflectance", "illumination"):
        out[f"cg_iterations_{kind}"] = int(sum(r["iterations"] for r in records if r["kind"] == kind))
    out["kappa_before_mean"], out["kappa_before_max"] = stats("kappa_before")
    out["kappa_after_mean"], out["kappa_after_max"] = stats("kappa_after")
    out["solve_wall_time"] = float(sum(r["wall_time"] for r in records))
    return out


def read_report(path_or_text) -> RunReport:
    text = path_or_text
    if not isinstance(text, str) or not text.startswith(HEADER):
        text = Path(path_or_text).read_text()
    lines = text.splitlines()
    if not lines or lines[0] != HEADER:
        raise ValueError("not a gglr-retinex report")
    records, summary = [], {}
    in_summary = False
    for line in lines[1:]:
        if not line.strip():
            continue
        if line == "[summary]":
            in_summary = True
        elif in_summary:
            k, _, v = line.partition(" = ")
            summary[k] = _parse(v)
        elif line.startswith("solve "):
            rec = {}
            for tok in line[6:].split():
                k, _, v = tok.partition("=")
                rec[k] = _parse(v)
            rec["converged"] = bool(rec["converged"])
            records.append(rec)
        else:
            raise ValueError(f"unexpected report line: {line!r}")
    if "all_converged" in summary:
        summary["all_converged"] = bool(summary["all_converged"])
    return RunReport(records, summary)


def fmt_seconds(t: float) -> str:
    return "n/a" if t is None or math.isnan(t) else f"{t:.2f}"
