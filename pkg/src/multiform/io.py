"""Definition files and tabular output."""
from __future__ import annotations

import csv
import io as _io
import json
import sys
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .flows import Trajectory
from .liegroup import GroupChart, LieAlgebraData
from .models import ModelBundle
from .phase import HamiltonianSystem

__all__ = ["bundle_from_dict", "load_bundle", "trajectory_records", "format_records", "write_text"]


def bundle_from_dict(data: Mapping, validate: bool = True) -> ModelBundle:
    """Rebuild a bundle from the layout written by ``models show``.

    A bare system mapping (with ``m`` and ``hamiltonians`` at top level) is
    accepted too.  ``validate=False`` defers the moment-map check to the
    caller, so a broken file can be reported rather than rejected.
    """
    sys_data = data["system"] if "system" in data else data
    system = HamiltonianSystem.from_dict(sys_data)
    algebra = chart = None
    if "algebra" in data:
        algebra = LieAlgebraData.from_dict(data["algebra"])
        if algebra.matrix_basis is not None:
            chart_data = data.get("chart", {})
            order = chart_data.get("order", data["algebra"].get("order"))
            order = tuple(int(k) - 1 for k in order) if order else ()
            chart = GroupChart(algebra, order, chart_data.get("kind", "product"))
    box = None
    if "box" in data:
        box = (np.asarray(data["box"]["low"], dtype=float), np.asarray(data["box"]["high"], dtype=float))
    return ModelBundle(
        str(data.get("name", "custom")),
        system,
        algebra,
        chart,
        box=box,
        parameters=dict(sys_data.get("parameters") or {}),
        description=str(data.get("description", "")),
        validate=validate,
    )


def load_bundle(path: str | Path, validate: bool = True) -> ModelBundle:
    with open(path, encoding="utf-8") as fh:
        return bundle_from_dict(json.load(fh), validate)


def trajectory_records(sys: HamiltonianSystem, traj: Trajectory) -> list[dict]:
    """One record per sample: s, (tau,) t, q, p, H and, for group flows, K."""
    m = traj.q.shape[1]
    rows = []
    for k in range(traj.s.size):
        rec = {"s": float(traj.s[k])}
        if "tau" in traj.extras:
            rec.update({f"tau{i + 1}": float(v) for i, v in enumerate(traj.extras["tau"][k])})
        rec.update({f"t{i + 1}": float(v) for i, v in enumerate(traj.t[k])})
        rec.update({f"q{mu + 1}": float(traj.q[k, mu]) for mu in range(m)})
        rec.update({f"p{mu + 1}": float(traj.p[k, mu]) for mu in range(m)})
        rec.update({f"H{i + 1}": float(v) for i, v in enumerate(sys.values(traj.point(k)))})
        if "K" in traj.extras:
            rec.update({f"K{i + 1}": float(v) for i, v in enumerate(traj.extras["K"][k])})
        rows.append(rec)
    return rows


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_records(records: Iterable[Mapping], fmt: str, header: Mapping | None = None) -> str:
    """Render records as CSV (header as ``#`` comment lines) or JSON lines."""
    records = list(records)
    buf = _io.StringIO()
    if fmt == "json-lines":
        if header:
            buf.write(json.dumps({"header": dict(header)}, sort_keys=True) + "\n")
        for rec in records:
            buf.write(json.dumps(dict(rec)) + "\n")
        return buf.getvalue()
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    if header:
        for key in sorted(header):
            buf.write(f"# {key}={header[key]}\n")
    if records:
        fields = list(records[0])
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(fields)
        for rec in records:
            writer.writerow([_cell(rec.get(f, "")) for f in fields])
    return buf.getvalue()


def write_text(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")
