"""Rendering of count tables, comparison grids and per-event audit files."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from .errors import IngestError
from .model import METRIC_NAMES, WindowSpec
from .pipeline import REFERENCE_TABLES, GridCell, ReportBundle, value_column

EMPTY_MARK = "—"
CUT_IN_LABEL = "Cut-in"
OTHER_LABEL = "Other lane change"

METRIC_TITLES = {
    "p_a": "acceleration percentage",
    "r_v": "velocity change ratio",
    "dv": "cumulative velocity change",
    "a_max": "maximum acceleration",
    "a_min": "minimum deceleration",
}


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v) -> str:
    """Full-precision text for machine-readable output."""
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def _th(th: float) -> str:
    return f"{th:g}"


def format_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.3f} ({std:.3f})"


# -- table 1 -----------------------------------------------------------------

def emit_table1(table1: Dict[float, Tuple[int, int]], fmt: str, *, empty: bool = False) -> str:
    """Counts per gap threshold; ``empty`` gives a header-only table."""
    ths = sorted(table1)
    header = ["events"] + [_th(t) for t in ths]
    rows = [] if empty else [
        [CUT_IN_LABEL] + [str(table1[t][0]) for t in ths],
        [OTHER_LABEL] + [str(table1[t][1]) for t in ths],
    ]
    if fmt == "csv":
        return _csv_text(header, rows)
    if fmt == "md":
        return _md_table(["X-gap threshold (m)"] + header[1:], rows)
    raise ValueError(fmt)


# -- comparison grids --------------------------------------------------------

MACHINE_HEADER = (
    "threshold", "window", "n_cutin", "mean_cutin", "std_cutin", "n_other", "mean_other", "std_other",
    "u_statistic", "rank_sum", "z_value", "p_value", "method", "status",
)


def table_name(role: str, anchor: str, metric: str) -> str:
    return f"table_{role}_{anchor.lower()}_{metric}"


def emit_comparison_table(cells: Sequence[GridCell], fmt: str, *, role: str = "", anchor: str = "",
                          metric: str = "") -> str:
    if fmt == "csv":
        rows = []
        for c in cells:
            if c.comparison is None:
                rows.append([_th(c.threshold), c.window.label, c.n_cutin, "", "", c.n_other, "", "",
                             "", "", "", "", "", "EmptySample"])
                continue
            a, b, t = c.comparison.cutin, c.comparison.other, c.comparison.test
            rows.append([_th(c.threshold), c.window.label, a.n, _num(a.mean), _num(a.std), b.n, _num(b.mean),
                         _num(b.std), _num(t.u_statistic), _num(t.rank_sum), _num(t.z_value),
                         _num(t.p_two_sided), t.method, "ok"])
        return _csv_text(MACHINE_HEADER, rows)
    if fmt != "md":
        raise ValueError(fmt)
    rows, footnote = [], False
    for c in cells:
        if c.comparison is None:
            footnote = True
            rows.append([_th(c.threshold), c.window.label, EMPTY_MARK + "*", EMPTY_MARK + "*", EMPTY_MARK])
            continue
        a, b = c.comparison.cutin, c.comparison.other
        rows.append([_th(c.threshold), c.window.label, format_mean_std(a.mean, a.std),
                     format_mean_std(b.mean, b.std), format_p(c.comparison.p_value)])
    title = ""
    if role:
        title = f"### {role.upper()} {METRIC_TITLES.get(metric, metric)} around {anchor}\n\n"
        ref = REFERENCE_TABLES.get((role, anchor, metric))
        if ref:
            title += f"Reference table {ref}.\n\n"
    text = title + _md_table(["X-gap (m)", "Time interval (s)", CUT_IN_LABEL, OTHER_LABEL, "p-value"], rows)
    if footnote:
        text += "\n\\* one of the groups is empty for this threshold.\n"
    return text


# -- per-event audit ---------------------------------------------------------

EVENT_FIELDS = ("recording_id", "lcv_id", "t1", "t2", "t3", "origin_lane", "target_lane", "tfv_id",
                "x_gap_at_t1", "status", "stage", "reason", "detail")


def value_columns(windows: Sequence[WindowSpec]) -> List[str]:
    return [value_column(role, w, m) for role in ("lcv", "tfv") for w in windows for m in METRIC_NAMES]


def emit_events(bundle: ReportBundle) -> str:
    """One wide row per transition: kept events with metrics, dropped ones with the reason."""
    cols = value_columns(bundle.config.windows)
    rows = []
    for rec in bundle.events:
        e = rec.event
        rows.append((e.key, [e.recording_id, e.lcv_id, e.t1, e.t2, e.t3, e.origin_lane, e.target_lane, e.tfv_id,
                             _num(float(e.x_gap_at_t1)), "kept", "", "", ""] + [_num(rec.values[c]) for c in cols]))
    for d in bundle.drops:
        rows.append((d.key, [d.recording_id, d.vehicle_id, _num(d.t1), d.t2, _num(d.t3), d.from_lane, d.to_lane,
                             "", "", "dropped", d.stage, d.reason, d.detail] + [""] * len(cols)))
    rows.sort(key=lambda kv: kv[0])
    return _csv_text(list(EVENT_FIELDS) + cols, [r for _, r in rows])


def emit_drops(bundle: ReportBundle) -> str:
    header = ("recording_id", "vehicle_id", "t2", "from_lane", "to_lane", "stage", "reason", "detail")
    rows = [[d.recording_id, d.vehicle_id, d.t2, d.from_lane, d.to_lane, d.stage, d.reason, d.detail]
            for d in bundle.drops]
    return _csv_text(header, rows)


def emit_audit(bundle: ReportBundle) -> str:
    return _csv_text(("count", "value"), [[k, v] for k, v in bundle.drop_audit.items()])


def emit_manifest(bundle: ReportBundle) -> str:
    return "\n".join(bundle.manifest) + "\n"


def write_bundle(bundle: ReportBundle, out_dir, formats: Sequence[str] = ("csv", "md")) -> List[Path]:
    """Write every artifact of ``bundle`` under ``out_dir``; returns the paths in write order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    def put(name: str, text: str) -> None:
        path = out / name
        path.write_text(text, encoding="utf-8", newline="")
        written.append(path)

    for fmt in formats:
        put(f"table1.{fmt}", emit_table1(bundle.table1, fmt, empty=not bundle.has_events))
    for (role, anchor, metric), cells in bundle.grids.items():
        for fmt in formats:
            put(f"{table_name(role, anchor, metric)}.{fmt}",
                emit_comparison_table(cells, fmt, role=role, anchor=anchor, metric=metric))
    put("events.csv", emit_events(bundle))
    put("drops.csv", emit_drops(bundle))
    put("drop_audit.csv", emit_audit(bundle))
    put("manifest.txt", emit_manifest(bundle))
    return written


def read_events(path, windows: Sequence[WindowSpec]) -> List[Tuple[float, Dict[str, float]]]:
    """Kept rows of an ``events.csv`` as ``(x_gap_at_t1, values)`` pairs."""
    cols = value_columns(windows)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in ["x_gap_at_t1", "status"] + cols if c not in (reader.fieldnames or [])]
            if missing:
                raise IngestError(f"{path}: missing columns {', '.join(missing[:5])}")
            out = []
            for row in reader:
                if row["status"] != "kept":
                    continue
                out.append((float(row["x_gap_at_t1"]), {c: float(row[c]) for c in cols}))
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from None
    return out
