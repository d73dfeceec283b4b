"""Writers for graphs, censuses, cluster tables, and regression reports.

Graph exports: JSON with member labels and per-node average period, DOT with a
blue-to-red node gradient over average period, and a static HTML report that
embeds the JSON and draws the graph as SVG positioned by mean filter
coordinates. All writers are deterministic for identical inputs.
"""

from __future__ import annotations

import csv
import html
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .baselines import ClusterTable
from .flares import FlareCensus
from .geometry import FilterImage
from .mapper import MapperGraph
from .panel import DropRecord
from .regression import RegressionResult


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write via a temp file and rename, so failures leave no partial file."""
    path = Path(path)
    handle, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as out:
            out.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def graph_payload(graph: MapperGraph) -> dict:
    nodes = []
    for node in graph.nodes:
        entry = {
            "id": node.id,
            "element": list(node.element),
            "size": len(node.members),
            "members": [list(graph.point_labels[p]) for p in node.members]
            if graph.point_labels is not None
            else list(node.members),
        }
        if graph.point_labels is not None:
            entry["avg_period"] = graph.node_mean_period(node.id)
        nodes.append(entry)
    return {
        "nodes": nodes,
        "edges": [list(edge) for edge in graph.edges],
        "summary": {
            "nodes": graph.n_nodes,
            "edges": graph.n_edges,
            "components": graph.component_count(),
        },
    }


def write_graph_json(graph: MapperGraph, path: str | Path) -> None:
    write_text_atomic(path, _dump_json(graph_payload(graph)))


def _period_colors(graph: MapperGraph) -> dict[int, str]:
    if graph.point_labels is None:
        return {node.id: "#808080" for node in graph.nodes}
    means = {node.id: graph.node_mean_period(node.id) for node in graph.nodes}
    lo = min(means.values())
    hi = max(means.values())
    span = hi - lo
    colors = {}
    for node_id, mean in means.items():
        t = 0.5 if span == 0 else (mean - lo) / span
        red = round(255 * t)
        colors[node_id] = f"#{red:02x}00{255 - red:02x}"
    return colors


def write_graph_dot(graph: MapperGraph, path: str | Path) -> None:
    colors = _period_colors(graph)
    lines = ["graph shape_graph {", "  node [style=filled, shape=circle];"]
    for node in graph.nodes:
        lines.append(
            f'  n{node.id} [label="{node.id} ({len(node.members)})", fillcolor="{colors[node.id]}"];'
        )
    for u, v in graph.edges:
        lines.append(f"  n{u} -- n{v};")
    lines.append("}")
    write_text_atomic(path, "\n".join(lines) + "\n")


def write_graph_html(graph: MapperGraph, image: FilterImage, path: str | Path) -> None:
    """Self-contained report: SVG layout from mean filter coordinates."""
    colors = _period_colors(graph)
    coords = image.coords[:, :2] if image.dims >= 2 else np.column_stack(
        [image.coords[:, 0], np.zeros(image.coords.shape[0])]
    )
    centers = {
        node.id: coords[list(node.members)].mean(axis=0) for node in graph.nodes
    }
    xs = np.array([c[0] for c in centers.values()])
    ys = np.array([c[1] for c in centers.values()])
    width, height, pad = 900.0, 700.0, 40.0

    def scale(value, lo, hi, extent):
        if hi == lo:
            return extent / 2.0
        return pad + (value - lo) / (hi - lo) * (extent - 2 * pad)

    svg = []
    for u, v in graph.edges:
        x1, y1 = centers[u]
        x2, y2 = centers[v]
        svg.append(
            f'<line x1="{scale(x1, xs.min(), xs.max(), width):.1f}" '
            f'y1="{scale(y1, ys.min(), ys.max(), height):.1f}" '
            f'x2="{scale(x2, xs.min(), xs.max(), width):.1f}" '
            f'y2="{scale(y2, ys.min(), ys.max(), height):.1f}" stroke="#999" stroke-width="1"/>'
        )
    for node in graph.nodes:
        x, y = centers[node.id]
        radius = 3.0 + 2.0 * math.sqrt(len(node.members))
        title = f"node {node.id}: {len(node.members)} points"
        svg.append(
            f'<circle cx="{scale(x, xs.min(), xs.max(), width):.1f}" '
            f'cy="{scale(y, ys.min(), ys.max(), height):.1f}" r="{radius:.1f}" '
            f'fill="{colors[node.id]}" stroke="#333" stroke-width="0.5">'
            f"<title>{html.escape(title)}</title></circle>"
        )
    payload = _dump_json(graph_payload(graph))
    page = (
        "<!DOCTYPE html>\n<html><head><meta charset='utf-8'>"
        "<title>Shape graph</title></head><body>\n"
        f"<h1>Shape graph: {graph.n_nodes} nodes, {graph.n_edges} edges</h1>\n"
        f'<svg width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">\n' + "\n".join(svg) + "\n</svg>\n"
        '<script type="application/json" id="graph-data">\n' + payload + "</script>\n"
        "</body></html>\n"
    )
    write_text_atomic(path, page)


def write_census_csv(census: FlareCensus, path: str | Path) -> None:
    rows = ["entity,flare_length,type,signature"]
    writerows = []
    for entity in sorted(census.reports):
        report = census.reports[entity]
        signature = census.signatures[entity]
        length = "inf" if report.length == math.inf else str(int(report.length))
        writerows.append((entity, length, report.type.value, signature.as_text()))
    buffer = []
    for row in writerows:
        buffer.append(",".join(_csv_quote(cell) for cell in row))
    write_text_atomic(path, "\n".join(rows + buffer) + "\n")


def _csv_quote(cell: str) -> str:
    if any(ch in cell for ch in ',"\n'):
        return '"' + cell.replace('"', '""') + '"'
    return cell


def read_census_csv(path: str | Path) -> dict[str, str]:
    """entity -> flare length string ('inf' or an integer)."""
    out: dict[str, str] = {}
    with Path(path).open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            out[row["entity"]] = row["flare_length"]
    return out


def write_census_histogram_json(census: FlareCensus, path: str | Path) -> None:
    rows = census.histogram()
    payload = {
        "lengths": [r.length for r in rows],
        "frequency": [r.frequency for r in rows],
        "percentage": [round(r.percentage, 2) for r in rows],
        "cumulative_percentage": [round(r.cumulative_percentage, 2) for r in rows],
        "entities": len(census.reports),
        "absent": list(census.absent),
    }
    write_text_atomic(path, _dump_json(payload))


def write_drops_jsonl(drops: list[DropRecord], path: str | Path) -> None:
    lines = [
        json.dumps({"entity": d.entity, "period": d.period, "reason": d.reason}, sort_keys=True)
        for d in drops
    ]
    write_text_atomic(path, "\n".join(lines) + ("\n" if lines else ""))


def write_cluster_table_csv(table: ClusterTable, path: str | Path) -> None:
    lines = ["cluster,firm_years,unique_entities,representatives"]
    for row in table.rows:
        lines.append(
            ",".join(
                (
                    str(row.cluster),
                    str(row.firm_years),
                    str(row.unique_entities),
                    _csv_quote(";".join(row.representatives)),
                )
            )
        )
    lines.append(f"total,{table.total_firm_years},{table.total_unique_entities},")
    write_text_atomic(path, "\n".join(lines) + "\n")


def write_cluster_table_json(table: ClusterTable, path: str | Path) -> None:
    payload = {
        "method": table.method,
        "rows": [
            {
                "cluster": row.cluster,
                "firm_years": row.firm_years,
                "unique_entities": row.unique_entities,
                "representatives": list(row.representatives),
            }
            for row in table.rows
        ],
        "total_firm_years": table.total_firm_years,
        "total_unique_entities": table.total_unique_entities,
    }
    write_text_atomic(path, _dump_json(payload))


def regression_payload(results: dict[str, RegressionResult], f_tests: dict) -> dict:
    payload: dict = {"models": {}, "f_tests": f_tests}
    for key, result in results.items():
        payload["models"][key] = {
            "names": list(result.names),
            "coef": list(result.coef),
            "se": list(result.se),
            "r2": result.r2,
            "adj_r2": result.adj_r2,
            "n": result.n,
            "dropped": [{"entity": d.entity, "reason": d.reason} for d in result.dropped],
        }
    return payload


def write_regression_json(results: dict[str, RegressionResult], f_tests: dict, path: str | Path) -> None:
    write_text_atomic(path, _dump_json(regression_payload(results, f_tests)))


def format_regression_table(results: dict[str, RegressionResult]) -> str:
    """Text table with one column per model, coefficients over (se) rows."""
    order = ["const", "flare_length", "islands_only", "log_patents"]
    keys = list(results)
    label_width = 14
    col_width = 12
    lines = [
        " " * label_width + "".join(k.rjust(col_width) for k in keys),
        "-" * (label_width + col_width * len(keys)),
    ]
    for name in order:
        if not any(name in results[k].names for k in keys):
            continue
        coef_cells = []
        se_cells = []
        for key in keys:
            result = results[key]
            if name in result.names:
                i = result.names.index(name)
                coef_cells.append(f"{result.coef[i]:.3f}".rjust(col_width))
                se_cells.append(f"({result.se[i]:.3f})".rjust(col_width))
            else:
                coef_cells.append("-".rjust(col_width))
                se_cells.append("".rjust(col_width))
        lines.append(name.ljust(label_width) + "".join(coef_cells))
        lines.append(" " * label_width + "".join(se_cells))
    lines.append("-" * (label_width + col_width * len(keys)))
    lines.append("R2".ljust(label_width) + "".join(f"{results[k].r2:.3f}".rjust(col_width) for k in keys))
    lines.append(
        "Adj. R2".ljust(label_width) + "".join(f"{results[k].adj_r2:.3f}".rjust(col_width) for k in keys)
    )
    lines.append("N".ljust(label_width) + "".join(str(results[k].n).rjust(col_width) for k in keys))
    return "\n".join(lines) + "\n"
