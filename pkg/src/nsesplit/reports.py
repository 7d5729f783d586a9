"""Report serialization (JSON, CSV) and gnuplot script emission."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = ["to_jsonable", "write_json", "write_csv", "format_number", "emit_plots"]


def format_number(x) -> str:
    """Full double precision (17 significant digits); integers and flags verbatim."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def to_jsonable(obj):
    """Convert reports (dataclasses with numpy content) to plain JSON data.

    Non-finite floats become strings so the output is strict JSON.
    """
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: to_jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else format_number(x)
    return obj


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path: str | Path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> list[str]:
    """One row per entry; columns default to the union of keys in first-seen order."""
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(format_number(r[c]) if c in r else "" for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")
    return list(columns)


_HEADER = """# gnuplot script; run from this directory: gnuplot {name}
set datafile separator ','
set key autotitle columnhead
{axes}
set xlabel '{x}'
set grid
set terminal pngcairo size 800,600
set output '{png}'
"""


def emit_plots(
    csv_path: str | Path,
    plot_dir: str | Path,
    kind: str,
    n_list: Sequence[int],
    series: Sequence[str],
    slopes: dict | None = None,
    ylabel: str = "estimate",
    x: str = "n",
    logscale: str = "xy",
) -> Path:
    """Write a gnuplot script of ``series`` columns against column ``x``.

    The script refers to the CSV by a path relative to ``plot_dir`` and names
    its PNG output relative to the same directory.
    """
    if len(n_list) == 0:
        raise ValueError("n_list is empty; nothing to plot")
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise FileNotFoundError(f"report {csv_path} does not exist")
    plot_dir = Path(plot_dir)
    plot_dir.mkdir(parents=True, exist_ok=True)
    header = csv_path.read_text().splitlines()[0].split(",")
    missing = [s for s in [x, *series] if s not in header]
    if missing:
        raise ValueError(f"columns {missing} are not in {csv_path.name}")
    rel = Path(os.path.relpath(csv_path.resolve(), plot_dir.resolve())).as_posix()
    name = f"{kind}.gp"
    text = _HEADER.format(name=name, png=f"{kind}.png", axes=f"set logscale {logscale}" if logscale else "unset logscale", x=x)
    text += f"set ylabel '{ylabel}'\n"
    labels = []
    for i, s in enumerate(series):
        if slopes and s in slopes:
            slope, _, hw = slopes[s]
            labels.append(f"set label {i + 1} sprintf('{s}: slope %.3f +/- %.3f', {slope!r}, {hw!r}) "
                          f"at graph 0.05, graph {0.95 - 0.06 * i:.2f}")
    text += "\n".join(labels) + ("\n" if labels else "")
    plots = [f"'{rel}' using (column('{x}')):(column('{s}')) with linespoints title '{s}'" for s in series]
    text += "plot " + ", \\\n     ".join(plots) + "\n"
    path = plot_dir / name
    path.write_text(text)
    return path
