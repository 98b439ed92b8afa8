"""Deterministic table emission: CSV/TSV data, a ``.meta`` sidecar, optional gnuplot script."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np


@dataclass
class ResultTable:
    name: str
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)
    plot: tuple[str, str, str] | None = None  # (x column, y column, group column)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"{self.name}: expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(tuple(values))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return "%.17g" % value
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def render_table(table: ResultTable, fmt: str = "csv") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="," if fmt == "csv" else "\t",
                        lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def render_meta(table: ResultTable, config: Mapping[str, Any], header: Mapping[str, Any]) -> str:
    lines = [f"{k}={format_value(v)}" for k, v in header.items()]
    lines += [f"config.{k}={format_value(config[k])}" for k in sorted(config)]
    lines += [f"{k}={format_value(v)}" for k, v in sorted(table.meta.items())]
    return "\n".join(lines) + "\n"


def render_gnuplot(table: ResultTable, fmt: str) -> str:
    x, y, group = table.plot
    ix, iy = table.columns.index(x) + 1, table.columns.index(y) + 1
    ig = table.columns.index(group) + 1
    sep = "," if fmt == "csv" else "\\t"
    groups = []
    for value in table.column(group):
        if value not in groups:
            groups.append(value)
    data = f"{table.name}.{fmt}"
    plots = ", \\\n     ".join(
        f"'{data}' using (${ig}=={format_value(g)} ? ${ix} : 1/0):{iy} "
        f"with linespoints title '{group}={format_value(g)}'" for g in groups)
    return (f"set datafile separator '{sep}'\n"
            f"set key autotitle columnhead\n"
            f"set xlabel '{x}'\nset ylabel '{y}'\n"
            f"plot {plots}\n")


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_table(table: ResultTable, output_dir: str | Path, fmt: str = "csv", *,
               config: Mapping[str, Any] | None = None,
               header: Mapping[str, Any] | None = None,
               gnuplot: bool = False) -> list[Path]:
    """Write ``<name>.<fmt>`` and ``<name>.meta`` (and ``<name>.gp``); return the paths."""
    if fmt not in ("csv", "tsv"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    paths = [out / f"{table.name}.{fmt}", out / f"{table.name}.meta"]
    _write(paths[0], render_table(table, fmt))
    _write(paths[1], render_meta(table, config or {}, header or {}))
    if gnuplot and table.plot is not None:
        paths.append(out / f"{table.name}.gp")
        _write(paths[2], render_gnuplot(table, fmt))
    return paths


def emit_all(tables: Sequence[ResultTable], output_dir, fmt="csv", **kwargs) -> list[Path]:
    paths: list[Path] = []
    for table in tables:
        paths += emit_table(table, output_dir, fmt, **kwargs)
    return paths
