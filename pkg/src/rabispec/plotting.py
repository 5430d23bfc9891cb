"""Plot outputs: gnuplot script text and matplotlib PNG rendering."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

LABELS = {
    "f_x": "f_X",
    "f_drive": "f (rad/s)",
    "omega": "omega (rad/s)",
    "delta": "detuning (rad/s)",
    "chi": "chi (rad)",
    "xi": "xi (rad^2/s^2)",
    "gamma_t": "Gamma_T (rad/s)",
    "v_t": "V_T (V)",
}


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def gnuplot_script(csv_name: str, columns: list[str], x: str, y: str, *, series: str | None = None,
                   series_values=(), title: str = "", png_name: str | None = None) -> str:
    """Script plotting column ``y`` against ``x``, one curve per ``series`` value."""
    ix, iy = columns.index(x) + 1, columns.index(y) + 1
    lines = ["set datafile separator ','",
             f"set xlabel '{LABELS.get(x, x)}'",
             f"set ylabel '{LABELS.get(y, y)}'"]
    if title:
        lines.append(f"set title '{title}'")
    if png_name:
        lines += ["set terminal pngcairo size 900,600", f"set output '{png_name}'"]
    if series is None:
        lines.append(f"plot '{csv_name}' every ::1 using {ix}:{iy} with lines notitle")
    else:
        iser = columns.index(series) + 1
        parts = [f"'{csv_name}' every ::1 using {ix}:(${iser}=={v!r} ? ${iy} : 1/0) "
                 f"with lines title '{series}={v:g}'" for v in series_values]
        lines.append("plot " + ", \\\n     ".join(parts))
    return "\n".join(lines) + "\n"


def render_png(path, columns: list[str], rows: list[list[str]], x: str, y: str, *,
               series: str | None = None, title: str = "") -> None:
    """Render the same curves as :func:`gnuplot_script` to a PNG file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.array([[float(r[columns.index(c)]) for c in (x, y)] for r in rows])
    fig, ax = plt.subplots(figsize=(9, 6))
    if series is None:
        ax.plot(data[:, 0], data[:, 1])
    else:
        key = np.array([float(r[columns.index(series)]) for r in rows])
        for v in dict.fromkeys(key.tolist()):
            sel = key == v
            ax.plot(data[sel, 0], data[sel, 1], label=f"{series}={v:g}")
        ax.legend()
    ax.set_xlabel(LABELS.get(x, x))
    ax.set_ylabel(LABELS.get(y, y))
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=100)
    plt.close(fig)


def series_values(columns: list[str], rows: list[list[str]], series: str) -> list[float]:
    i = columns.index(series)
    return [v for v in dict.fromkeys(float(r[i]) for r in rows) if not math.isnan(v)]
