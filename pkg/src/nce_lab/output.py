"""CSV/JSON writers, gnuplot scripts and optional matplotlib figures."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _number(v):
    try:
        return float(v)
    except ValueError:
        return None


def read_csv(path):
    """Header and rows (as strings) of a CSV file."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# columns that identify a configuration rather than a measured quantity
_ID_COLUMNS = {"theta", "unnormalized", "T", "replicate"}


def _plot_columns(header, rows):
    """x column, y columns and row groups keyed by the text columns."""
    numeric = [j for j in range(len(header)) if rows and all(_number(r[j]) is not None for r in rows)]
    text = [j for j in range(len(header)) if j not in numeric]
    x = header.index("nu") if "nu" in header else numeric[0]
    ys = [j for j in numeric if j != x and header[j] not in _ID_COLUMNS] or [j for j in numeric if j != x]
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[j] for j in text), []).append(r)
    return x, ys, groups


def _is_histogram(header):
    return header[:3] == ["bin_lo", "bin_hi", "weight"]


def _is_histogram_2d(header):
    return header == ["x_lo", "x_hi", "y_lo", "y_hi", "weight"]


def gnuplot_script(csv_path) -> Path:
    """Write ``<csv>.gp`` that plots the CSV to ``<csv>.gp.png``."""
    csv_path = Path(csv_path)
    header, rows = read_csv(csv_path)
    name = csv_path.name
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 800,600",
        f"set output '{name}.gp.png'",
    ]
    if _is_histogram(header):
        lines.append(f"plot '{name}' using (($1+$2)/2):($3/($2-$1)) with steps title 'density'")
    elif _is_histogram_2d(header):
        lines += ["set view map", f"splot '{name}' using (($1+$2)/2):(($3+$4)/2):5 with points palette pt 5"]
    else:
        x, ys, _ = _plot_columns(header, rows)
        series = [f"'{name}' using {x + 1}:{j + 1} with linespoints" for j in ys]
        lines.append("plot " + ", \\\n     ".join(series))
    path = csv_path.with_suffix(csv_path.suffix + ".gp")
    path.write_text("\n".join(lines) + "\n")
    return path


def plot_csv(csv_path) -> Path:
    """Render a PNG next to the CSV with matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    csv_path = Path(csv_path)
    header, rows = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if _is_histogram(header) or _is_histogram_2d(header):
        data = np.array([[float(v) for v in r] for r in rows])
    if _is_histogram(header):
        lo, hi, w = data[:, 0], data[:, 1], data[:, 2]
        ax.stairs(w / (hi - lo), np.r_[lo, hi[-1]], fill=True, alpha=0.6)
        ax.set_xlabel("x")
        ax.set_ylabel("noise density")
    elif _is_histogram_2d(header):
        xe = np.unique(np.r_[data[:, 0], data[:, 1]])
        ye = np.unique(np.r_[data[:, 2], data[:, 3]])
        dens = data[:, 4] / ((data[:, 1] - data[:, 0]) * (data[:, 3] - data[:, 2]))
        im = ax.pcolormesh(xe, ye, dens.reshape(len(xe) - 1, len(ye) - 1).T, shading="flat")
        fig.colorbar(im, ax=ax)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    else:
        x, ys, groups = _plot_columns(header, rows)
        for key, grp in groups.items():
            xv = np.array([float(r[x]) for r in grp])
            for j in ys:
                label = " ".join([*key, header[j]])
                yv = np.array([_number(r[j]) for r in grp], dtype=float)
                ax.plot(xv, yv, marker="." if len(xv) < 60 else None, label=label)
        ax.set_xlabel(header[x])
        if header[x] == "nu":
            ax.set_xscale("log")
        if len(ys) * len(groups) > 1:
            ax.legend(fontsize="small")
    ax.set_title(csv_path.stem)
    fig.tight_layout()
    out = csv_path.with_suffix(".png")
    # fixed metadata keeps reruns byte-identical
    fig.savefig(out, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return out
