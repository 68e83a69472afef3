"""Report writers: JSON, CSV, two-column plot data and optional PNGs."""

from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, Fraction):
        return str(x)
    return x


def envelope(command: str, params: dict, result) -> dict:
    """Every report carries the tool version and the resolved parameters."""
    return {"tool": "gmtk", "version": __version__, "command": command,
            "params": _plain(params), "result": _plain(result)}


def dumps_json(doc: dict) -> str:
    return json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n"


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        import sys
        sys.stdout.write(text)
        return
    Path(path).write_text(text)


def write_dat(path: Path, xs, ys, header: str = "") -> None:
    """Two whitespace-separated columns, one point per line."""
    lines = [f"# {header}"] if header else []
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in zip(xs, ys)]
    path.write_text("\n".join(lines) + "\n")


def plot_png(path: Path, series: dict, xlabel: str, ylabel: str, title: str = "",
             logx: bool = False, logy: bool = False) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (xs, ys) in series.items():
        ax.plot(xs, ys, "o-", ms=3, lw=1, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(frameon=False)
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def emit_plot(stem: str | None, name: str, series: dict, xlabel: str, ylabel: str, png: bool = False,
              **kw) -> list[str]:
    """Write one .dat per series and, when asked, a PNG of all of them."""
    if stem is None:
        return []
    base = Path(stem)
    base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for label, (xs, ys) in series.items():
        p = base.with_name(f"{base.name}_{name}_{label}.dat")
        write_dat(p, xs, ys, f"{xlabel} {ylabel}")
        written.append(str(p))
    if png:
        p = base.with_name(f"{base.name}_{name}.png")
        plot_png(p, series, xlabel, ylabel, **kw)
        written.append(str(p))
    return written
