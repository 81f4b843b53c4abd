"""Publication-style figures from results CSV tables.

Reads only the public results contract (the ``opshadow`` CSV schema); the
producing package is never imported. Three layouts:

* ``curves``   one series per output qubit vs time: dashed exact lines,
               markered shadow points with error bars, optional shaded
               region above a threshold value.
* ``stacks``   cumulative operator-weight fractions vs time: shaded exact
               bands per locality k, shadow markers on the band edges.
* ``heatmap``  value as a color map over (time, output qubit), one panel
               per input table.

Rendering is deterministic for fixed inputs: fixed dpi, a fixed SVG hash
salt, and no timestamps in the output files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLUMNS = ("t", "quantity", "A", "jc_or_k", "value", "std_error", "M_U", "M_S", "mode", "mitigated")

DPI = 150

_LAYOUT_FOR_QUANTITY = {
    "renyi_mi": "curves",
    "neg_ratio": "curves",
    "log_negativity": "curves",
    "tri_info_2": "curves",
    "recovery_fidelity": "curves",
    "i3_renyi": "curves",
    "dk_cum": "stacks",
    "dk": "stacks",
}

_AXIS_LABEL = {
    "renyi_mi": "order-2 mutual information",
    "neg_ratio": "log2 moment ratio",
    "dk_cum": "cumulative operator weight",
    "dk": "operator weight",
}


class FigureSpecError(ValueError):
    pass


def read_rows(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != COLUMNS:
            raise FigureSpecError(f"unexpected results header in {path}")
        return list(reader)


def _parse(row, key):
    text = row[key]
    return math.nan if text in ("", "nan") else float(text)


def select(rows, quantity, kind="shadow") -> list:
    """Rows of one quantity; ``kind`` picks exact or sampled (shadow) rows,
    so one combined results file can feed both sides of a panel."""
    out = []
    for row in rows:
        if row["quantity"] != quantity:
            continue
        is_exact = row["mode"] == "exact"
        if (kind == "exact") != is_exact:
            continue
        out.append({
            "t": int(row["t"]),
            "jk": int(row["jc_or_k"]),
            "value": _parse(row, "value"),
            "std_error": _parse(row, "std_error"),
        })
    return out


def load_spec(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _validate(spec) -> dict:
    if "quantity" not in spec:
        raise FigureSpecError("figure spec needs a quantity")
    quantity = spec["quantity"]
    layout = spec.get("layout", _LAYOUT_FOR_QUANTITY.get(quantity))
    if layout not in ("curves", "stacks", "heatmap"):
        raise FigureSpecError(f"no layout known for quantity {quantity!r}")
    panels = spec.get("panels")
    if panels is None:
        panels = [{
            "label": spec.get("title", ""),
            "shadow_csv": spec.get("shadow_csv"),
            "exact_csv": spec.get("exact_csv"),
        }]
    for panel in panels:
        if not panel.get("shadow_csv") and not panel.get("exact_csv"):
            raise FigureSpecError("every panel needs a shadow_csv or an exact_csv")
    threshold = spec.get("threshold")
    if threshold is not None and quantity not in ("renyi_mi", "neg_ratio"):
        raise FigureSpecError(f"quantity {quantity!r} has no defined threshold to shade")
    return {
        "quantity": quantity,
        "layout": layout,
        "panels": panels,
        "threshold": threshold,
        "name": spec.get("name", quantity),
        "title": spec.get("title"),
    }


def _series(points):
    """Group points by the jc_or_k column; sorted t within each series."""
    series = {}
    for p in points:
        series.setdefault(p["jk"], []).append(p)
    for jk in series:
        series[jk].sort(key=lambda p: p["t"])
    return dict(sorted(series.items()))


def _panel_points(panel, quantity):
    shadow = exact = None
    if panel.get("shadow_csv"):
        shadow = select(read_rows(panel["shadow_csv"]), quantity, "shadow")
    if panel.get("exact_csv"):
        exact = select(read_rows(panel["exact_csv"]), quantity, "exact")
    if not shadow and not exact:
        raise FigureSpecError(f"no rows with quantity {quantity!r} in the panel inputs")
    return shadow, exact


def _draw_curves(ax, shadow, exact, threshold, counter):
    cmap = plt.get_cmap("viridis")
    keys = sorted({p["jk"] for p in (shadow or []) + (exact or [])})
    colors = {jk: cmap(i / max(1, len(keys) - 1)) for i, jk in enumerate(keys)}
    if exact:
        for jk, pts in _series(exact).items():
            ts = [p["t"] for p in pts]
            vs = [p["value"] for p in pts]
            ax.plot(ts, vs, "--", color=colors[jk], linewidth=1.2)
            counter[0] += len(pts)
    if shadow:
        for jk, pts in _series(shadow).items():
            ts = [p["t"] for p in pts]
            vs = [p["value"] for p in pts]
            es = [p["std_error"] for p in pts]
            ax.errorbar(ts, vs, yerr=es, fmt="o", ms=4, capsize=2,
                        color=colors[jk], label=f"$j_C={jk}$")
            counter[0] += len(pts)
    if threshold is not None:
        top = ax.get_ylim()[1]
        top = max(top, threshold + 0.5)
        ax.axhspan(threshold, top, color="green", alpha=0.12, zorder=0)
        ax.set_ylim(top=top)
    ax.set_xlabel("$t$")


def _draw_stacks(ax, shadow, exact, counter):
    cmap = plt.get_cmap("plasma")
    source = exact if exact else shadow
    ks = sorted({p["jk"] for p in source})
    colors = {k: cmap(i / max(1, len(ks) - 1)) for i, k in enumerate(ks)}
    if exact:
        prev = None
        for k in ks:
            pts = _series(exact)[k]
            ts = [p["t"] for p in pts]
            vs = [p["value"] for p in pts]
            ax.plot(ts, vs, "--", color=colors[k], linewidth=1.0)
            ax.fill_between(ts, prev if prev is not None else 0.0, vs,
                            color=colors[k], alpha=0.35)
            counter[0] += len(pts)
            prev = vs
    if shadow:
        for k in ks:
            pts = _series(shadow).get(k, [])
            ts = [p["t"] for p in pts]
            vs = [p["value"] for p in pts]
            es = [p["std_error"] for p in pts]
            ax.errorbar(ts, vs, yerr=es, fmt="o", ms=3.5, capsize=2,
                        color=colors[k], label=f"$k={k}$")
            counter[0] += len(pts)
    ax.set_xlabel("$t$")


def _draw_heatmap(fig, ax, points, label, counter):
    ts = sorted({p["t"] for p in points})
    jks = sorted({p["jk"] for p in points})
    grid = np.full((len(jks), len(ts)), np.nan)
    for p in points:
        grid[jks.index(p["jk"]), ts.index(p["t"])] = p["value"]
    im = ax.imshow(grid, aspect="auto", origin="lower", cmap="magma",
                   extent=(min(ts) - 0.5, max(ts) + 0.5, min(jks) - 0.5, max(jks) + 0.5))
    counter[0] += len(points)
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_xlabel("$t$")
    ax.set_ylabel("$j_C$")
    if label:
        ax.set_title(label, fontsize=10)


def render(spec: dict, out_dir) -> dict:
    """Render a figure spec to <out_dir>/<name>.png and .svg.

    Returns metadata including the number of plotted points, which is
    asserted to equal the number of selected CSV rows (each selected data
    point appears exactly once in the plotted series).
    """
    spec = _validate(spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plt.rcParams["svg.hashsalt"] = "plotkit"

    panels = spec["panels"]
    quantity = spec["quantity"]
    counter = [0]
    expected = 0

    if spec["layout"] == "heatmap":
        sources = []
        for panel in panels:
            shadow, exact = _panel_points(panel, quantity)
            for pts, tag in ((shadow, "sampled"), (exact, "exact")):
                if pts:
                    sources.append((pts, f"{panel.get('label', '')} {tag}".strip()))
                    expected += len(pts)
        fig, axes = plt.subplots(len(sources), 1, figsize=(6, 2.6 * len(sources)), squeeze=False)
        for ax, (pts, label) in zip(axes[:, 0], sources):
            _draw_heatmap(fig, ax, pts, label, counter)
    else:
        fig, axes = plt.subplots(len(panels), 1, figsize=(6, 3.2 * len(panels)),
                                 squeeze=False, sharex=True)
        for ax, panel in zip(axes[:, 0], panels):
            shadow, exact = _panel_points(panel, quantity)
            expected += len(shadow or []) + len(exact or [])
            if spec["layout"] == "curves":
                _draw_curves(ax, shadow, exact, spec["threshold"], counter)
            else:
                _draw_stacks(ax, shadow, exact, counter)
            ax.set_ylabel(_AXIS_LABEL.get(quantity, quantity))
            if panel.get("label"):
                ax.set_title(panel["label"], fontsize=10)
            if ax.get_legend_handles_labels()[0]:
                ax.legend(fontsize=7, ncol=2, frameon=False)

    if spec["title"]:
        fig.suptitle(spec["title"], fontsize=11)
    fig.tight_layout()
    png = out_dir / f"{spec['name']}.png"
    svg = out_dir / f"{spec['name']}.svg"
    fig.savefig(png, dpi=DPI)
    fig.savefig(svg, metadata={"Date": None})
    plt.close(fig)

    if counter[0] != expected:
        raise AssertionError(
            f"series-count assertion failed: plotted {counter[0]} of {expected} selected points"
        )
    return {"png": str(png), "svg": str(svg), "points": counter[0],
            "panels": len(panels), "quantity": quantity}
