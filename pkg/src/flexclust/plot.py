"""Self-contained SVG scatter plots of clustered households."""

from __future__ import annotations

import itertools
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

from .errors import DataError
from .features import FeatureVector

LABEL_COLOURS = {
    "high_usage": "green",
    "high_variability": "red",
    "stable_low": "black",
    "mid": "blue",
}
_FALLBACK = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]

AXIS_TITLES = {
    "mean_evening_power": "mean evening power (W)",
    "sd_time_of_max": "sd of time of max (min)",
    "sd_time_of_min": "sd of time of min (min)",
}

PANEL_W, PANEL_H = 420, 360
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 30, 50


def _panel_pairs(names: Sequence[str]) -> list[tuple[int, int]]:
    """(x, y) attribute index pairs; two attributes give sd vs usage."""
    if len(names) == 2:
        return [(1, 0)]
    return [(j, i) if i == 0 else (i, j) for i, j in itertools.combinations(range(len(names)), 2)]


def _colour(cluster: int, labels: dict) -> str:
    label = labels.get(str(cluster))
    if label in LABEL_COLOURS:
        return LABEL_COLOURS[label]
    return _FALLBACK[cluster % len(_FALLBACK)]


def _range(values: list[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    span = hi - lo if hi > lo else (abs(hi) or 1.0)
    return lo - 0.05 * span, hi + 0.05 * span


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def check_pair(doc: dict, features: Sequence[FeatureVector]) -> list[str]:
    """Validate that a clusters document and a features set belong together."""
    names = doc["standardization"]["attributes"]
    by_id = {f.household_id for f in features}
    assigned = {a["household_id"] for a in doc["assignments"]}
    if by_id != assigned:
        raise DataError(
            f"clusters and features cover different households "
            f"({len(assigned - by_id)} only in clusters, {len(by_id - assigned)} only in features)"
        )
    has_min = {f.sd_time_of_min is not None for f in features}
    if ("sd_time_of_min" in names) != (has_min == {True}):
        raise DataError("clusters attributes do not match the features columns")
    for row in doc["centroids"]["original"]:
        if len(row) != len(names):
            raise DataError("centroid dimension does not match the attribute list")
    return names


def scatter_svg(doc: dict, features: Sequence[FeatureVector]) -> str:
    names = check_pair(doc, features)
    labels = doc.get("labels", {})
    cluster_of = {a["household_id"]: a["cluster"] for a in doc["assignments"]}
    rows = sorted(features, key=lambda f: f.household_id)
    data = {f.household_id: [getattr(f, n) for n in names] for f in rows}
    centroids = doc["centroids"]["original"]
    pairs = _panel_pairs(names)

    width = PANEL_W * len(pairs)
    height = PANEL_H + 30
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for p, (xi, yi) in enumerate(pairs):
        ox = p * PANEL_W
        xs = [v[xi] for v in data.values()] + [c[xi] for c in centroids]
        ys = [v[yi] for v in data.values()] + [c[yi] for c in centroids]
        x0, x1 = _range(xs)
        y0, y1 = _range(ys)
        plot_w = PANEL_W - MARGIN_L - MARGIN_R
        plot_h = PANEL_H - MARGIN_T - MARGIN_B

        def sx(v, ox=ox, x0=x0, x1=x1, plot_w=plot_w):
            return ox + MARGIN_L + (v - x0) / (x1 - x0) * plot_w

        def sy(v, y0=y0, y1=y1, plot_h=plot_h):
            return MARGIN_T + plot_h - (v - y0) / (y1 - y0) * plot_h

        out.append(f'<g class="panel" data-x={quoteattr(names[xi])} data-y={quoteattr(names[yi])}>')
        left, bottom = ox + MARGIN_L, MARGIN_T + plot_h
        out.append(
            f'<rect x="{left}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
            f'fill="none" stroke="#888" stroke-width="1"/>'
        )
        for t in range(5):
            xv = x0 + (x1 - x0) * (t + 0.5) / 5
            yv = y0 + (y1 - y0) * (t + 0.5) / 5
            out.append(
                f'<line x1="{_fmt(sx(xv))}" y1="{bottom}" x2="{_fmt(sx(xv))}" y2="{bottom + 4}" stroke="#888"/>'
                f'<text x="{_fmt(sx(xv))}" y="{bottom + 16}" text-anchor="middle">{xv:.3g}</text>'
            )
            out.append(
                f'<line x1="{left - 4}" y1="{_fmt(sy(yv))}" x2="{left}" y2="{_fmt(sy(yv))}" stroke="#888"/>'
                f'<text x="{left - 6}" y="{_fmt(sy(yv) + 4)}" text-anchor="end">{yv:.3g}</text>'
            )
        out.append(
            f'<text x="{_fmt(left + plot_w / 2)}" y="{bottom + 36}" text-anchor="middle">'
            f"{escape(AXIS_TITLES.get(names[xi], names[xi]))}</text>"
        )
        out.append(
            f'<text x="{ox + 14}" y="{_fmt(MARGIN_T + plot_h / 2)}" text-anchor="middle" '
            f'transform="rotate(-90 {ox + 14} {_fmt(MARGIN_T + plot_h / 2)})">'
            f"{escape(AXIS_TITLES.get(names[yi], names[yi]))}</text>"
        )
        for hid, v in data.items():
            c = cluster_of[hid]
            out.append(
                f'<circle class="point" data-household={quoteattr(hid)} data-cluster="{c}" '
                f'cx="{_fmt(sx(v[xi]))}" cy="{_fmt(sy(v[yi]))}" r="3" '
                f'fill="{_colour(c, labels)}" fill-opacity="0.75"/>'
            )
        for c, row in enumerate(centroids):
            cx, cy = sx(row[xi]), sy(row[yi])
            out.append(
                f'<path class="centroid" data-cluster="{c}" '
                f'd="M{_fmt(cx - 7)},{_fmt(cy - 7)}L{_fmt(cx + 7)},{_fmt(cy + 7)}'
                f'M{_fmt(cx - 7)},{_fmt(cy + 7)}L{_fmt(cx + 7)},{_fmt(cy - 7)}" '
                f'stroke="{_colour(c, labels)}" stroke-width="3"/>'
            )
        out.append("</g>")

    legend_y = PANEL_H + 12
    for c in range(len(centroids)):
        name = labels.get(str(c), f"cluster {c}")
        x = 10 + 150 * c
        out.append(
            f'<g class="legend"><circle cx="{x}" cy="{legend_y}" r="4" fill="{_colour(c, labels)}"/>'
            f'<text x="{x + 8}" y="{legend_y + 4}">{escape(f"{c}: {name}")}</text></g>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_scatter_svg(doc: dict, features: Sequence[FeatureVector], path: str | Path) -> None:
    Path(path).write_text(scatter_svg(doc, features), encoding="utf-8")
