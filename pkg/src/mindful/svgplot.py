"""Minimal static SVG bar charts for benchmark reports.

Hand-rolled on purpose: the harness guarantees byte-identical artifacts for
identical inputs, which rules out plotting backends that embed run- or
version-dependent ids.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from typing import Sequence

__all__ = ["bar_chart_svg"]

_MARGIN_LEFT = 64
_MARGIN_RIGHT = 16
_MARGIN_TOP = 40
_MARGIN_BOTTOM = 96
_BAR_FILL = "#4878a8"


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def bar_chart_svg(title: str, labels: Sequence[str], values: Sequence[float],
                  y_label: str, y_max: float | None = None) -> str:
    """One vertical bar per (label, value); returns the SVG document text."""
    if len(labels) != len(values):
        raise ValueError("labels and values must have equal length")
    n = max(1, len(values))
    slot = 72
    plot_w = max(240, slot * n)
    plot_h = 240
    width = _MARGIN_LEFT + plot_w + _MARGIN_RIGHT
    height = _MARGIN_TOP + plot_h + _MARGIN_BOTTOM
    if y_max is None:
        top = max([v for v in values if v == v] + [0.0])
        y_max = 1.0 if top <= 1.0 else top * 1.1
    if y_max <= 0:
        y_max = 1.0

    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(width), "height": str(height),
        "viewBox": f"0 0 {width} {height}",
    })
    ET.SubElement(svg, "title").text = title
    ET.SubElement(svg, "text", {
        "x": str(width / 2), "y": "24", "text-anchor": "middle",
        "font-family": "sans-serif", "font-size": "15",
    }).text = title
    ET.SubElement(svg, "text", {
        "x": "16", "y": str(_MARGIN_TOP + plot_h / 2), "text-anchor": "middle",
        "font-family": "sans-serif", "font-size": "11",
        "transform": f"rotate(-90 16 {_MARGIN_TOP + plot_h / 2})",
    }).text = y_label

    axis_y = _MARGIN_TOP + plot_h
    ET.SubElement(svg, "line", {
        "x1": str(_MARGIN_LEFT), "y1": str(axis_y),
        "x2": str(_MARGIN_LEFT + plot_w), "y2": str(axis_y),
        "stroke": "#000000", "stroke-width": "1",
    })
    ET.SubElement(svg, "line", {
        "x1": str(_MARGIN_LEFT), "y1": str(_MARGIN_TOP),
        "x2": str(_MARGIN_LEFT), "y2": str(axis_y),
        "stroke": "#000000", "stroke-width": "1",
    })
    for tick in range(5):
        frac = tick / 4
        y = axis_y - frac * plot_h
        ET.SubElement(svg, "line", {
            "x1": str(_MARGIN_LEFT - 4), "y1": _fmt(y),
            "x2": str(_MARGIN_LEFT), "y2": _fmt(y),
            "stroke": "#000000", "stroke-width": "1",
        })
        ET.SubElement(svg, "text", {
            "x": str(_MARGIN_LEFT - 8), "y": _fmt(y + 4), "text-anchor": "end",
            "font-family": "sans-serif", "font-size": "10",
        }).text = _fmt(frac * y_max)

    bar_w = slot * 0.6
    for i, (label, value) in enumerate(zip(labels, values)):
        cx = _MARGIN_LEFT + slot * (i + 0.5)
        clamped = min(max(value, 0.0), y_max)
        bar_h = plot_h * clamped / y_max
        ET.SubElement(svg, "rect", {
            "x": _fmt(cx - bar_w / 2), "y": _fmt(axis_y - bar_h),
            "width": _fmt(bar_w), "height": _fmt(bar_h),
            "fill": _BAR_FILL,
        })
        ET.SubElement(svg, "text", {
            "x": _fmt(cx), "y": _fmt(axis_y - bar_h - 6), "text-anchor": "middle",
            "font-family": "sans-serif", "font-size": "10",
        }).text = _fmt(value)
        ET.SubElement(svg, "text", {
            "x": _fmt(cx), "y": str(axis_y + 12), "text-anchor": "end",
            "font-family": "sans-serif", "font-size": "10",
            "transform": f"rotate(-45 {_fmt(cx)} {axis_y + 12})",
        }).text = label

    return ET.tostring(svg, encoding="unicode", xml_declaration=True) + "\n"
