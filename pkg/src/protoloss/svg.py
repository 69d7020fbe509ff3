"""Bare-bones SVG output for histograms and the (phi, theta) sphere map."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


class Canvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts: list[str] = []

    def rect(self, x, y, w, h, fill, extra=""):
        self.parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="{fill}" {extra}/>')

    def line(self, x1, y1, x2, y2, stroke="#000", width=1.0):
        self.parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                          f'stroke="{stroke}" stroke-width="{width}"/>')

    def circle(self, cx, cy, r, fill, stroke="#000"):
        self.parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r:.2f}" fill="{fill}" stroke="{stroke}"/>')

    def text(self, x, y, s, size=11, anchor="middle"):
        self.parts.append(f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" font-family="sans-serif" '
                          f'text-anchor="{anchor}">{escape(str(s))}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        body = "\n".join(self.parts)
        return f'<?xml version="1.0" encoding="UTF-8"?>\n{head}\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'


def histogram_svg(edges, counts, title: str, xlabel: str = "angle (deg)",
                  width: int = 640, height: int = 320) -> str:
    edges = np.asarray(edges, dtype=float)
    counts = np.asarray(counts, dtype=float)
    left, right, top, bottom = 50, 15, 30, 40
    pw, ph = width - left - right, height - top - bottom
    cv = Canvas(width, height)
    cv.text(width / 2, 18, title, size=13)
    lo, hi = edges[0], edges[-1]
    peak = counts.max() if counts.size and counts.max() > 0 else 1.0

    def sx(v):
        return left + (v - lo) / (hi - lo) * pw

    for a, b, c in zip(edges[:-1], edges[1:], counts):
        if c <= 0:
            continue
        h = c / peak * ph
        cv.rect(sx(a), top + ph - h, max(sx(b) - sx(a) - 0.5, 0.5), h, PALETTE[0])
    cv.line(left, top + ph, left + pw, top + ph)
    cv.line(left, top, left, top + ph)
    for tick in np.linspace(lo, hi, 7):
        cv.line(sx(tick), top + ph, sx(tick), top + ph + 4)
        cv.text(sx(tick), top + ph + 16, f"{tick:g}")
    cv.text(left - 6, top + 4, f"{peak:g}", anchor="end")
    cv.text(left - 6, top + ph, "0", anchor="end")
    cv.text(left + pw / 2, height - 6, xlabel)
    return cv.render()


def sphere_svg(hist, title: str = "spherical histogram", width: int = 720, height: int = 400) -> str:
    """Equirectangular map: phi on x, theta on y, one colour per class, opacity by count."""
    left, right, top, bottom = 50, 15, 30, 40
    pw, ph = width - left - right, height - top - bottom
    cv = Canvas(width, height)
    cv.text(width / 2, 18, title, size=13)
    pe, te = hist.phi_edges, hist.theta_edges

    def sx(phi):
        return left + (phi + 180.0) / 360.0 * pw

    def sy(theta):
        return top + theta / 180.0 * ph

    peak = max(int(hist.counts.max()), 1)
    for a, b, j, c in hist.rows():
        colour = PALETTE[j % len(PALETTE)]
        op = 0.15 + 0.85 * c / peak
        cv.rect(sx(pe[a]), sy(te[b]), sx(pe[a + 1]) - sx(pe[a]), sy(te[b + 1]) - sy(te[b]), colour,
                f'fill-opacity="{op:.3f}"')
    for kind, j, phi, theta in hist.markers:
        colour = PALETTE[j % len(PALETTE)]
        if kind == "weight":
            cv.circle(sx(phi), sy(theta), 5, colour)
        else:
            cv.rect(sx(phi) - 4, sy(theta) - 4, 8, 8, "none", f'stroke="{colour}" stroke-width="2"')
    cv.line(left, top + ph, left + pw, top + ph)
    cv.line(left, top, left, top + ph)
    for tick in (-180, -90, 0, 90, 180):
        cv.text(sx(tick), top + ph + 16, f"{tick}")
    for tick in (0, 90, 180):
        cv.text(left - 6, sy(tick) + 4, f"{tick}", anchor="end")
    cv.text(left + pw / 2, height - 6, "phi (deg); circles = prototypes, squares = class mean directions")
    return cv.render()
