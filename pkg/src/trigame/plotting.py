"""Minimal SVG writers for trajectories, sweep bubbles and GAN samples.

Output is plain text with fixed float formatting, so equal inputs give
byte-identical files.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

# a few stops of the viridis map
_STOPS = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], float)
CLASS_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
SIZE = 480
MARGIN = 40


def colormap(t):
    t = float(np.clip(t, 0.0, 1.0)) * (len(_STOPS) - 1)
    i = min(int(t), len(_STOPS) - 2)
    r, g, b = _STOPS[i] + (t - i) * (_STOPS[i + 1] - _STOPS[i])
    return f"#{int(round(r)):02x}{int(round(g)):02x}{int(round(b)):02x}"


def view_matrix(elev=25.0, azim=-60.0):
    """Rows map 3-d points to screen (x right, y up) for an orthographic view."""
    e, a = np.radians(elev), np.radians(azim)
    right = np.array([-np.sin(a), np.cos(a), 0.0])
    up = np.array([-np.sin(e) * np.cos(a), -np.sin(e) * np.sin(a), np.cos(e)])
    return np.stack([right, up])


def parse_view(text):
    elev, azim = (float(v) for v in text.split(","))
    return elev, azim


class _Canvas:
    def __init__(self, title=""):
        self.items = []
        self.title = title

    def fit(self, pts, pad=0.05):
        pts = np.asarray(pts, float)
        finite = pts[np.all(np.isfinite(pts), axis=1)]
        if finite.size == 0:
            finite = np.zeros((1, 2))
        lo, hi = finite.min(axis=0), finite.max(axis=0)
        span = float(max(np.max(hi - lo), 1e-12))
        centre = (lo + hi) / 2
        self.scale = (SIZE - 2 * MARGIN) / (span * (1 + 2 * pad))
        self.centre = centre

    def xy(self, p):
        x = SIZE / 2 + (p[0] - self.centre[0]) * self.scale
        y = SIZE / 2 - (p[1] - self.centre[1]) * self.scale
        return x, y

    def line(self, p, q, color, width=1.0):
        (x1, y1), (x2, y2) = self.xy(p), self.xy(q)
        self.items.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                          f'stroke="{color}" stroke-width="{width:.2f}"/>')

    def circle(self, p, r, color, opacity=1.0, title=None):
        x, y = self.xy(p)
        tip = f"<title>{escape(title)}</title>" if title else ""
        self.items.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" fill="{color}" '
                          f'fill-opacity="{opacity:.2f}">{tip}</circle>')

    def ellipse(self, centre, cov, color, nsd=3.0):
        vals, vecs = np.linalg.eigh(cov)
        angle = np.degrees(np.arctan2(vecs[1, 1], vecs[0, 1]))
        x, y = self.xy(centre)
        rx, ry = nsd * np.sqrt(vals[1]) * self.scale, nsd * np.sqrt(vals[0]) * self.scale
        self.items.append(f'<ellipse cx="{x:.2f}" cy="{y:.2f}" rx="{rx:.2f}" ry="{ry:.2f}" '
                          f'transform="rotate({-angle:.2f} {x:.2f} {y:.2f})" fill="none" '
                          f'stroke="{color}" stroke-dasharray="3,3"/>')

    def text(self, x, y, s, size=12, anchor="start"):
        self.items.append(f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" '
                          f'font-family="sans-serif" text-anchor="{anchor}">{escape(s)}</text>')

    def svg(self):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
                f'viewBox="0 0 {SIZE} {SIZE}">\n<rect width="100%" height="100%" fill="white"/>\n')
        if self.title:
            head += f'<text x="{SIZE / 2:.2f}" y="20" font-size="14" font-family="sans-serif" ' \
                    f'text-anchor="middle">{escape(self.title)}</text>\n'
        return head + "\n".join(self.items) + "\n</svg>\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.svg())


def _axes(canvas, proj, extent, labels):
    for i, label in enumerate(labels):
        tip = np.zeros(3)
        tip[i] = extent
        canvas.line(proj @ np.zeros(3), proj @ tip, "#999999")
        x, y = canvas.xy(proj @ (tip * 1.08))
        canvas.text(x, y, label, size=11, anchor="middle")


def trajectory_svg(points, path, view=(25.0, -60.0), title="", labels=("theta", "phi", "psi")):
    """3-d path of ``points`` (n, 3), coloured from dark (start) to yellow (end)."""
    pts = np.asarray(points, float)[:, :3]
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    proj = view_matrix(*view)
    extent = float(np.max(np.abs(pts))) if pts.size else 1.0
    extent = extent if extent > 0 else 1.0
    flat = pts @ proj.T
    canvas = _Canvas(title)
    box = np.array([[s0, s1, s2] for s0 in (-1, 1) for s1 in (-1, 1) for s2 in (-1, 1)]) * extent
    canvas.fit(np.vstack([flat, box @ proj.T]))
    _axes(canvas, proj, extent, labels)
    n = len(flat)
    for i in range(n - 1):
        canvas.line(flat[i], flat[i + 1], colormap(i / max(n - 2, 1)), 1.5)
    if n:
        canvas.circle(flat[0], 3.5, colormap(0.0))
        canvas.circle(flat[-1], 3.5, colormap(1.0))
    canvas.circle(proj @ np.zeros(3), 2.5, "#d62728", title="Nash point")
    canvas.save(path)


def sweep_svg(cells, path, view=(25.0, -60.0), title=""):
    """Bubble per momentum triad; size and colour both encode capped distance."""
    proj = view_matrix(*view)
    betas = np.array([c.beta for c in cells], float).reshape(-1, 3)
    canvas = _Canvas(title)
    box = np.array([[s0, s1, s2] for s0 in (-1, 1) for s1 in (-1, 1) for s2 in (-1, 1)], float)
    canvas.fit(box @ proj.T)
    _axes(canvas, proj, 1.0, ("beta_theta", "beta_phi", "beta_psi"))
    depth = betas @ np.cross(proj[0], proj[1])
    for i in np.argsort(depth, kind="stable"):
        cell = cells[i]
        d = float(cell.capped_distance)
        canvas.circle(proj @ betas[i], 1.0 + 5.0 * d, colormap(d), 0.7,
                      title=f"beta={tuple(round(b, 4) for b in cell.beta)} distance={d:.4g}")
    canvas.save(path)


def gan_svg(means, covs, labels, points, path, background=None, title=""):
    """Generated points coloured by requested class over the mixture's 3-sd ellipses."""
    points = np.asarray(points, float).reshape(-1, 2)
    means = np.asarray(means, float)
    canvas = _Canvas(title)
    extent = np.vstack([means + 3.5 * np.sqrt(covs.max()), means - 3.5 * np.sqrt(covs.max())])
    finite = points[np.all(np.isfinite(points), axis=1)]
    canvas.fit(np.vstack([extent, finite] + ([] if background is None else [background])))
    if background is not None:
        for p in background:
            canvas.circle(p, 1.2, "#cccccc")
    for k, (m, cov) in enumerate(zip(means, covs)):
        canvas.ellipse(m, cov, CLASS_COLORS[k % len(CLASS_COLORS)])
    for lab, p in zip(labels, points):
        if np.all(np.isfinite(p)):
            canvas.circle(p, 2.0, CLASS_COLORS[int(lab) % len(CLASS_COLORS)], 0.8)
    canvas.save(path)
