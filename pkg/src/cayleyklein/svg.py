"""Deterministic SVG rendering of planar scenes."""

from dataclasses import dataclass, field
import hashlib
from xml.sax.saxutils import escape

import numpy as np

from .errors import EmptyScene

PALETTE_SATURATION = 55
PALETTE_LIGHTNESS = 78


@dataclass
class Curve:
    """A polyline drawn with a stroke; closed curves return to their start."""

    points: np.ndarray
    stroke: str = "#333333"
    closed: bool = True
    dashed: bool = False


@dataclass
class Scene:
    diagram: object = None
    conic: np.ndarray = None
    curves: list = field(default_factory=list)
    sites: np.ndarray = None
    labels: list = None
    marks: np.ndarray = None
    title: str = ""


def owner_color(owners):
    """Fill colour derived from an md5 digest of the owner set."""
    key = ",".join(str(int(o)) for o in sorted(owners)).encode("ascii")
    hue = int(hashlib.md5(key).hexdigest()[:8], 16) % 360
    return f"hsl({hue},{PALETTE_SATURATION}%,{PALETTE_LIGHTNESS}%)"


def label_color(label):
    hue = int(hashlib.md5(str(label).encode("utf-8")).hexdigest()[:8], 16) % 360
    return f"hsl({hue},70%,35%)"


class _Frame:
    """World-to-pixel map keeping aspect ratio, with the y axis pointing up."""

    def __init__(self, pts, width, height, margin, digits):
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = np.maximum(hi - lo, 1e-12)
        self.s = min((width - 2 * margin) / span[0], (height - 2 * margin) / span[1])
        self.ox = margin + 0.5 * ((width - 2 * margin) - self.s * span[0]) - self.s * lo[0]
        self.oy = height - margin - 0.5 * ((height - 2 * margin) - self.s * span[1]) + self.s * lo[1]
        self.digits = digits

    def num(self, v):
        text = f"{v:.{self.digits}f}".rstrip("0").rstrip(".")
        return "0" if text in ("-0", "") else text

    def xy(self, p):
        return self.num(self.ox + self.s * p[0]), self.num(self.oy - self.s * p[1])

    def points(self, P):
        return " ".join(",".join(self.xy(p)) for p in P)

    def path(self, P, closed=True):
        parts = [f"{'M' if i == 0 else 'L'}{x},{y}" for i, (x, y) in enumerate(map(self.xy, P))]
        return " ".join(parts) + (" Z" if closed else "")


def render_svg(scene, width=600, height=600, margin=20, digits=3, site_radius=3.0):
    """SVG 1.1 text for ``scene``; identical input gives identical bytes.

    Cells are filled polygons coloured by their owner set, the domain
    boundary is a single path, extra curves are polylines and sites are
    circles.
    """
    parts = []
    if scene.diagram is not None:
        parts.extend(c.polygon for c in scene.diagram.cells)
    for arr in (scene.conic, scene.sites, scene.marks):
        if arr is not None and len(arr):
            parts.append(np.atleast_2d(arr))
    parts.extend(np.atleast_2d(c.points) for c in scene.curves if len(c.points))
    if not parts:
        raise EmptyScene("nothing to draw")
    frame = _Frame(np.vstack(parts), width, height, margin, digits)

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">']
    if scene.title:
        out.append(f"<title>{escape(scene.title)}</title>")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>')
    if scene.diagram is not None:
        out.append('<g id="cells" stroke="#555555" stroke-width="0.6">')
        for cell in scene.diagram.cells:
            owners = " ".join(str(o) for o in cell.owners)
            out.append(f'<polygon data-owners="{owners}" fill="{owner_color(cell.owners)}" '
                       f'points="{frame.points(cell.polygon)}"/>')
        out.append("</g>")
    if scene.conic is not None and len(scene.conic):
        out.append(f'<path id="conic" fill="none" stroke="#000000" stroke-width="1.2" '
                   f'd="{frame.path(scene.conic)}"/>')
    for i, c in enumerate(scene.curves):
        tag = "polygon" if c.closed else "polyline"
        dash = ' stroke-dasharray="4,3"' if c.dashed else ""
        out.append(f'<{tag} id="curve{i}" fill="none" stroke="{c.stroke}" stroke-width="1"{dash} '
                   f'points="{frame.points(c.points)}"/>')
    if scene.marks is not None:
        for p in np.atleast_2d(scene.marks):
            x, y = frame.xy(p)
            out.append(f'<rect x="{frame.num(float(x) - 2)}" y="{frame.num(float(y) - 2)}" '
                       f'width="4" height="4" fill="#aa0000"/>')
    if scene.sites is not None:
        out.append('<g id="sites">')
        for i, p in enumerate(np.atleast_2d(scene.sites)):
            x, y = frame.xy(p)
            fill = "#000000" if scene.labels is None else label_color(scene.labels[i])
            out.append(f'<circle cx="{x}" cy="{y}" r="{frame.num(site_radius)}" fill="{fill}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
