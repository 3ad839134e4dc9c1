"""Small planar-geometry helpers: point/segment predicates, polygon
containment, and SVG polyline export. Points are complex numbers."""

from __future__ import annotations

import numpy as np


def distance_point_segment(p: complex, a: complex, b: complex) -> float:
    """Euclidean distance from point p to the closed segment [a, b]."""
    ab = b - a
    denom = abs(ab) ** 2
    if denom == 0.0:
        return abs(p - a)
    s = ((p - a) * np.conj(ab)).real / denom
    s = min(1.0, max(0.0, s))
    return abs(p - (a + s * ab))


def distance_point_ray(p: complex, origin: complex, direction: complex) -> float:
    """Distance from p to the ray origin + s*direction, s >= 0."""
    d = direction / abs(direction)
    s = ((p - origin) * np.conj(d)).real
    if s <= 0.0:
        return abs(p - origin)
    return abs(p - (origin + s * d))


def _orient(a: complex, b: complex, c: complex) -> float:
    return (b - a).real * (c - a).imag - (b - a).imag * (c - a).real


def segments_intersect(a: complex, b: complex, c: complex, d: complex) -> bool:
    """True if closed segments [a,b] and [c,d] share a point."""
    o1 = _orient(a, b, c)
    o2 = _orient(a, b, d)
    o3 = _orient(c, d, a)
    o4 = _orient(c, d, b)
    if ((o1 > 0) != (o2 > 0) or (o1 == 0) != (o2 == 0)) and (
        (o3 > 0) != (o4 > 0) or (o3 == 0) != (o4 == 0)
    ):
        # proper crossing needs strict sign change on both sides
        if (o1 * o2 < 0) and (o3 * o4 < 0):
            return True
    # collinear / endpoint-touching cases
    for p, (u, v) in ((c, (a, b)), (d, (a, b)), (a, (c, d)), (b, (c, d))):
        if _orient(u, v, p) == 0.0:
            lo_x, hi_x = min(u.real, v.real), max(u.real, v.real)
            lo_y, hi_y = min(u.imag, v.imag), max(u.imag, v.imag)
            if lo_x <= p.real <= hi_x and lo_y <= p.imag <= hi_y:
                return True
    return False


def point_in_polygon(p: complex, vertices, boundary_tol: float = 0.0) -> bool:
    """Ray-casting containment test; points within boundary_tol of an edge
    count as inside."""
    n = len(vertices)
    if boundary_tol > 0.0:
        for k in range(n):
            if distance_point_segment(p, vertices[k], vertices[(k + 1) % n]) <= boundary_tol:
                return True
    inside = False
    x, y = p.real, p.imag
    j = n - 1
    for k in range(n):
        xk, yk = vertices[k].real, vertices[k].imag
        xj, yj = vertices[j].real, vertices[j].imag
        if (yk < y <= yj) or (yj < y <= yk):
            if xk + (y - yk) / (yj - yk) * (xj - xk) < x:
                inside = not inside
        j = k
    return inside


def polylines_to_svg(polylines, width: int = 640, height: int = 480, margin: float = 0.05) -> str:
    """Render tagged polylines ((tag, points) pairs) as a standalone SVG
    document. Output is deterministic: no timestamps, fixed formatting."""
    pts = [p for _, line in polylines for p in line]
    if not pts:
        return (
            '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d"></svg>\n'
            % (width, height)
        )
    xs = [p.real for p in pts]
    ys = [p.imag for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    dx = (x1 - x0) or 1.0
    dy = (y1 - y0) or 1.0
    pad = margin * max(dx, dy)
    x0, x1, y0, y1 = x0 - pad, x1 + pad, y0 - pad, y1 + pad
    scale = min(width / (x1 - x0), height / (y1 - y0))

    def to_px(p: complex) -> str:
        # flip y: SVG y axis points down
        return "%.3f,%.3f" % ((p.real - x0) * scale, (y1 - p.imag) * scale)

    out = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" '
        'viewBox="0 0 %d %d">' % (width, height, width, height)
    ]
    colors = {"horizontal": "#1f77b4", "vertical": "#d62728"}
    for tag, line in polylines:
        if len(line) < 2:
            continue
        color = colors.get(tag, "#333333")
        out.append(
            '<polyline fill="none" stroke="%s" stroke-width="1" points="%s"/>'
            % (color, " ".join(to_px(p) for p in line))
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
