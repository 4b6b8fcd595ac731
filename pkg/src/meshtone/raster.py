"""Scan conversion of a single 2D triangle onto an integer pixel grid.

Pixel centers are at integer coordinates. Coverage follows the top-left fill
convention, so two triangles sharing an edge never both claim a pixel whose
center lies exactly on that edge.
"""

from __future__ import annotations

import numpy as np


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def triangle_coverage(p0, p1, p2, width: int, height: int):
    """Pixels whose centers lie inside a screen-space triangle.

    Args:
        p0, p1, p2: 2D corners in pixel coordinates (x right, y down).
        width, height: grid size; pixels outside are never returned.

    Returns:
        ``(xs, ys, bary)`` where ``bary`` has shape (N, 3) and holds the
        screen-space barycentric weights of each covered center. Empty
        arrays for zero-area or off-grid triangles.
    """
    pts = np.array([p0, p1, p2], dtype=np.float64)
    empty = (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 3)))
    if not np.all(np.isfinite(pts)):
        return empty
    area = _edge(*pts[0], *pts[1], *pts[2])
    if area == 0.0:
        return empty
    if area < 0:
        pts = pts[[0, 2, 1]]
        area = -area
        order = [0, 2, 1]
    else:
        order = [0, 1, 2]

    x0 = max(int(np.ceil(pts[:, 0].min())), 0)
    x1 = min(int(np.floor(pts[:, 0].max())), width - 1)
    y0 = max(int(np.ceil(pts[:, 1].min())), 0)
    y1 = min(int(np.floor(pts[:, 1].max())), height - 1)
    if x0 > x1 or y0 > y1:
        return empty

    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    xs = xs.ravel().astype(np.float64)
    ys = ys.ravel().astype(np.float64)

    inside = np.ones(xs.shape, dtype=bool)
    weights = []
    # weight of corner k is the edge function of the opposite edge
    for k in range(3):
        a = pts[(k + 1) % 3]
        b = pts[(k + 2) % 3]
        e = _edge(a[0], a[1], b[0], b[1], xs, ys)
        dx, dy = b[0] - a[0], b[1] - a[1]
        top_left = dy < 0 or (dy == 0 and dx > 0)
        inside &= (e > 0) | ((e == 0) & top_left)
        weights.append(e)

    bary = np.stack(weights, axis=1)[inside] / area
    # undo the winding swap so weights line up with the caller's corners
    bary = bary[:, np.argsort(order)]
    return xs[inside].astype(np.int64), ys[inside].astype(np.int64), bary
