"""Flat preview renders of face-colored or textured meshes."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .geometry import ImageBuffer, PinholeView, TextureAtlas, TriangleMesh
from .raster import triangle_coverage
from .texture import uv_to_texel
from .visibility import rasterize_depth


def render_flat(
    mesh: TriangleMesh,
    view: PinholeView,
    face_colors: Optional[np.ndarray] = None,
    atlas: Optional[TextureAtlas] = None,
    background: float = 0.0,
) -> ImageBuffer:
    """Render per-face colors, or nearest-texel atlas lookups, from ``view``.

    Faces with NaN colors render as background.
    """
    buf = rasterize_depth(mesh, view)
    h, w = view.height, view.width
    if atlas is not None:
        channels = atlas.image.channels
    elif face_colors is not None:
        face_colors = np.asarray(face_colors, dtype=np.float64).reshape(mesh.n_faces, -1)
        channels = face_colors.shape[1]
    else:
        channels = 3
        face_colors = np.full((mesh.n_faces, 3), 0.8)
    out = np.full((h * w, channels), float(background))
    ids = buf.face_id.ravel()

    if atlas is None:
        hit = ids >= 0
        out[hit] = np.nan_to_num(face_colors[ids[hit]], nan=background)
        return ImageBuffer(np.clip(out, 0.0, 1.0).reshape(h, w, channels))

    tex = atlas.image
    cam = view.to_camera(mesh.vertices)
    for f in np.unique(ids[ids >= 0]):
        uv = mesh.uv_faces[f]
        tri = cam[mesh.faces[f]]
        if not np.all(np.isfinite(uv)) or np.any(tri[:, 2] <= 0):
            continue
        proj = tri @ view.intrinsics.T
        pix = proj[:, :2] / proj[:, 2:3]
        xs, ys, bary = triangle_coverage(pix[0], pix[1], pix[2], w, h)
        lin = ys * w + xs
        mine = ids[lin] == f
        if not mine.any():
            continue
        # perspective-correct interpolation of UVs
        pb = bary[mine] / tri[:, 2]
        pb /= pb.sum(axis=1, keepdims=True)
        t = uv_to_texel(pb @ uv, tex.width, tex.height)
        tx = np.clip(np.rint(t[:, 0]).astype(int), 0, tex.width - 1)
        ty = np.clip(np.rint(t[:, 1]).astype(int), 0, tex.height - 1)
        out[lin[mine]] = tex.data[ty, tx]
    return ImageBuffer(np.clip(out, 0.0, 1.0).reshape(h, w, channels))
