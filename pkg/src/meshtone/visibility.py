"""Per-view face visibility through a software z-buffer.

Each view is rasterized at full resolution with per-pixel face ids. A face
counts as observed when it faces the camera, covers enough pixel centers, and
wins the depth test on most of them. Its pixel sample vector is exactly the
set of image values at the pixels it owns.
"""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import PinholeView, TriangleMesh
from .io import save_image
from .raster import triangle_coverage

NEAR_PLANE = 1e-4
EMPTY = -1


class NotObservedError(ValueError):
    pass


@dataclass(frozen=True)
class DepthBuffer:
    """Z-buffer for one view.

    ``depth`` is camera-space z (+inf where empty), ``face_id`` the winning
    face (-1 where empty), ``footprint`` the number of pixel centers each
    front-facing face covers before the depth test.
    """

    depth: np.ndarray
    face_id: np.ndarray
    footprint: np.ndarray

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def won_pixels(self, n_faces: int) -> np.ndarray:
        ids = self.face_id[self.face_id >= 0]
        return np.bincount(ids, minlength=n_faces)[:n_faces]


@dataclass(frozen=True)
class PixelSampleVector:
    face_id: int
    view_id: int
    samples: np.ndarray  # (count, channels)

    @property
    def count(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class FaceObservationSet:
    """Observed/unobserved split of all faces for one view.

    ``samples`` is None for a partition-only result; otherwise it is keyed
    exactly by ``observed``.
    """

    view_id: int
    observed: frozenset
    unobserved: frozenset
    samples: Optional[dict] = None
    footprint: Optional[np.ndarray] = None
    won: Optional[np.ndarray] = None


def front_facing(mesh: TriangleMesh, view: PinholeView) -> np.ndarray:
    """Faces whose normal points toward the camera; degenerate faces never do."""
    normals, area = mesh.face_normals()
    if mesh.n_faces == 0:
        return np.zeros(0, dtype=bool)
    centroids = mesh.triangles().mean(axis=1)
    to_face = centroids - view.center
    return (np.einsum("ij,ij->i", normals, to_face) < 0) & (area >= 1e-12)


def _clip_near(poly: np.ndarray, near: float) -> np.ndarray:
    out = []
    n = len(poly)
    for k in range(n):
        a, b = poly[k], poly[(k + 1) % n]
        a_in, b_in = a[2] >= near, b[2] >= near
        if a_in:
            out.append(a)
        if a_in != b_in:
            s = (near - a[2]) / (b[2] - a[2])
            p = a + s * (b - a)
            p[2] = near
            out.append(p)
    return np.asarray(out)


def rasterize_depth(mesh: TriangleMesh, view: PinholeView, near: float = NEAR_PLANE) -> DepthBuffer:
    """Nearest front-facing face per pixel center.

    Faces are drawn in ascending id order with a strict depth test, so an
    exact depth tie goes to the lower face id.
    """
    h, w = view.height, view.width
    depth = np.full(h * w, np.inf)
    face_id = np.full(h * w, EMPTY, dtype=np.int64)
    footprint = np.zeros(mesh.n_faces, dtype=np.int64)
    if mesh.n_faces == 0:
        return DepthBuffer(depth.reshape(h, w), face_id.reshape(h, w), footprint)

    cam = view.to_camera(mesh.vertices)
    K = view.intrinsics
    for f in np.nonzero(front_facing(mesh, view))[0]:
        tri = cam[mesh.faces[f]]
        z = tri[:, 2]
        if np.all(z < near):
            continue
        poly = tri if np.all(z >= near) else _clip_near(tri, near)
        if len(poly) < 3:
            continue
        proj = poly @ K.T
        pix = proj[:, :2] / proj[:, 2:3]
        inv_z = 1.0 / poly[:, 2]
        for k in range(1, len(poly) - 1):
            idx = [0, k, k + 1]
            xs, ys, bary = triangle_coverage(pix[idx[0]], pix[idx[1]], pix[idx[2]], w, h)
            if xs.size == 0:
                continue
            footprint[f] += xs.size
            zs = 1.0 / (bary @ inv_z[idx])
            lin = ys * w + xs
            closer = zs < depth[lin]
            depth[lin[closer]] = zs[closer]
            face_id[lin[closer]] = f
    return DepthBuffer(depth.reshape(h, w), face_id.reshape(h, w), footprint)


def classify_faces(
    mesh: TriangleMesh,
    view: PinholeView,
    buf: DepthBuffer,
    view_id: int = 0,
    min_pixels: int = 5,
    visibility_fraction: float = 0.75,
) -> FaceObservationSet:
    """Split faces into observed and unobserved for one view (partition only).

    A face is observed when it is front-facing, its footprint and its number
    of depth-test wins are both at least ``min_pixels``, and at least
    ``visibility_fraction`` of its footprint survives the depth test.
    """
    n = mesh.n_faces
    won = buf.won_pixels(n)
    fp = buf.footprint
    ok = front_facing(mesh, view) & (fp >= min_pixels) & (won >= min_pixels)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(fp > 0, won / np.maximum(fp, 1), 0.0)
    ok &= frac >= visibility_fraction
    observed = frozenset(np.nonzero(ok)[0].tolist())
    unobserved = frozenset(range(n)) - observed
    return FaceObservationSet(view_id, observed, unobserved, None, fp.copy(), won)


def sample_face_pixels(view: PinholeView, buf: DepthBuffer, face_id: int, view_id: int = 0) -> PixelSampleVector:
    """Image values at the pixels owned by ``face_id``, in row-major order."""
    mask = buf.face_id == face_id
    if not mask.any():
        raise NotObservedError(f"face {face_id} not observed: it owns no pixels in view {view_id}")
    return PixelSampleVector(face_id, view_id, view.image.data[mask])


def _group_samples(view: PinholeView, buf: DepthBuffer, faces, view_id: int) -> dict:
    ids = buf.face_id.ravel()
    pixels = view.image.data.reshape(-1, view.image.channels)
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    out = {}
    for f in sorted(faces):
        lo, hi = np.searchsorted(sorted_ids, [f, f + 1])
        if hi == lo:
            raise NotObservedError(f"face {f} not observed: it owns no pixels in view {view_id}")
        out[f] = PixelSampleVector(f, view_id, pixels[order[lo:hi]])
    return out


def observe_view(
    mesh: TriangleMesh,
    view: PinholeView,
    view_id: int = 0,
    min_pixels: int = 5,
    visibility_fraction: float = 0.75,
    buf: Optional[DepthBuffer] = None,
) -> FaceObservationSet:
    """Rasterize, classify and sample one view."""
    if view.image is None:
        raise ValueError(f"view {view_id} has no image")
    if buf is None:
        buf = rasterize_depth(mesh, view)
    part = classify_faces(mesh, view, buf, view_id, min_pixels, visibility_fraction)
    samples = _group_samples(view, buf, part.observed, view_id)
    return FaceObservationSet(view_id, part.observed, part.unobserved, samples, part.footprint, part.won)


def observe_views(
    mesh: TriangleMesh,
    views: Sequence[PinholeView],
    workers: int = 1,
    return_buffers: bool = False,
    **params,
):
    """Observe every view; output order is view order for any worker count.

    With ``return_buffers`` the per-view depth buffers are returned as a
    second list.
    """

    def run(i):
        buf = rasterize_depth(mesh, views[i])
        return observe_view(mesh, views[i], i, buf=buf, **params), buf

    if workers <= 1 or len(views) <= 1:
        results = [run(i) for i in range(len(views))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(len(views))))
    observations = [r[0] for r in results]
    if return_buffers:
        return observations, [r[1] for r in results]
    return observations


def _id_colors(ids: np.ndarray) -> np.ndarray:
    palette = {}
    for f in np.unique(ids):
        if f < 0:
            palette[f] = (0.0, 0.0, 0.0)
        else:
            digest = hashlib.md5(str(int(f)).encode()).digest()
            palette[f] = tuple(b / 255.0 for b in digest[:3])
    out = np.zeros(ids.shape + (3,))
    for f, rgb in palette.items():
        out[ids == f] = rgb
    return out


def dump_visibility(bufs: Sequence[DepthBuffer], observations: Sequence[FaceObservationSet], out_dir) -> None:
    """Write face-id PNGs and a per-view CSV of footprints and visible fractions."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for buf, obs in zip(bufs, observations):
        save_image(_id_colors(buf.face_id), out_dir / f"faceid_{obs.view_id:03d}.png")
    with open(out_dir / "visibility.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["view_id", "face_id", "pixel_count", "visible_fraction"])
        for obs in observations:
            for f in np.nonzero(obs.footprint)[0]:
                frac = obs.won[f] / obs.footprint[f]
                writer.writerow([obs.view_id, int(f), int(obs.won[f]), f"{frac:.6f}"])
