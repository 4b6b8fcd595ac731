"""Texture atlas correction toward estimated per-face colors.

Each face's texture patch is scaled per channel by ``target / patch_mean``,
so an unclamped patch ends up with exactly the target mean while the ratios
between its texels stay the same.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import ImageBuffer, MeshError, TextureAtlas, TriangleMesh
from .raster import triangle_coverage

logger = logging.getLogger(__name__)

MIN_PATCH_MEAN = 1.0 / 255.0


@dataclass(frozen=True)
class TexturePatch:
    face_id: int
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # (count, channels)
    skipped: bool = False

    @property
    def count(self) -> int:
        return len(self.xs)


@dataclass(frozen=True)
class PatchReport:
    face_id: int
    mean: np.ndarray
    target: np.ndarray
    ratio: np.ndarray
    clamped: int
    skipped: bool


@dataclass(frozen=True)
class CorrectedAtlas:
    image: ImageBuffer
    report: list
    shared_texels: int = 0


def uv_to_texel(uv: np.ndarray, width: int, height: int) -> np.ndarray:
    """Map UVs (v up) to texel coordinates with texel centers at integers."""
    uv = np.asarray(uv, dtype=np.float64)
    return np.stack([uv[..., 0] * width - 0.5, (1.0 - uv[..., 1]) * height - 0.5], axis=-1)


def extract_patch(atlas: TextureAtlas, mesh: TriangleMesh, face_id: int) -> TexturePatch:
    """Atlas texels whose centers fall inside the face's UV triangle.

    Faces without UVs, with a zero-area UV triangle, or covering no texel
    center come back empty and flagged ``skipped``.

    Raises:
        MeshError: if the mesh has no UVs at all or the UV triangle leaves
            the [0, 1] square.
    """
    if mesh.uv_faces is None:
        raise MeshError("mesh has no UV coordinates")
    img = atlas.image
    empty = TexturePatch(face_id, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, img.channels)), True)
    uv = mesh.uv_faces[face_id]
    if not np.all(np.isfinite(uv)):
        return empty
    if uv.min() < 0.0 or uv.max() > 1.0:
        raise MeshError(f"UV out of bounds for face {face_id}: {uv.tolist()}")
    p = uv_to_texel(uv, img.width, img.height)
    xs, ys, _ = triangle_coverage(p[0], p[1], p[2], img.width, img.height)
    if xs.size == 0:
        return empty
    return TexturePatch(face_id, xs, ys, img.data[ys, xs].copy())


def patch_mean(patch: TexturePatch) -> np.ndarray:
    """Plain per-channel mean of the patch texels."""
    if patch.count == 0:
        raise ValueError(f"patch of face {patch.face_id} is empty")
    return np.array([math.fsum(patch.values[:, c]) / patch.count for c in range(patch.values.shape[1])])


def correct_patch(patch: TexturePatch, target, min_mean: float = MIN_PATCH_MEAN):
    """Scale each channel of the patch by ``target / mean`` and clamp to [0, 1].

    Channels whose mean is below ``min_mean`` are left untouched (the ratio
    is undefined there) and get a NaN ratio.

    Returns:
        ``(values, report)``.
    """
    target = np.atleast_1d(np.asarray(target, dtype=np.float64))
    if not np.all(np.isfinite(target)) or np.any(target < 0):
        raise ValueError(f"target color must be finite and non-negative, got {target}")
    mean = patch_mean(patch)
    if target.size == 1 and mean.size > 1:
        raise ValueError("single-channel target for a multi-channel patch")
    values = patch.values.copy()
    ratio = np.full(mean.shape, np.nan)
    clamped = np.zeros(patch.count, dtype=bool)
    for c in range(mean.size):
        if mean[c] < min_mean:
            continue
        ratio[c] = target[c] / mean[c]
        scaled = patch.values[:, c] * ratio[c]
        clamped |= scaled > 1.0
        values[:, c] = np.clip(scaled, 0.0, 1.0)
    skipped = bool(np.all(np.isnan(ratio)))
    return values, PatchReport(patch.face_id, mean, target, ratio, int(clamped.sum()), skipped)


def correct_atlas(
    atlas: TextureAtlas,
    mesh: TriangleMesh,
    colors,
    min_mean: float = MIN_PATCH_MEAN,
) -> CorrectedAtlas:
    """Rewrite every correctable face patch toward its estimated color.

    Texels claimed by more than one UV triangle are written by the highest
    face id. Uncolored faces and faces without a usable patch are skipped.
    """
    if not mesh.has_uvs:
        raise MeshError("mesh has no UV coordinates; cannot correct a texture atlas")
    table_colors = np.asarray(getattr(colors, "colors", colors), dtype=np.float64)
    if table_colors.ndim == 1:
        table_colors = table_colors[:, None]
    if len(table_colors) != mesh.n_faces:
        raise ValueError(f"{len(table_colors)} colors for {mesh.n_faces} faces")
    img = atlas.image
    if table_colors.shape[1] != img.channels:
        raise ValueError(f"colors have {table_colors.shape[1]} channels, atlas has {img.channels}")

    patches = [extract_patch(atlas, mesh, f) for f in range(mesh.n_faces)]
    owner = np.full((img.height, img.width), -1, dtype=np.int64)
    claims = np.zeros((img.height, img.width), dtype=np.int64)
    for p in patches:
        owner[p.ys, p.xs] = p.face_id
        claims[p.ys, p.xs] += 1
    shared = int((claims > 1).sum())
    if shared:
        logger.warning("%d atlas texels are claimed by several faces; highest face id wins", shared)

    out = img.data.copy()
    report = []
    nan_c = np.full(img.channels, np.nan)
    for p in patches:
        target = table_colors[p.face_id]
        if p.skipped or p.count == 0 or not np.all(np.isfinite(target)):
            mean = patch_mean(p) if p.count else nan_c
            report.append(PatchReport(p.face_id, mean, target, nan_c, 0, True))
            continue
        values, rep = correct_patch(p, target, min_mean)
        mine = owner[p.ys, p.xs] == p.face_id
        out[p.ys[mine], p.xs[mine]] = values[mine]
        report.append(rep)
    return CorrectedAtlas(ImageBuffer(out), report, shared)


def write_report_csv(report, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["face", "M_r", "M_g", "M_b", "target_r", "target_g", "target_b", "clamped", "skipped"])
        for r in report:
            m = _rgb(r.mean)
            t = _rgb(r.target)
            writer.writerow([r.face_id, *m, *t, r.clamped, int(r.skipped)])


def _rgb(v: Optional[np.ndarray]) -> list[str]:
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if v.size == 1:
        v = np.repeat(v, 3)
    return ["" if np.isnan(x) else repr(float(x)) for x in v[:3]]
