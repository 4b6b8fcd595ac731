"""Mesh, camera and image types plus the projection math shared downstream."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

DEGENERATE_AREA = 1e-12
ROTATION_TOL = 1e-6


class MeshError(ValueError):
    """Raised when a mesh violates a structural invariant."""


class CameraError(ValueError):
    """Raised for malformed or physically invalid camera parameters."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ImageBuffer:
    """Float image with intensities in [0, 1], shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"image must be HxW, HxWx1 or HxWx3, got shape {data.shape}")
        if data.size and (not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def to_gray(self) -> "ImageBuffer":
        if self.channels == 1:
            return self
        luma = self.data @ np.array([0.299, 0.587, 0.114])
        return ImageBuffer(np.clip(luma, 0.0, 1.0))


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle mesh with optional per-face UVs and per-face colors.

    ``uv_faces`` has shape (F, 3, 2); rows for faces without texture
    coordinates are NaN. ``texture_path`` points at the atlas image when the
    mesh came from a textured OBJ.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uv_faces: Optional[np.ndarray] = None
    face_colors: Optional[np.ndarray] = None
    texture_path: Optional[Path] = None

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if faces.size:
            bad = np.nonzero((faces < 0).any(axis=1) | (faces >= len(vertices)).any(axis=1))[0]
            if bad.size:
                raise MeshError(
                    f"dangling index: faces {bad[:10].tolist()} reference vertices outside [0, {len(vertices)})"
                )
        object.__setattr__(self, "vertices", _frozen(vertices))
        object.__setattr__(self, "faces", _frozen(faces))
        if self.uv_faces is not None:
            uv = np.asarray(self.uv_faces, dtype=np.float64).reshape(-1, 3, 2)
            if len(uv) != len(faces):
                raise MeshError(f"uv_faces has {len(uv)} entries for {len(faces)} faces")
            object.__setattr__(self, "uv_faces", _frozen(uv))
        if self.face_colors is not None:
            colors = np.asarray(self.face_colors, dtype=np.float64)
            if colors.ndim == 1:
                colors = colors[:, None]
            if len(colors) != len(faces):
                raise MeshError(f"face_colors has {len(colors)} entries for {len(faces)} faces")
            object.__setattr__(self, "face_colors", _frozen(colors))
        if self.texture_path is not None:
            object.__setattr__(self, "texture_path", Path(self.texture_path))

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def has_uvs(self) -> bool:
        return self.uv_faces is not None and bool(np.isfinite(self.uv_faces).any())

    def triangles(self) -> np.ndarray:
        """World-space corner positions, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    def face_normals(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit normals (zero for degenerate faces) and areas for all faces."""
        tri = self.triangles()
        if len(tri) == 0:
            return np.zeros((0, 3)), np.zeros(0)
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norm = np.linalg.norm(cross, axis=1)
        area = 0.5 * norm
        normals = np.zeros_like(cross)
        ok = area >= DEGENERATE_AREA
        normals[ok] = cross[ok] / norm[ok, None]
        return normals, area

    def degenerate_faces(self) -> np.ndarray:
        return self.face_normals()[1] < DEGENERATE_AREA

    def with_face_colors(self, colors: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.faces, self.uv_faces, colors, self.texture_path)


@dataclass(frozen=True)
class TextureAtlas:
    image: ImageBuffer

    def __post_init__(self):
        if self.image.width == 0 or self.image.height == 0:
            raise ValueError("texture atlas image is empty")


@dataclass(frozen=True)
class PinholeView:
    """Pinhole camera ``x ~ K (R X + t)`` with an attached image.

    Pixel centers sit at integer coordinates, so a principal point of
    ((w - 1) / 2, (h - 1) / 2) is the image center.
    """

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int
    image: Optional[ImageBuffer] = field(default=None, compare=False)

    def __post_init__(self):
        K = np.asarray(self.intrinsics, dtype=np.float64).reshape(3, 3)
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(K)) or not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise CameraError("camera parameters must be finite")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise CameraError("intrinsics must have positive focal lengths")
        if not np.allclose(K[2], [0.0, 0.0, 1.0]):
            raise CameraError("intrinsics last row must be [0, 0, 1]")
        err = np.abs(R @ R.T - np.eye(3)).max()
        if err > ROTATION_TOL:
            raise CameraError(f"rotation is not orthonormal (max deviation {err:.3g})")
        if np.linalg.det(R) < 0:
            raise CameraError("improper rotation: determinant is -1")
        if self.width <= 0 or self.height <= 0:
            raise CameraError("image size must be positive")
        if self.image is not None and (self.image.width, self.image.height) != (self.width, self.height):
            raise CameraError(
                f"image is {self.image.width}x{self.image.height}, camera expects {self.width}x{self.height}"
            )
        object.__setattr__(self, "intrinsics", _frozen(K))
        object.__setattr__(self, "rotation", _frozen(R))
        object.__setattr__(self, "translation", _frozen(t))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def with_image(self, image: Optional[ImageBuffer]) -> "PinholeView":
        return PinholeView(self.intrinsics, self.rotation, self.translation, self.width, self.height, image)


def project_point(view: PinholeView, p) -> tuple[np.ndarray, float]:
    """Project a world point into ``view``.

    Returns:
        The pixel position and the camera-space depth. Points at or behind
        the camera plane have depth <= 0; their pixel is meaningless and the
        caller must check.
    """
    pc = view.to_camera(p)
    z = float(pc[2])
    with np.errstate(divide="ignore", invalid="ignore"):
        uvw = view.intrinsics @ pc
        pixel = uvw[:2] / z
    return pixel, z


def project_points(view: PinholeView, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pc = view.to_camera(points)
    z = pc[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uvw = pc @ view.intrinsics.T
        pixels = uvw[..., :2] / z[..., None]
    return pixels, z


class FaceGeometry(NamedTuple):
    points: np.ndarray
    normal: np.ndarray
    area: float
    degenerate: bool


def face_world_data(mesh: TriangleMesh, face_id: int) -> FaceGeometry:
    """Corners, right-hand unit normal and area of one face.

    Degenerate faces (area below 1e-12) are flagged and get a zero normal.
    """
    if not 0 <= face_id < mesh.n_faces:
        raise IndexError(f"face {face_id} out of range for {mesh.n_faces} faces")
    pts = mesh.vertices[mesh.faces[face_id]]
    cross = np.cross(pts[1] - pts[0], pts[2] - pts[0])
    norm = float(np.linalg.norm(cross))
    area = 0.5 * norm
    if area < DEGENERATE_AREA:
        return FaceGeometry(pts.copy(), np.zeros(3), area, True)
    return FaceGeometry(pts.copy(), cross / norm, area, False)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera rotation and translation for a camera at ``eye``.

    Uses the x-right, y-down, z-forward camera convention.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, [0.0, 1.0, 0.0])
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    return R, -R @ eye
