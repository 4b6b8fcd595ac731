"""Synthetic scenes with known albedos, and a brute-force reference estimator.

Scenes are flat-shaded: a pixel covered by face k reads
``albedo[k] * gain[view]`` plus optional Gaussian noise and uniform outlier
pixels, clamped to [0, 1]. Everything is a pure function of the config seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import PipelineConfig
from .geometry import ImageBuffer, PinholeView, TextureAtlas, TriangleMesh, look_at
from .visibility import NEAR_PLANE, front_facing, rasterize_depth

SCENES = ("cube", "icosphere", "room-box")
RIGS = ("orbit", "sparse-wide")


@dataclass(frozen=True)
class SynthConfig:
    """Scene, rig and photometric perturbations of one synthetic capture.

    ``gains`` is an optional (view_count, channels) array; when omitted,
    gains are drawn uniformly from ``gain_range`` per view and channel.
    """

    scene: str = "cube"
    subdivisions: int = 0
    view_count: int = 8
    rig: str = "orbit"
    gains: Optional[tuple] = None
    gain_range: tuple = (0.5, 2.0)
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    seed: int = 0
    width: int = 64
    height: int = 64
    channels: int = 3
    elevation_deg: float = 40.0
    distance_factor: float = 1.5
    orbit_axis: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.scene not in SCENES:
            raise ValueError(f"unknown scene {self.scene!r}; expected one of {SCENES}")
        if self.rig not in RIGS:
            raise ValueError(f"unknown rig {self.rig!r}; expected one of {RIGS}")
        if self.view_count < 1:
            raise ValueError("view_count must be at least 1")
        if self.subdivisions < 0:
            raise ValueError("subdivisions must be non-negative")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        lo, hi = self.gain_range
        if not 0 < lo <= hi:
            raise ValueError("gain_range must be positive and ordered")
        if self.gains is not None:
            g = np.asarray(self.gains, dtype=np.float64)
            if g.shape[0] != self.view_count or np.any(g <= 0):
                raise ValueError("gains must be positive with one row per view")


@dataclass(frozen=True)
class GroundTruth:
    albedo: np.ndarray  # (faces, channels)
    gains: np.ndarray  # (views, channels)
    front_counts: np.ndarray = field(default=None)  # views in which each face is front-facing


# --------------------------------------------------------------------------
# meshes
# --------------------------------------------------------------------------


def _grid_side(origin, a, b, n, verts, faces):
    origin, a, b = (np.asarray(x, dtype=np.float64) for x in (origin, a, b))
    base = len(verts)
    for i in range(n + 1):
        for j in range(n + 1):
            verts.append(origin + a * (i / n) + b * (j / n))
    idx = lambda i, j: base + i * (n + 1) + j  # noqa: E731
    for i in range(n):
        for j in range(n):
            faces.append((idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)))
            faces.append((idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)))


# outward-facing sides of [-1, 1]^3 as (origin, a, b) with a x b outward
_CUBE_SIDES = {
    "+z": ((-1, -1, 1), (2, 0, 0), (0, 2, 0)),
    "-z": ((-1, -1, -1), (0, 2, 0), (2, 0, 0)),
    "+x": ((1, -1, -1), (0, 2, 0), (0, 0, 2)),
    "-x": ((-1, -1, -1), (0, 0, 2), (0, 2, 0)),
    "+y": ((-1, 1, -1), (0, 0, 2), (2, 0, 0)),
    "-y": ((-1, -1, -1), (2, 0, 0), (0, 0, 2)),
}


def make_cube(subdivisions: int = 0) -> TriangleMesh:
    """Closed cube [-1, 1]^3, each side an n x n grid with n = 2**subdivisions."""
    n = 2**subdivisions
    verts, faces = [], []
    for origin, a, b in _CUBE_SIDES.values():
        _grid_side(origin, a, b, n, verts, faces)
    return TriangleMesh(np.array(verts), np.array(faces))


def make_room_box(subdivisions: int = 0) -> TriangleMesh:
    """Open-top box with inward normals: a floor and four walls."""
    n = 2**subdivisions
    verts, faces = [], []
    for name in ("-z", "+x", "-x", "+y", "-y"):
        origin, a, b = _CUBE_SIDES[name]
        _grid_side(origin, b, a, n, verts, faces)
    return TriangleMesh(np.array(verts), np.array(faces))


def make_icosphere(subdivisions: int = 0) -> TriangleMesh:
    t = (1.0 + 5.0**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh(np.array(verts), np.array(faces))


def make_mesh(scene: str, subdivisions: int = 0) -> TriangleMesh:
    return {"cube": make_cube, "icosphere": make_icosphere, "room-box": make_room_box}[scene](subdivisions)


# --------------------------------------------------------------------------
# cameras
# --------------------------------------------------------------------------


def _camera_positions(config: SynthConfig, radius: float, rng: np.random.Generator) -> np.ndarray:
    d = config.distance_factor * radius
    if config.rig == "orbit":
        n = np.asarray(config.orbit_axis, dtype=np.float64)
        n = n / np.linalg.norm(n)
        # orthonormal basis (a, b) of the orbit plane
        a = np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0])
        a /= np.linalg.norm(a)
        b = np.cross(n, a)
        if abs(n[2]) > 1 - 1e-12:
            a, b = np.array([1.0, 0.0, 0.0]), np.array([0.0, np.sign(n[2]), 0.0])
        el = math.radians(config.elevation_deg)
        az = 2 * np.pi * np.arange(config.view_count) / config.view_count
        ring = np.cos(az)[:, None] * a + np.sin(az)[:, None] * b
        return d * (math.cos(el) * ring + math.sin(el) * n)

    # sparse-wide: random directions at least 60 degrees apart, away from the poles
    min_cos = math.cos(math.radians(60.0))
    lo = math.sin(math.radians(-60.0))
    hi = math.sin(math.radians(75.0))
    for _ in range(200):
        dirs = []
        for _ in range(200):
            az = rng.uniform(0, 2 * np.pi)
            el = math.asin(rng.uniform(lo, hi))
            u = np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
            if all(u @ v <= min_cos for v in dirs):
                dirs.append(u)
                if len(dirs) == config.view_count:
                    return d * np.array(dirs)
    raise ValueError(f"cannot place {config.view_count} sparse-wide cameras 60 degrees apart")


def make_views(config: SynthConfig, mesh: TriangleMesh, rng: np.random.Generator) -> list[PinholeView]:
    center = mesh.vertices.mean(axis=0)
    radius = float(np.linalg.norm(mesh.vertices - center, axis=1).max())
    positions = _camera_positions(config, radius, rng) + center
    w, h = config.width, config.height
    views = []
    for eye in positions:
        R, t = look_at(eye, center)
        # tightest square field of view holding every vertex, with a small margin
        pc = mesh.vertices @ R.T + t
        extent = np.max(np.abs(pc[:, :2]) / pc[:, 2:3])
        f = 0.5 * (min(w, h) - 1) / extent * 0.95
        K = np.array([[f, 0, (w - 1) / 2], [0, f, (h - 1) / 2], [0, 0, 1]])
        views.append(PinholeView(K, R, t, w, h))
    return views


def in_frustum(mesh: TriangleMesh, view: PinholeView) -> bool:
    pc = view.to_camera(mesh.vertices)
    if np.any(pc[:, 2] <= NEAR_PLANE):
        return False
    px = pc @ view.intrinsics.T
    px = px[:, :2] / px[:, 2:3]
    inside_x = (px[:, 0] >= -0.5) & (px[:, 0] <= view.width - 0.5)
    inside_y = (px[:, 1] >= -0.5) & (px[:, 1] <= view.height - 0.5)
    return bool(np.all(inside_x & inside_y))


def generate_scene(config: SynthConfig):
    """Mesh, ground truth and (image-less) camera rig for a config.

    Returns:
        ``(mesh, truth, views)``.
    """
    rng = np.random.default_rng(config.seed)
    mesh = make_mesh(config.scene, config.subdivisions)
    albedo = rng.uniform(0.1, 0.9, size=(mesh.n_faces, config.channels))
    views = make_views(config, mesh, rng)
    if config.gains is not None:
        gains = np.asarray(config.gains, dtype=np.float64).reshape(config.view_count, -1)
        if gains.shape[1] == 1 and config.channels > 1:
            gains = np.repeat(gains, config.channels, axis=1)
    else:
        gains = rng.uniform(*config.gain_range, size=(config.view_count, config.channels))
    for i, v in enumerate(views):
        if not in_frustum(mesh, v):
            raise ValueError(f"camera {i} does not see the whole scene")
    counts = np.sum([front_facing(mesh, v) for v in views], axis=0)
    return mesh, GroundTruth(albedo, gains, counts), views


def render_view(
    mesh: TriangleMesh,
    truth: GroundTruth,
    view: PinholeView,
    gain,
    noise_sigma: float = 0.0,
    outlier_fraction: float = 0.0,
    seed: int = 0,
    view_id: int = 0,
) -> ImageBuffer:
    """Flat render of the albedos under one view's gain, with perturbations."""
    buf = rasterize_depth(mesh, view)
    channels = truth.albedo.shape[1]
    img = np.zeros((view.height * view.width, channels))
    ids = buf.face_id.ravel()
    covered = np.nonzero(ids >= 0)[0]
    values = truth.albedo[ids[covered]] * np.asarray(gain, dtype=np.float64)
    rng = np.random.default_rng([seed, view_id])
    if noise_sigma > 0:
        values = values + rng.normal(0.0, noise_sigma, size=values.shape)
    if outlier_fraction > 0:
        hit = rng.random(len(covered)) < outlier_fraction
        values[hit] = rng.random((int(hit.sum()), channels))
    img[covered] = np.clip(values, 0.0, 1.0)
    return ImageBuffer(img.reshape(view.height, view.width, channels))


def render_scene(config: SynthConfig):
    """Generate a scene and render every view. Returns ``(mesh, truth, views)``."""
    mesh, truth, views = generate_scene(config)
    rendered = [
        v.with_image(
            render_view(mesh, truth, v, truth.gains[i], config.noise_sigma, config.outlier_fraction, config.seed, i)
        )
        for i, v in enumerate(views)
    ]
    return mesh, truth, rendered


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    median_ratio: np.ndarray
    cov: np.ndarray
    max_rel_dev: np.ndarray
    uncolored: int
    colored: int


def evaluate(recovered, truth: GroundTruth) -> Metrics:
    """Consistency of recovered colors against the albedos.

    Per channel, over colored faces, the ratio recovered/albedo is
    summarized by its median, its coefficient of variation (population std
    over mean) and its largest relative deviation from the median. A global
    scale error leaves the CoV at zero.
    """
    colors = np.asarray(getattr(recovered, "colors", recovered), dtype=np.float64)
    if colors.ndim == 1:
        colors = colors[:, None]
    if len(colors) != len(truth.albedo):
        raise ValueError(f"{len(colors)} recovered colors for {len(truth.albedo)} faces")
    colored = np.all(np.isfinite(colors), axis=1)
    ratio = colors[colored] / truth.albedo[colored]
    if ratio.size == 0:
        nan = np.full(colors.shape[1], np.nan)
        return Metrics(nan, nan, nan, int((~colored).sum()), 0)
    med = np.median(ratio, axis=0)
    cov = ratio.std(axis=0) / ratio.mean(axis=0)
    dev = np.abs(ratio / med - 1.0).max(axis=0)
    return Metrics(med, cov, dev, int((~colored).sum()), int(colored.sum()))


# --------------------------------------------------------------------------
# synthetic texture atlas
# --------------------------------------------------------------------------


def make_atlas(
    mesh: TriangleMesh,
    truth: GroundTruth,
    views: Sequence[PinholeView],
    cell: int = 8,
    texture_sigma: float = 0.05,
    background: float = 0.25,
    seed: int = 0,
):
    """Best-view style atlas: each face's patch carries the gain of the view that sees it largest.

    Every face gets its own ``cell x cell`` slot holding a right triangle.
    Texels vary around ``albedo * gain`` by a multiplicative pattern so
    patches have contrast.

    Returns:
        ``(textured_mesh, atlas, best_view)``.
    """
    n = mesh.n_faces
    cols = max(1, math.ceil(math.sqrt(n)))
    rows = max(1, math.ceil(n / cols))
    W, H = cols * cell, rows * cell
    channels = truth.albedo.shape[1]
    rng = np.random.default_rng([seed, 7919])

    won = np.zeros((len(views), n), dtype=np.int64)
    for i, v in enumerate(views):
        won[i] = rasterize_depth(mesh, v).won_pixels(n)
    best = np.where(won.max(axis=0) > 0, won.argmax(axis=0), -1)

    uv = np.zeros((n, 3, 2))
    img = np.full((H, W, channels), background)
    for k in range(n):
        r, c = divmod(k, cols)
        x0, y0 = c * cell + 0.5, r * cell + 0.5
        x1, y1 = x0 + cell - 1.0, y0 + cell - 1.0
        corners_px = np.array([[x0, y0], [x1, y0], [x0, y1]])
        uv[k, :, 0] = corners_px[:, 0] / W
        uv[k, :, 1] = 1.0 - corners_px[:, 1] / H
    textured = TriangleMesh(mesh.vertices, mesh.faces, uv_faces=uv)

    from .texture import extract_patch  # local: texture imports nothing from synth

    blank = TextureAtlas(ImageBuffer(img.copy()))
    for k in range(n):
        p = extract_patch(blank, textured, k)
        gain = truth.gains[best[k]] if best[k] >= 0 else np.ones(channels)
        base = truth.albedo[k] * gain
        pattern = 1.0 + texture_sigma * rng.standard_normal((p.count, channels))
        img[p.ys, p.xs] = np.clip(base * pattern, 0.0, 1.0)
    return textured, TextureAtlas(ImageBuffer(img)), best


# --------------------------------------------------------------------------
# dataset on disk
# --------------------------------------------------------------------------


def write_dataset(out_dir, mesh, truth: GroundTruth, views, with_atlas: bool = False, seed: int = 0) -> Path:
    """Write mesh.ply, cameras.json, images/*.png, truth.csv and gains.csv."""
    from .io import export_face_colored_mesh, save_image, save_views, write_textured_obj

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    export_face_colored_mesh(mesh, truth.albedo, out / "mesh.ply")
    names = []
    for i, v in enumerate(views):
        name = f"images/view_{i:03d}.png"
        save_image(v.image, out / name)
        names.append(name)
    save_views(views, out / "cameras.json", names)
    ch = truth.albedo.shape[1]
    labels = ["r", "g", "b"] if ch == 3 else ["gray"]
    with open(out / "truth.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["face", *labels])
        for k, a in enumerate(truth.albedo):
            writer.writerow([k, *[repr(float(x)) for x in a]])
    with open(out / "gains.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["view", *labels])
        for i, g in enumerate(truth.gains):
            writer.writerow([i, *[repr(float(x)) for x in g]])
    if with_atlas:
        textured, atlas, _ = make_atlas(mesh, truth, views, seed=seed)
        write_textured_obj(textured, atlas, out / "textured.obj")
    return out


def read_truth_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[float(x) for x in r[1:]] for r in rows])


# --------------------------------------------------------------------------
# reference estimator
# --------------------------------------------------------------------------

ORACLE_MAX_FACES = 50
ORACLE_MAX_VIEWS = 8
ORACLE_MAX_PIXELS = 64 * 64
TIE_EPS = 1e-9


@dataclass
class RaycastResult:
    face_id: np.ndarray  # (H, W), -1 where no hit
    depth: np.ndarray
    footprint: np.ndarray
    ties: np.ndarray  # (H, W) bool: best two hits within TIE_EPS


def raycast_view(mesh: TriangleMesh, view: PinholeView, near: float = NEAR_PLANE) -> RaycastResult:
    """Per-pixel nearest front-facing face by ray-triangle intersection.

    Casts one ray per pixel center through the camera center and intersects
    it with every front-facing triangle (Moller-Trumbore). Shares no code
    with the rasterizer.
    """
    h, w = view.height, view.width
    ys, xs = np.mgrid[0:h, 0:w]
    pix = np.stack([xs.ravel(), ys.ravel(), np.ones(h * w)], axis=1).astype(np.float64)
    dirs = pix @ np.linalg.inv(view.intrinsics).T  # camera-space, z = 1
    cam = view.to_camera(mesh.vertices)
    n = mesh.n_faces
    depths = np.full((max(n, 1), h * w), np.inf)
    footprint = np.zeros(n, dtype=np.int64)
    eye = view.center
    for f in range(n):
        a, b, c = mesh.vertices[mesh.faces[f]]
        normal = np.cross(b - a, c - a)
        if np.linalg.norm(normal) < 2e-12 or normal @ ((a + b + c) / 3.0 - eye) >= 0:
            continue
        v0, v1, v2 = cam[mesh.faces[f]]
        e1, e2 = v1 - v0, v2 - v0
        p = np.cross(dirs, e2)
        det = p @ e1
        ok = np.abs(det) > 1e-300
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = -v0
        u = (p @ s) * inv
        q = np.cross(s, e1)
        v = (dirs @ q) * inv
        t = (q @ e2) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= near)
        depths[f, hit] = t[hit]
        footprint[f] = int(hit.sum())
    if n == 0:
        empty = np.full((h, w), -1, dtype=np.int64)
        return RaycastResult(empty, np.full((h, w), np.inf), footprint, np.zeros((h, w), bool))
    best = np.argmin(depths, axis=0)
    best_d = depths[best, np.arange(h * w)]
    face_id = np.where(np.isfinite(best_d), best, -1)
    ordered = np.sort(depths, axis=0)
    if n > 1:
        with np.errstate(invalid="ignore"):
            ties = np.isfinite(ordered[0]) & (ordered[1] - ordered[0] <= TIE_EPS)
    else:
        ties = np.zeros(h * w, bool)
    return RaycastResult(face_id.reshape(h, w), best_d.reshape(h, w), footprint, ties.reshape(h, w))


def _plain_trimmed_mean(values: list, alpha: float) -> float:
    xs = sorted(values)
    n = len(xs)
    k = int(math.floor(n * alpha + 1e-9))
    kept = xs[k : n - k]
    if not kept:
        return sum(xs) / n
    total = 0.0
    for x in kept:
        total += x
    return total / len(kept)


@dataclass
class OracleResult:
    colors: np.ndarray
    support: np.ndarray
    tie_faces: set


def oracle_estimate(mesh: TriangleMesh, views: Sequence[PinholeView], config: Optional[PipelineConfig] = None):
    """Face colors by straight nested loops over ray-cast visibility.

    Follows the estimation rules one face, view and pair at a time with no
    shared helpers from the production path. Faces owning a pixel whose two
    nearest hits are within 1e-9 in depth are listed in ``tie_faces``.

    Raises:
        ValueError: for instances above 50 faces, 8 views or 64x64 pixels.
    """
    config = config or PipelineConfig()
    if mesh.n_faces > ORACLE_MAX_FACES or len(views) > ORACLE_MAX_VIEWS:
        raise ValueError("instance too large for the reference estimator")
    if any(v.width * v.height > ORACLE_MAX_PIXELS for v in views):
        raise ValueError("instance too large for the reference estimator")
    alpha = config.alpha
    n_faces, n_views = mesh.n_faces, len(views)
    channels = views[0].image.channels if views else 1

    colors = np.full((n_faces, channels), np.nan)
    support_c = np.zeros((channels, n_faces), dtype=np.int64)
    tie_faces = set()

    # visibility: geometric split, then samples per owned pixel
    owned_px = [dict() for _ in range(n_views)]
    for i, view in enumerate(views):
        rc = raycast_view(mesh, view)
        for f in np.unique(rc.face_id[rc.ties]):
            if f >= 0:
                tie_faces.add(int(f))
        for f in range(n_faces):
            owned = list(zip(*np.nonzero(rc.face_id == f)))
            won = len(owned)
            fp = int(rc.footprint[f])
            if fp < config.min_pixels or won < config.min_pixels:
                continue
            if won / fp < config.visibility_fraction:
                continue
            owned_px[i][f] = owned

    for c in range(channels):
        # per-face trimmed means, skipping faces clipped in this channel
        means = [dict() for _ in range(n_views)]
        for i, view in enumerate(views):
            img = view.image.data
            for f, owned in owned_px[i].items():
                vals = [img[y, x, c] for (y, x) in owned]
                if sum(1 for v in vals if v >= 1.0) > config.max_clipped_fraction * len(vals):
                    continue
                means[i][f] = _plain_trimmed_mean(vals, alpha)

        # pairwise gains
        gain, agree = {}, {}
        for i in range(n_views):
            for j in range(n_views):
                if i == j:
                    continue
                ratios = []
                for f in range(n_faces):
                    if f in means[i] and f in means[j]:
                        a, b = means[i][f], means[j][f]
                        if a <= 1e-6 or b <= 1e-6:
                            continue
                        ratios.append(a / b)
                if not ratios or len(ratios) < config.min_overlap:
                    continue
                g = sum(ratios) / len(ratios)
                gain[(i, j)] = g
                agree[(i, j)] = min(g, 1.0 / g)

        # infill and row aggregation
        for f in range(n_faces):
            direct = {i: means[i][f] for i in range(n_views) if f in means[i]}
            row = dict(direct)
            for i in range(n_views):
                if i in direct:
                    continue
                num = den = 0.0
                used = False
                for j in direct:
                    if (i, j) not in gain or agree[(i, j)] < config.agreement_threshold:
                        continue
                    used = True
                    num += agree[(i, j)] * direct[j] * gain[(i, j)]
                    den += agree[(i, j)]
                if used:
                    row[i] = num / den
            if not row:
                continue
            support_c[c, f] = len(row)
            colors[f, c] = _plain_trimmed_mean(list(row.values()), alpha)

    support = support_c.min(axis=0) if channels else np.zeros(n_faces, dtype=np.int64)
    return OracleResult(colors, support, tie_faces)
