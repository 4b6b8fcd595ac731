"""Reading and writing meshes (OBJ, PLY), camera rigs (JSON) and images."""

from __future__ import annotations

import json
import logging
import shutil
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .geometry import CameraError, ImageBuffer, MeshError, PinholeView, TextureAtlas, TriangleMesh

logger = logging.getLogger(__name__)

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


# --------------------------------------------------------------------------
# images
# --------------------------------------------------------------------------


def load_image(path) -> ImageBuffer:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            data = np.asarray(im, dtype=np.float64) / 65535.0
        elif im.mode in ("L", "1"):
            data = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        else:
            data = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImageBuffer(np.clip(data, 0.0, 1.0))


def quantize(values: np.ndarray) -> np.ndarray:
    """Round-half-up to 8 bits after clamping to [0, 1]."""
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(image: ImageBuffer | np.ndarray, path) -> None:
    data = image.data if isinstance(image, ImageBuffer) else np.asarray(image, dtype=np.float64)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(quantize(data)).save(path, format="PNG")


# --------------------------------------------------------------------------
# meshes
# --------------------------------------------------------------------------


def load_mesh(path) -> TriangleMesh:
    """Load a triangle mesh from OBJ or PLY (ASCII or binary little-endian)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"cannot read mesh: {path}")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _load_obj(path)
    if suffix == ".ply":
        return _load_ply(path)
    raise MeshError(f"unsupported mesh format: {path.suffix}")


def _obj_index(token: str, count: int) -> int:
    i = int(token)
    return i - 1 if i > 0 else count + i


def _load_obj(path: Path) -> TriangleMesh:
    vertices, texcoords = [], []
    faces, uv_faces = [], []
    non_tri = []
    mtllib = None
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif tag == "vt":
                texcoords.append([float(x) for x in parts[1:3]])
            elif tag == "f":
                corners = parts[1:]
                if len(corners) != 3:
                    non_tri.append(len(faces) + len(non_tri))
                    continue
                vi, ti = [], []
                for c in corners:
                    fields = c.split("/")
                    vi.append(_obj_index(fields[0], len(vertices)))
                    has_t = len(fields) > 1 and fields[1] != ""
                    ti.append(_obj_index(fields[1], len(texcoords)) if has_t else None)
                faces.append(vi)
                uv_faces.append(ti)
            elif tag == "mtllib" and mtllib is None:
                mtllib = line.split(None, 1)[1].strip()
        except (ValueError, IndexError) as exc:
            raise MeshError(f"{path}:{lineno}: malformed '{tag}' record") from exc
    if non_tri:
        raise MeshError(f"non-triangulated faces at indices {non_tri[:20]}")

    uv = None
    if texcoords and any(t is not None for f in uv_faces for t in f):
        tc = np.asarray(texcoords, dtype=np.float64)
        uv = np.full((len(faces), 3, 2), np.nan)
        for k, ti in enumerate(uv_faces):
            if any(t is None for t in ti):
                continue
            if any(not 0 <= t < len(tc) for t in ti):
                raise MeshError(f"dangling index: face {k} references a missing texture coordinate")
            uv[k] = tc[ti]

    texture = None
    if mtllib is not None:
        texture = _texture_from_mtl(path.parent / mtllib)
    return TriangleMesh(
        np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
        uv_faces=uv,
        texture_path=texture,
    )


def _texture_from_mtl(mtl_path: Path) -> Optional[Path]:
    if not mtl_path.is_file():
        logger.warning("material library %s not found", mtl_path)
        return None
    for line in mtl_path.read_text().splitlines():
        parts = line.split()
        if parts and parts[0] == "map_Kd":
            return mtl_path.parent / parts[-1]
    return None


def _load_ply(path: Path) -> TriangleMesh:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise MeshError(f"{path}: not a PLY file")
        fmt = None
        elements = []
        while True:
            raw = fh.readline()
            if not raw:
                raise MeshError(f"{path}: truncated PLY header")
            parts = raw.decode("ascii", "replace").split()
            if not parts or parts[0] in ("comment", "obj_info"):
                continue
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                if parts[1] == "list":
                    elements[-1][2].append((parts[4], ("list", _PLY_TYPES[parts[2]], _PLY_TYPES[parts[3]])))
                else:
                    elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
            elif parts[0] == "end_header":
                break
        if fmt == "ascii":
            data = _read_ply_ascii(fh, elements)
        elif fmt == "binary_little_endian":
            data = _read_ply_binary(fh, elements)
        else:
            raise MeshError(f"{path}: unsupported PLY format {fmt!r}")

    vert = data.get("vertex", {})
    if not all(k in vert for k in "xyz"):
        raise MeshError(f"{path}: vertex element lacks x/y/z")
    vertices = np.stack([vert["x"], vert["y"], vert["z"]], axis=1).astype(np.float64)
    face = data.get("face", {})
    lists = face.get("vertex_indices", face.get("vertex_index", []))
    non_tri = [k for k, f in enumerate(lists) if len(f) != 3]
    if non_tri:
        raise MeshError(f"non-triangulated faces at indices {non_tri[:20]}")
    faces = np.asarray([list(f) for f in lists], dtype=np.int64).reshape(-1, 3)
    colors = None
    if all(k in face for k in ("red", "green", "blue")):
        colors = np.stack([face["red"], face["green"], face["blue"]], axis=1).astype(np.float64) / 255.0
    return TriangleMesh(vertices, faces, face_colors=colors)


def _read_ply_ascii(fh, elements):
    tokens = iter(fh.read().decode("ascii").split())
    out = {}
    for name, count, props in elements:
        cols = {p[0]: [] for p in props}
        for _ in range(count):
            for pname, ptype in props:
                if isinstance(ptype, tuple):
                    n = int(next(tokens))
                    cols[pname].append([float(next(tokens)) for _ in range(n)])
                else:
                    cols[pname].append(float(next(tokens)))
        out[name] = {
            k: (v if isinstance(dict(props)[k], tuple) else np.asarray(v, dtype=np.float64))
            for k, v in cols.items()
        }
        if "vertex_indices" in out[name] or "vertex_index" in out[name]:
            for k in ("vertex_indices", "vertex_index"):
                if k in out[name]:
                    out[name][k] = [[int(i) for i in f] for f in out[name][k]]
    return out


def _read_ply_binary(fh, elements):
    buf = fh.read()
    offset = 0
    out = {}
    for name, count, props in elements:
        if not any(isinstance(p[1], tuple) for p in props):
            dtype = np.dtype([(p[0], "<" + p[1]) for p in props])
            arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
            offset += dtype.itemsize * count
            out[name] = {p[0]: arr[p[0]].astype(np.float64) for p in props}
            continue
        cols = {p[0]: [] for p in props}
        for _ in range(count):
            for pname, ptype in props:
                if isinstance(ptype, tuple):
                    _, ctype, itype = ptype
                    csize = np.dtype(ctype).itemsize
                    n = int(np.frombuffer(buf, "<" + ctype, 1, offset)[0])
                    offset += csize
                    vals = np.frombuffer(buf, "<" + itype, n, offset)
                    offset += n * np.dtype(itype).itemsize
                    cols[pname].append(vals.tolist())
                else:
                    cols[pname].append(float(np.frombuffer(buf, "<" + ptype, 1, offset)[0]))
                    offset += np.dtype(ptype).itemsize
        out[name] = {
            k: (v if isinstance(dict(props)[k], tuple) else np.asarray(v, dtype=np.float64))
            for k, v in cols.items()
        }
    return out


def export_face_colored_mesh(mesh: TriangleMesh, colors, path, binary: bool = False) -> None:
    """Write a PLY with per-face 8-bit RGB.

    ``colors`` is a FaceColorTable or an (F, C) array; single-channel colors
    are replicated to RGB and uncolored (NaN) faces are written black.
    """
    values = getattr(colors, "colors", colors)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if len(values) != mesh.n_faces:
        raise ValueError(f"{len(values)} colors for {mesh.n_faces} faces")
    if values.shape[1] == 1:
        values = np.repeat(values, 3, axis=1)
    rgb = quantize(np.nan_to_num(values[:, :3], nan=0.0))
    n_uncolored = int(np.isnan(values).any(axis=1).sum())

    header = [
        "ply",
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
    ]
    if n_uncolored:
        header.append(f"comment uncolored faces written black: {n_uncolored}")
    header += [
        f"element vertex {mesh.n_vertices}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(mesh.vertices.astype("<f8").tobytes())
            rec = np.dtype([("n", "u1"), ("idx", "<i4", 3), ("rgb", "u1", 3)])
            arr = np.zeros(mesh.n_faces, dtype=rec)
            arr["n"] = 3
            arr["idx"] = mesh.faces
            arr["rgb"] = rgb
            fh.write(arr.tobytes())
        else:
            lines = [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
            lines += [
                f"3 {a} {b} {c} {r} {g} {bl}"
                for (a, b, c), (r, g, bl) in zip(mesh.faces.tolist(), rgb.tolist())
            ]
            if lines:
                fh.write(("\n".join(lines) + "\n").encode("ascii"))


def write_obj(mesh: TriangleMesh, path, mtl_name: Optional[str] = None, material: str = "atlas") -> None:
    """Write vertices, faces and (when present) per-corner UVs as OBJ."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if mtl_name:
        lines += [f"mtllib {mtl_name}", f"usemtl {material}"]
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    if mesh.uv_faces is not None:
        uv = mesh.uv_faces.reshape(-1, 2)
        lines += [f"vt {u!r} {v!r}" for u, v in np.nan_to_num(uv).tolist()]
        for k, (a, b, c) in enumerate(mesh.faces.tolist()):
            if np.isnan(mesh.uv_faces[k]).any():
                lines.append(f"f {a + 1} {b + 1} {c + 1}")
            else:
                t = 3 * k + 1
                lines.append(f"f {a + 1}/{t} {b + 1}/{t + 1} {c + 1}/{t + 2}")
    else:
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    path.write_text("\n".join(lines) + "\n")


def write_textured_obj(mesh: TriangleMesh, atlas: TextureAtlas, obj_path, image_name: str = "atlas.png") -> None:
    """Write an OBJ + MTL + PNG bundle with the atlas next to the OBJ."""
    obj_path = Path(obj_path)
    mtl_name = obj_path.with_suffix(".mtl").name
    save_image(atlas.image, obj_path.parent / image_name)
    (obj_path.parent / mtl_name).write_text(f"newmtl atlas\nKd 1 1 1\nmap_Kd {image_name}\n")
    write_obj(mesh, obj_path, mtl_name=mtl_name)


def load_textured_obj(path) -> tuple[TriangleMesh, TextureAtlas]:
    mesh = load_mesh(path)
    if not mesh.has_uvs:
        raise MeshError(f"{path}: mesh has no texture coordinates (vt records)")
    if mesh.texture_path is None:
        raise MeshError(f"{path}: no map_Kd texture found through mtllib")
    return mesh, TextureAtlas(load_image(mesh.texture_path))


def copy_obj_with_texture(src_obj, dst_obj, image_name: str) -> None:
    """Copy an OBJ and write an MTL beside it that points at ``image_name``."""
    src_obj, dst_obj = Path(src_obj), Path(dst_obj)
    dst_obj.parent.mkdir(parents=True, exist_ok=True)
    mtl_name = dst_obj.with_suffix(".mtl").name
    out = []
    replaced = False
    for line in src_obj.read_text().splitlines():
        if line.split()[:1] == ["mtllib"] and not replaced:
            out.append(f"mtllib {mtl_name}")
            replaced = True
        else:
            out.append(line)
    if not replaced:
        out.insert(0, f"mtllib {mtl_name}")
    dst_obj.write_text("\n".join(out) + "\n")
    materials = _material_names(src_obj) or ["atlas"]
    (dst_obj.parent / mtl_name).write_text(
        "".join(f"newmtl {m}\nKd 1 1 1\nmap_Kd {image_name}\n" for m in materials)
    )


def _material_names(obj_path: Path) -> list[str]:
    names = []
    for line in obj_path.read_text().splitlines():
        parts = line.split()
        if parts[:1] == ["usemtl"] and len(parts) > 1 and parts[1] not in names:
            names.append(parts[1])
    return names


# --------------------------------------------------------------------------
# cameras
# --------------------------------------------------------------------------


def load_views(path, load_images: bool = True) -> list[PinholeView]:
    """Load a camera rig JSON; image paths resolve relative to the file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read cameras: {path}") from exc
    try:
        entries = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CameraError(f"malformed camera JSON {path}: {exc}") from exc
    if not isinstance(entries, list):
        raise CameraError(f"malformed camera JSON {path}: expected an array")
    views = []
    for i, e in enumerate(entries):
        try:
            K = np.asarray(e["intrinsics"], dtype=np.float64)
            R = np.asarray(e["rotation"], dtype=np.float64)
            t = np.asarray(e["translation"], dtype=np.float64)
            w, h = int(e["width"]), int(e["height"])
            image_rel = e.get("image")
        except (KeyError, TypeError, ValueError) as exc:
            raise CameraError(f"malformed camera entry {i} in {path}: {exc}") from exc
        if K.size != 9 or R.size != 9 or t.size != 3:
            raise CameraError(f"camera entry {i}: wrong number of values")
        image = None
        if load_images and image_rel is not None:
            image = load_image(path.parent / image_rel)
        try:
            views.append(PinholeView(K, R, t, w, h, image))
        except CameraError as exc:
            raise CameraError(f"camera entry {i}: {exc}") from exc
    return views


def save_views(views: Sequence[PinholeView], path, image_names: Optional[Sequence[str]] = None) -> None:
    path = Path(path)
    entries = []
    for i, v in enumerate(views):
        entry = {
            "intrinsics": v.intrinsics.ravel().tolist(),
            "rotation": v.rotation.ravel().tolist(),
            "translation": v.translation.tolist(),
            "width": v.width,
            "height": v.height,
        }
        if image_names is not None:
            entry["image"] = image_names[i]
        entries.append(entry)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(entries, indent=1) + "\n")


def copy_file(src, dst) -> None:
    Path(dst).parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(src, dst)
