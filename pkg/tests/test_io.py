import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from meshtone.geometry import CameraError, ImageBuffer, MeshError, PinholeView, TextureAtlas, TriangleMesh
from meshtone.io import (
    export_face_colored_mesh,
    load_image,
    load_mesh,
    load_textured_obj,
    load_views,
    quantize,
    save_image,
    save_views,
    write_obj,
    write_textured_obj,
)
from meshtone.synth import make_cube

CUBE_OBJ = """# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def ply_header(n_vertices, n_faces, fmt="ascii"):
    return (
        f"ply\nformat {fmt} 1.0\nelement vertex {n_vertices}\nproperty float x\nproperty float y\n"
        f"property float z\nelement face {n_faces}\nproperty list uchar int vertex_indices\nend_header\n"
    )


class TestMeshLoading:
    def test_obj_cube(self, tmp_path):
        (tmp_path / "c.obj").write_text(CUBE_OBJ)
        mesh = load_mesh(tmp_path / "c.obj")
        assert mesh.n_vertices == 8 and mesh.n_faces == 12
        assert mesh.uv_faces is None

    def test_obj_negative_indices_and_uvs(self, tmp_path):
        (tmp_path / "t.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf -3/-3 -2/-2 -1/-1\n")
        mesh = load_mesh(tmp_path / "t.obj")
        np.testing.assert_array_equal(mesh.faces, [[0, 1, 2]])
        np.testing.assert_array_equal(mesh.uv_faces[0], [[0, 0], [1, 0], [0, 1]])

    def test_obj_quads_rejected(self, tmp_path):
        (tmp_path / "q.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 2 3 4\n")
        with pytest.raises(MeshError, match=r"non-triangulated faces at indices \[1\]"):
            load_mesh(tmp_path / "q.obj")

    def test_ply_dangling_index(self, tmp_path):
        body = "".join("0 0 0\n" for _ in range(8)) + "3 0 1 99\n"
        (tmp_path / "d.ply").write_text(ply_header(8, 1) + body)
        with pytest.raises(MeshError, match="dangling index"):
            load_mesh(tmp_path / "d.ply")

    def test_ply_binary(self, tmp_path):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype="<f4")
        face = np.array([3], "u1").tobytes() + np.array([0, 1, 2], "<i4").tobytes()
        (tmp_path / "b.ply").write_bytes(ply_header(3, 1, "binary_little_endian").encode() + verts.tobytes() + face)
        mesh = load_mesh(tmp_path / "b.ply")
        np.testing.assert_array_equal(mesh.vertices, verts)
        np.testing.assert_array_equal(mesh.faces, [[0, 1, 2]])

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_mesh(tmp_path / "nope.ply")


class TestExport:
    def test_half_gray_cube(self, tmp_path):
        mesh = make_cube(0)
        export_face_colored_mesh(mesh, np.full((12, 3), 0.5), tmp_path / "c.ply")
        back = load_mesh(tmp_path / "c.ply")
        np.testing.assert_array_equal(np.rint(back.face_colors * 255), 128)

    def test_quantize_rule(self):
        np.testing.assert_array_equal(quantize(np.array([0.0, 0.5, 1.0, 1.7, -0.2, 0.499 / 255])), [0, 128, 255, 255, 0, 0])

    def test_count_mismatch(self, tmp_path):
        with pytest.raises(ValueError):
            export_face_colored_mesh(make_cube(0), np.zeros((11, 3)), tmp_path / "x.ply")

    def test_empty_mesh(self, tmp_path):
        mesh = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3)))
        export_face_colored_mesh(mesh, np.zeros((0, 3)), tmp_path / "e.ply")
        assert load_mesh(tmp_path / "e.ply").n_faces == 0

    def test_uncolored_faces_written_black(self, tmp_path):
        colors = np.full((12, 3), 0.2)
        colors[3] = np.nan
        export_face_colored_mesh(make_cube(0), colors, tmp_path / "n.ply")
        assert "uncolored faces written black: 1" in (tmp_path / "n.ply").read_text()
        assert np.all(load_mesh(tmp_path / "n.ply").face_colors[3] == 0)

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(3, 12).flatmap(
            lambda n: st.tuples(
                st.lists(st.tuples(*[st.floats(-100, 100, allow_nan=False)] * 3), min_size=n, max_size=n),
                st.lists(st.tuples(*[st.integers(0, n - 1)] * 3), min_size=1, max_size=10),
            )
        ),
        st.booleans(),
    )
    def test_round_trip(self, tmp_path_factory, data, binary):
        verts, faces = data
        mesh = TriangleMesh(verts, faces)
        colors = np.random.default_rng(len(faces)).random((len(faces), 3))
        path = tmp_path_factory.mktemp("rt") / "m.ply"
        export_face_colored_mesh(mesh, colors, path, binary=binary)
        back = load_mesh(path)
        np.testing.assert_allclose(back.vertices, mesh.vertices, atol=1e-6)
        np.testing.assert_array_equal(back.faces, mesh.faces)
        np.testing.assert_array_equal(np.rint(back.face_colors * 255), quantize(colors))

    def test_obj_round_trip(self, tmp_path):
        mesh = make_cube(1)
        write_obj(mesh, tmp_path / "c.obj")
        back = load_mesh(tmp_path / "c.obj")
        np.testing.assert_array_equal(back.vertices, mesh.vertices)
        np.testing.assert_array_equal(back.faces, mesh.faces)


class TestImagesAndViews:
    def test_png_normalized(self, tmp_path):
        Image.fromarray(np.array([[[0, 128, 255]]], dtype=np.uint8)).save(tmp_path / "p.png")
        img = load_image(tmp_path / "p.png")
        np.testing.assert_allclose(img.data[0, 0], [0, 128 / 255, 1])

    def test_image_round_trip(self, tmp_path):
        data = np.random.default_rng(0).integers(0, 256, (5, 7, 3)) / 255.0
        save_image(ImageBuffer(data), tmp_path / "i.png")
        np.testing.assert_array_equal(load_image(tmp_path / "i.png").data, data)

    def _rig(self, tmp_path, rotations, image="a.png"):
        save_image(ImageBuffer(np.full((4, 4, 3), 0.5)), tmp_path / "a.png")
        entries = [
            {"intrinsics": [4, 0, 1.5, 0, 4, 1.5, 0, 0, 1], "rotation": r, "translation": [0, 0, 0],
             "width": 4, "height": 4, "image": image}
            for r in rotations
        ]
        (tmp_path / "cams.json").write_text(json.dumps(entries))
        return tmp_path / "cams.json"

    def test_two_identity_views(self, tmp_path):
        views = load_views(self._rig(tmp_path, [np.eye(3).ravel().tolist()] * 2))
        assert len(views) == 2
        np.testing.assert_allclose(views[1].image.data, 0.5, atol=1 / 255)

    def test_improper_rotation(self, tmp_path):
        with pytest.raises(CameraError, match="improper rotation"):
            load_views(self._rig(tmp_path, [[1, 0, 0, 0, 1, 0, 0, 0, -1]]))

    def test_missing_image_names_path(self, tmp_path):
        with pytest.raises(OSError, match="missing.png"):
            load_views(self._rig(tmp_path, [np.eye(3).ravel().tolist()], image="missing.png"))

    def test_malformed_json(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(CameraError, match="malformed"):
            load_views(tmp_path / "bad.json")

    def test_missing_rig(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="cannot read cameras"):
            load_views(tmp_path / "none.json")

    def test_save_load_views(self, tmp_path):
        v = PinholeView([[10, 0, 4], [0, 12, 3], [0, 0, 1]], np.eye(3), [0.1, 0.2, 3.0], 9, 7)
        save_views([v], tmp_path / "v.json")
        (w,) = load_views(tmp_path / "v.json")
        np.testing.assert_array_equal(w.intrinsics, v.intrinsics)
        np.testing.assert_array_equal(w.translation, v.translation)


def test_textured_bundle(tmp_path):
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]], uv_faces=[[[0.1, 0.1], [0.9, 0.1], [0.1, 0.9]]])
    atlas = TextureAtlas(ImageBuffer(np.full((8, 8, 3), 0.4)))
    write_textured_obj(mesh, atlas, tmp_path / "t.obj")
    back, back_atlas = load_textured_obj(tmp_path / "t.obj")
    np.testing.assert_allclose(back.uv_faces, mesh.uv_faces)
    assert back.texture_path.name == "atlas.png"
    assert back_atlas.image.data.shape == (8, 8, 3)


def test_textured_obj_needs_uvs(tmp_path):
    (tmp_path / "c.obj").write_text(CUBE_OBJ)
    with pytest.raises(MeshError, match="texture coordinates"):
        load_textured_obj(tmp_path / "c.obj")
