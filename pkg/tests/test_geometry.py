import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meshtone.geometry import (
    CameraError,
    ImageBuffer,
    MeshError,
    PinholeView,
    TriangleMesh,
    face_world_data,
    look_at,
    project_point,
    project_points,
)

finite = st.floats(-10, 10, allow_nan=False)


def unit_view():
    return PinholeView(np.eye(3), np.eye(3), np.zeros(3), 4, 4)


class TestProjectPoint:
    def test_principal_ray(self):
        px, z = project_point(unit_view(), [0, 0, 1])
        np.testing.assert_allclose(px, [0, 0])
        assert z == 1

    def test_off_axis_point(self):
        px, z = project_point(unit_view(), [1, 0, 2])
        np.testing.assert_allclose(px, [0.5, 0])
        assert z == 2

    def test_behind_camera_reports_negative_depth(self):
        _, z = project_point(unit_view(), [0, 0, -1])
        assert z == -1

    def test_translation_and_intrinsics(self):
        K = [[100, 0, 50], [0, 80, 40], [0, 0, 1]]
        view = PinholeView(K, np.eye(3), [0, 0, 3], 100, 80)
        # camera-space (0.5, -0.25, 4)
        px, z = project_point(view, [0.5, -0.25, 1])
        np.testing.assert_allclose(px, [50 + 100 * 0.125, 40 - 80 * 0.0625])
        assert z == 4

    @given(st.tuples(finite, finite, st.floats(0.1, 10)), st.floats(0.1, 10))
    def test_scale_consistent(self, p, s):
        p = np.array(p)
        a, za = project_point(unit_view(), p)
        b, zb = project_point(unit_view(), s * p)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
        assert zb == pytest.approx(s * za)

    def test_batch_matches_single(self):
        eye = np.array([3.0, -2.0, 1.5])
        R, t = look_at(eye, [0, 0, 0])
        view = PinholeView([[40, 0, 20], [0, 40, 20], [0, 0, 1]], R, t, 40, 40)
        pts = np.random.default_rng(1).normal(size=(10, 3))
        px, z = project_points(view, pts)
        for k, p in enumerate(pts):
            q, zq = project_point(view, p)
            np.testing.assert_allclose(px[k], q)
            assert z[k] == pytest.approx(zq)


class TestFaceWorldData:
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], [[0, 1, 2], [0, 2, 1], [0, 1, 3]])

    def test_normal_and_area(self):
        g = face_world_data(self.mesh, 0)
        np.testing.assert_allclose(g.normal, [0, 0, 1])
        assert g.area == pytest.approx(0.5)
        assert not g.degenerate

    def test_reversed_winding_flips_normal(self):
        np.testing.assert_allclose(face_world_data(self.mesh, 1).normal, [0, 0, -1])

    def test_collinear_is_degenerate(self):
        g = face_world_data(self.mesh, 2)
        assert g.degenerate
        np.testing.assert_array_equal(g.normal, 0)

    @given(st.lists(st.tuples(finite, finite, finite), min_size=3, max_size=3))
    def test_flip_is_exact_negation(self, pts):
        mesh = TriangleMesh(pts, [[0, 1, 2], [0, 2, 1]])
        a, b = face_world_data(mesh, 0), face_world_data(mesh, 1)
        if not a.degenerate:
            np.testing.assert_allclose(a.normal, -b.normal, atol=1e-12)
            assert a.area == pytest.approx(b.area)


class TestTypes:
    def test_dangling_index(self):
        with pytest.raises(MeshError, match="dangling index"):
            TriangleMesh(np.zeros((8, 3)), [[0, 1, 99]])

    def test_image_range_checked(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.full((2, 2, 3), 1.5))

    def test_improper_rotation(self):
        with pytest.raises(CameraError, match="improper rotation"):
            PinholeView(np.eye(3), np.diag([1.0, 1.0, -1.0]), np.zeros(3), 4, 4)

    def test_non_orthonormal_rotation(self):
        with pytest.raises(CameraError):
            PinholeView(np.eye(3), np.diag([1.0, 1.0, 1.01]), np.zeros(3), 4, 4)

    def test_look_at_centers_target(self):
        R, t = look_at([4.0, 1.0, 2.0], [0.5, 0.5, 0.0])
        view = PinholeView([[10, 0, 5], [0, 10, 5], [0, 0, 1]], R, t, 11, 11)
        px, z = project_point(view, [0.5, 0.5, 0.0])
        np.testing.assert_allclose(px, [5, 5], atol=1e-12)
        assert z > 0
        np.testing.assert_allclose(view.center, [4.0, 1.0, 2.0])

    def test_gray_conversion(self):
        img = ImageBuffer(np.array([[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]]))
        np.testing.assert_allclose(img.to_gray().data[..., 0], [[0.299, 0.587]])
