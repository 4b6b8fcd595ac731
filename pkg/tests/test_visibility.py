import numpy as np
import pytest

from meshtone.geometry import TriangleMesh
from meshtone.synth import SynthConfig, generate_scene, raycast_view, render_scene
from meshtone.visibility import (
    EMPTY,
    NotObservedError,
    classify_faces,
    dump_visibility,
    front_facing,
    observe_view,
    observe_views,
    rasterize_depth,
    sample_face_pixels,
)

from conftest import constant_image, facing_triangle, frontal_view, mesh_of


class TestRasterizeDepth:
    def test_single_triangle_depth(self, view):
        buf = rasterize_depth(mesh_of(facing_triangle(z=2.0)), view)
        mask = buf.face_id == 0
        assert mask.sum() > 50
        np.testing.assert_allclose(buf.depth[mask], 2.0)
        assert np.all(np.isinf(buf.depth[~mask]))

    def test_near_face_wins(self, view):
        mesh = mesh_of(facing_triangle(z=2.0, size=1.0), facing_triangle(z=1.0, size=0.5))
        buf = rasterize_depth(mesh, view)
        near_fp = buf.footprint[1]
        assert (buf.face_id == 1).sum() == near_fp > 0
        assert buf.won_pixels(2)[0] == buf.footprint[0] - near_fp

    def test_behind_camera_is_empty(self, view):
        buf = rasterize_depth(mesh_of(facing_triangle(z=-1.0)), view)
        assert np.all(buf.face_id == EMPTY)

    def test_crossing_near_plane_is_clipped(self, view):
        tri = np.array([[-0.5, -0.5, 1.0], [-0.5, 0.5, 1.0], [0.5, 0.0, -1.0]])
        buf = rasterize_depth(mesh_of(tri), view)
        assert np.all(np.isfinite(buf.depth[buf.face_id == 0]))
        assert np.all(buf.depth[buf.face_id == 0] > 0)

    def test_empty_mesh(self, view):
        buf = rasterize_depth(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3))), view)
        assert np.all(buf.face_id == EMPTY)

    def test_perspective_correct_depth(self):
        # slanted triangle: rasterized depth matches the ray-cast hit distance
        view = frontal_view(24, 24, 20.0)
        tri = np.array([[-0.61, -0.57, 1.0], [-0.63, 0.58, 1.1], [0.62, -0.55, 2.5]])
        mesh = mesh_of(tri)
        buf, rc = rasterize_depth(mesh, view), raycast_view(mesh, view)
        mask = buf.face_id == 0
        np.testing.assert_array_equal(mask, rc.face_id == 0)
        np.testing.assert_allclose(buf.depth[mask], rc.depth[mask], rtol=1e-12)


class TestClassify:
    def test_partition_on_cube(self):
        mesh, _, views = generate_scene(SynthConfig(subdivisions=1))
        for i, v in enumerate(views):
            part = classify_faces(mesh, v, rasterize_depth(mesh, v), i)
            assert part.observed | part.unobserved == frozenset(range(mesh.n_faces))
            assert not part.observed & part.unobserved
            back = np.nonzero(~front_facing(mesh, v))[0]
            assert not part.observed & set(back.tolist())

    def test_back_facing_is_unobserved(self, view):
        tri = facing_triangle()[[0, 2, 1]]
        mesh = mesh_of(tri)
        part = classify_faces(mesh, view, rasterize_depth(mesh, view))
        assert part.observed == frozenset()

    def test_fully_occluded_is_unobserved(self, view):
        mesh = mesh_of(facing_triangle(z=2.0, size=0.3), facing_triangle(z=1.0, size=1.0))
        part = classify_faces(mesh, view, rasterize_depth(mesh, view))
        assert part.observed == {1}

    def test_small_footprint_is_unobserved(self):
        view = frontal_view(8, 8, 8.0)
        # covers exactly 3 pixel centers
        tri = np.array([[-0.02, -0.02, 1.0], [-0.02, 0.3, 1.0], [0.3, -0.02, 1.0]])
        mesh = mesh_of(tri)
        buf = rasterize_depth(mesh, view)
        assert buf.footprint[0] == 3
        assert classify_faces(mesh, view, buf, min_pixels=5).observed == frozenset()
        assert classify_faces(mesh, view, buf, min_pixels=3).observed == {0}

    def test_partial_occlusion_threshold(self, view):
        mesh = mesh_of(facing_triangle(z=2.0, size=1.0), facing_triangle(center_xy=(-0.4, -0.4), z=1.0, size=0.3))
        buf = rasterize_depth(mesh, view)
        frac = buf.won_pixels(2)[0] / buf.footprint[0]
        assert 0 < frac < 1
        assert 0 in classify_faces(mesh, view, buf, visibility_fraction=frac).observed
        assert 0 not in classify_faces(mesh, view, buf, visibility_fraction=frac + 1e-6).observed

    def test_degenerate_face_never_observed(self, view):
        mesh = TriangleMesh([[0, 0, 1], [0.1, 0.1, 1], [0.2, 0.2, 1]], [[0, 1, 2]])
        assert classify_faces(mesh, view, rasterize_depth(mesh, view), min_pixels=1).observed == frozenset()


class TestSamples:
    def test_constant_image(self):
        view = frontal_view(image=constant_image(0.5))
        mesh = mesh_of(facing_triangle())
        s = sample_face_pixels(view, rasterize_depth(mesh, view), 0)
        assert s.count == rasterize_depth(mesh, view).footprint[0]
        np.testing.assert_array_equal(s.samples, 0.5)

    def test_gain_scaled_image(self):
        view = frontal_view(image=constant_image(0.5 * 1.4))
        mesh = mesh_of(facing_triangle())
        s = sample_face_pixels(view, rasterize_depth(mesh, view), 0)
        np.testing.assert_allclose(s.samples, 0.7)

    def test_not_observed(self, view):
        mesh = mesh_of(facing_triangle(), facing_triangle(z=-1))
        with pytest.raises(NotObservedError, match="not observed"):
            sample_face_pixels(view.with_image(constant_image(0.5)), rasterize_depth(mesh, view), 1)

    def test_samples_replay_the_buffer(self):
        mesh, _, views = render_scene(SynthConfig(subdivisions=1, noise_sigma=0.05, seed=3))
        v = views[2]
        buf = rasterize_depth(mesh, v)
        obs = observe_view(mesh, v, 2)
        for f, s in obs.samples.items():
            assert sorted(obs.samples) == sorted(obs.observed)
            np.testing.assert_array_equal(s.samples, v.image.data[buf.face_id == f])


def test_worker_count_does_not_change_order():
    mesh, _, views = render_scene(SynthConfig(subdivisions=1, noise_sigma=0.02))
    a = observe_views(mesh, views, workers=1)
    b = observe_views(mesh, views, workers=4)
    for x, y in zip(a, b):
        assert x.view_id == y.view_id and x.observed == y.observed
        for f in x.observed:
            np.testing.assert_array_equal(x.samples[f].samples, y.samples[f].samples)


def test_dump_visibility(tmp_path):
    mesh, _, views = render_scene(SynthConfig(view_count=3))
    obs, bufs = observe_views(mesh, views, return_buffers=True)
    dump_visibility(bufs, obs, tmp_path)
    assert sorted(p.name for p in tmp_path.glob("*.png")) == ["faceid_000.png", "faceid_001.png", "faceid_002.png"]
    lines = (tmp_path / "visibility.csv").read_text().splitlines()
    assert lines[0] == "view_id,face_id,pixel_count,visible_fraction"
    assert len(lines) > 1
