import numpy as np
import pytest

from meshtone.geometry import ImageBuffer, PinholeView, TriangleMesh


def frontal_view(width=32, height=32, focal=32.0, image=None):
    """Identity-pose camera at the origin looking down +z."""
    K = np.array([[focal, 0, (width - 1) / 2], [0, focal, (height - 1) / 2], [0, 0, 1]])
    return PinholeView(K, np.eye(3), np.zeros(3), width, height, image)


def facing_triangle(center_xy=(0.0, 0.0), size=0.5, z=1.0):
    """Triangle in the plane z=const whose normal points back at the origin camera."""
    cx, cy = center_xy
    return np.array([[cx - size, cy - size, z], [cx - size, cy + size, z], [cx + size, cy - size, z]])


def mesh_of(*triangles):
    tris = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    return TriangleMesh(tris.reshape(-1, 3), np.arange(3 * len(tris)).reshape(-1, 3))


def constant_image(value, width=32, height=32, channels=3):
    return ImageBuffer(np.full((height, width, channels), value, dtype=np.float64))


@pytest.fixture
def view():
    return frontal_view()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
