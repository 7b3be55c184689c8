#!/usr/bin/env python3
"""Shared fixtures: tiny meshes, synthetic probes and small configs"""

import sys
from pathlib import Path

import numpy as np
import pytest

#add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))
sys.path.insert(0, str(Path(__file__).parent))

from pbr_recon import console
from pbr_recon.envlight import make_probe
from pbr_recon.scene import TriangleMesh, build_bvh, look_at, Camera
from pbr_recon.schemas import FieldConfig, RenderConfig

from make_sample_scene import unit_cube


def quad_mesh(size: float = 1.0) -> TriangleMesh:
    """square in the z=0 plane facing +Z, spanning [-size, size]^2"""
    positions = np.array([[-size, -size, 0.0], [size, -size, 0.0], [size, size, 0.0], [-size, size, 0.0]])
    normals = np.tile([0.0, 0.0, 1.0], (4, 1))
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return TriangleMesh(positions, normals, uvs, np.array([[0, 1, 2], [0, 2, 3]]))


def uv_sphere(n_lat: int = 24, n_lon: int = 48, radius: float = 1.0) -> TriangleMesh:
    """latitude/longitude sphere; the seam column repeats exact positions"""
    positions, uvs = [], []
    for i in range(n_lat + 1):
        theta = np.pi * i / n_lat
        for j in range(n_lon + 1):
            phi = 2.0 * np.pi * (j % n_lon) / n_lon
            positions.append([np.sin(theta) * np.cos(phi), np.cos(theta), np.sin(theta) * np.sin(phi)])
            uvs.append([j / n_lon, 1.0 - i / n_lat])
    positions = np.array(positions)
    normals = positions / np.linalg.norm(positions, axis=1, keepdims=True)

    def vid(i, j):
        return i * (n_lon + 1) + j

    faces = []
    for i in range(n_lat):
        for j in range(n_lon):
            a, b, c, d = vid(i, j), vid(i, j + 1), vid(i + 1, j + 1), vid(i + 1, j)
            if i != 0:
                faces.append([a, b, c])
            if i != n_lat - 1:
                faces.append([a, c, d])
    return TriangleMesh(positions * radius, normals, np.array(uvs), np.array(faces))


def corner_mesh() -> TriangleMesh:
    """floor (y=0) and wall (x=0) meeting along the z axis"""
    positions = np.array([
        [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 1.0], [0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 1.0], [0.0, 1.0, 0.0],
    ])
    normals = np.array([[0.0, 1.0, 0.0]] * 4 + [[1.0, 0.0, 0.0]] * 4)
    uvs = np.array([[0.0, 0.0], [0.5, 0.0], [0.5, 1.0], [0.0, 1.0],
                    [0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [0.5, 1.0]])
    faces = np.array([[0, 2, 1], [0, 3, 2], [4, 6, 5], [4, 7, 6]])
    return TriangleMesh(positions, normals, uvs, faces)


def front_camera(distance: float = 2.0, width: int = 16, height: int = 16, fov: float = 0.8) -> Camera:
    """camera on +Z looking at the origin"""
    return Camera(look_at([0.0, 0.0, distance], [0.0, 0.0, 0.0]), fov, width, height)


@pytest.fixture(autouse=True)
def fresh_console():
    """clear warning counters and silence status output for every test"""
    console.reset()
    console.set_quiet(True)
    yield
    console.reset()


@pytest.fixture
def quad():
    return quad_mesh()


@pytest.fixture
def sphere():
    return uv_sphere()


@pytest.fixture
def cube():
    return unit_cube()


@pytest.fixture
def corner():
    return corner_mesh()


@pytest.fixture
def sphere_accel(sphere):
    return build_bvh(sphere)


@pytest.fixture
def quad_accel(quad):
    return build_bvh(quad)


@pytest.fixture
def constant_probe():
    return make_probe(np.ones((16, 32, 3)))


@pytest.fixture
def black_probe():
    """zero everywhere except a dim texel so sampling tables exist"""
    image = np.zeros((16, 32, 3))
    image[0, 0] = 1e-30
    return make_probe(image)


@pytest.fixture
def hot_texel_probe():
    image = np.zeros((16, 32, 3))
    image[5, 9] = 100.0
    return make_probe(image, interpolation='nearest')


@pytest.fixture
def gradient_probe():
    v = (np.arange(32) + 0.5) / 32
    u = (np.arange(64) + 0.5) / 64
    image = np.empty((32, 64, 3))
    image[..., 0] = 0.2 + 1.8 * (1.0 - v)[:, None]
    image[..., 1] = 0.5 + 0.5 * np.cos(2.0 * np.pi * u)[None, :] + 0.1
    image[..., 2] = 0.3
    return make_probe(image)


@pytest.fixture
def small_render():
    return RenderConfig(spp=8, spp_backward=2, max_bounces=3, width=16, height=16, tile_size=8, ray_batch=4096)


@pytest.fixture
def small_field_config():
    return FieldConfig(levels=2, table_size_log2=8, features=2, n_min=2, n_max=8,
                       hidden_layers=1, hidden_width=8, table_init=0.5, seed=3)
