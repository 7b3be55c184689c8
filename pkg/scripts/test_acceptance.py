#!/usr/bin/env python3
"""End-to-end acceptance runs on self-rendered scenes

Everything here is marked slow; run with `pytest -m slow` or scripts/test_core.sh --slow.
"""

import numpy as np
import pytest

from conftest import front_camera
from pbr_recon.envlight import make_probe, sample_probe
from pbr_recon.materials import ConstantMaterial, OracleMaterial
from pbr_recon.matfield import MaterialField, bake_textures
from pbr_recon.metrics import mean_absolute_error, psnr
from pbr_recon.recon import FrameSet, reconstruct
from pbr_recon.scene import Camera, TriangleMesh, build_bvh, generate_orbit, look_at
from pbr_recon.schemas import FieldConfig, OptimSettings, RenderConfig
from pbr_recon.tracer import render, render_intrinsics, tonemap

pytestmark = pytest.mark.slow

ORACLE_FIELD = FieldConfig(levels=8, table_size_log2=14, n_min=8, n_max=256, hidden_layers=2,
                           hidden_width=32, table_init=1e-4, seed=0)


def self_rendered_frames(accel, probe, material, cameras, config, guides=True):
    """references, masks and perfect guides rendered from a known material"""
    refs, masks, guide_list = [], [], []
    for cam in cameras:
        image = render(accel, probe, material, cam, config)
        refs.append(tonemap(image.radiance))
        masks.append(image.coverage >= 0.5)
        if guides:
            intr = render_intrinsics(accel, material, cam)
            guide_list.append({'basecolor': tonemap(intr.base_color), 'roughness': intr.roughness,
                               'metallic': intr.metallic})
    return FrameSet(cameras, refs, masks, guide_list if guides else None)


#bounce depth

def test_extra_bounces_do_nothing_on_convex_geometry(sphere_accel, constant_probe):
    cam = front_camera(distance=3.0, width=32, height=32)
    material = ConstantMaterial((0.7, 0.7, 0.7), 0.5, 0.0)

    def config(d, seed):
        return RenderConfig(spp=256, max_bounces=d, seed=seed, diffuse_only=True, width=32, height=32,
                            tile_size=16, ray_batch=1 << 16)

    one = render(sphere_accel, constant_probe, material, cam, config(1, 0), workers=4)
    other_seed = render(sphere_accel, constant_probe, material, cam, config(1, 1), workers=4)
    three = render(sphere_accel, constant_probe, material, cam, config(3, 0), workers=4)
    covered = one.coverage == 1.0
    noise_floor = np.abs(one.radiance - other_seed.radiance)[covered].mean()
    assert np.abs(three.radiance - one.radiance)[covered].mean() < 2.0 * noise_floor


def test_corner_is_brighter_with_interreflection(corner, constant_probe):
    accel = build_bvh(corner)
    cam = Camera(look_at([1.6, 1.2, 1.8], [0.3, 0.3, 0.5]), 0.9, 32, 32)
    grey = ConstantMaterial((0.5, 0.5, 0.5), 0.5, 0.0)
    one = render(accel, constant_probe, grey, cam, RenderConfig(spp=64, max_bounces=1, width=32, height=32,
                                                                tile_size=16, ray_batch=1 << 16), workers=4)
    three = render(accel, constant_probe, grey, cam, RenderConfig(spp=64, max_bounces=3, width=32, height=32,
                                                                  tile_size=16, ray_batch=1 << 16), workers=4)
    covered = one.coverage == 1.0
    assert three.radiance[covered].mean() >= 1.05 * one.radiance[covered].mean()


#baking

def test_baked_maps_render_like_the_field(cube):
    accel = build_bvh(cube)
    field = MaterialField(FieldConfig(levels=4, table_size_log2=12, n_min=4, n_max=32, hidden_layers=1,
                                      hidden_width=16, table_init=0.5, seed=4),
                          cube.bbox_min, cube.bbox_max)
    baked = bake_textures(field, cube, 1024).as_texture_set()
    probe = make_probe(np.ones((16, 32, 3)))
    config = RenderConfig(spp=4, max_bounces=1, width=128, height=128, tile_size=32, ray_batch=1 << 16)
    cam = generate_orbit(4, 0.4, 2.5, 0.8, 128, 128)[1]
    from_field = render(accel, probe, field, cam, config, sampling_material=field, workers=4)
    from_maps = render(accel, probe, baked, cam, config, sampling_material=field, workers=4)
    mask = from_field.coverage == 1.0
    assert psnr(from_field.display(), from_maps.display(), mask) >= 35.0


#reconstruction

def test_oracle_reconstruction_recovers_maps(cube):
    accel = build_bvh(cube)
    probe = make_probe(np.ones((16, 32, 3)))
    config = RenderConfig(spp=16, spp_backward=2, max_bounces=1, width=128, height=128, tile_size=32,
                          ray_batch=1 << 16)
    #upper and lower rings so every face is observed
    cameras = (generate_orbit(8, 0.45, 2.5, 0.8, 128, 128)
               + generate_orbit(8, -0.45, 2.5, 0.8, 128, 128))
    frames = self_rendered_frames(accel, probe, OracleMaterial(), cameras, config)

    settings = OptimSettings(iterations=300, batch_size=2, reg_weight=0.2,
                             render=config.model_copy(update={'spp': 4}))
    field, history = reconstruct(frames, accel, probe, settings, field_config=ORACLE_FIELD, workers=4)
    assert history[-1].image < history[0].image

    recovered = bake_textures(field, cube, 256)
    truth = bake_textures(OracleMaterial(), cube, 256)
    assert mean_absolute_error(recovered.base_color, truth.base_color, truth.mask) <= 0.05
    assert mean_absolute_error(recovered.roughness, truth.roughness, truth.mask) <= 0.1
    assert mean_absolute_error(recovered.metallic, truth.metallic, truth.mask) <= 0.1


def floor_and_blocker(with_blocker: bool) -> TriangleMesh:
    """floor at y=0 facing up, optionally with a small slab hovering above its center"""
    positions = [[-1.0, 0.0, -1.0], [1.0, 0.0, -1.0], [1.0, 0.0, 1.0], [-1.0, 0.0, 1.0]]
    uvs = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    faces = [[0, 2, 1], [0, 3, 2]]
    if with_blocker:
        positions += [[-0.3, 0.6, -0.3], [0.3, 0.6, -0.3], [0.3, 0.6, 0.3], [-0.3, 0.6, 0.3]]
        uvs += [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
        faces += [[4, 6, 5], [4, 7, 6]]
    normals = np.tile([0.0, 1.0, 0.0], (len(positions), 1))
    return TriangleMesh(np.array(positions), normals, np.array(uvs), np.array(faces))


def test_guides_suppress_baked_in_shadows():
    """references carry a shadow cast by geometry the optimizer never sees"""
    sky = np.full((16, 32, 3), 0.3)
    sky[0] = 50.0
    probe = make_probe(sky)
    config = RenderConfig(spp=16, spp_backward=2, max_bounces=1, width=64, height=64, tile_size=32,
                          ray_batch=1 << 16)
    cameras = generate_orbit(8, 0.9, 2.5, 0.8, 64, 64)
    truth = ConstantMaterial((0.5, 0.5, 0.5), 0.6, 0.0)

    shadowed = build_bvh(floor_and_blocker(True))
    floor = build_bvh(floor_and_blocker(False))
    frames = self_rendered_frames(shadowed, probe, truth, cameras, config)
    #guides come from the clean floor
    clean = self_rendered_frames(floor, probe, truth, cameras, config)
    frames = FrameSet(frames.cameras, frames.references, frames.masks, clean.guides)

    field_config = FieldConfig(levels=6, table_size_log2=12, n_min=4, n_max=64, hidden_layers=1,
                               hidden_width=16, table_init=1e-4, seed=0)
    xs, zs = np.meshgrid(np.linspace(-0.5, 0.5, 24), np.linspace(-0.5, 0.5, 24))
    region = np.stack([xs.ravel(), np.zeros(xs.size), zs.ravel()], axis=1)

    spread = {}
    for lam in (0.0, 0.2):
        settings = OptimSettings(iterations=200, batch_size=2, reg_weight=lam,
                                 render=config.model_copy(update={'spp': 4}))
        field, _ = reconstruct(frames, floor, probe, settings, field_config=field_config, workers=4)
        spread[lam] = float(field.query(region).base_color.mean(axis=1).std())
    assert spread[0.2] <= 0.7 * spread[0.0]


#convergence

def test_inverse_pdf_error_falls_as_inverse_sqrt(gradient_probe):
    rng = np.random.default_rng(13)
    counts = np.array([256, 1024, 4096, 16384])
    trials = 200
    rms = []
    for n in counts:
        _, _, pdf = sample_probe(gradient_probe, rng.random((trials * n, 2)))
        estimates = (1.0 / pdf).reshape(trials, n).mean(axis=1)
        rms.append(np.sqrt(np.mean((estimates - 4.0 * np.pi) ** 2)))
    slope = np.polyfit(np.log(counts), np.log(rms), 1)[0]
    assert -0.6 <= slope <= -0.4
