"""Conditioning guides: camera-space normals and packed uniform-material shading

The shading guide renders the object three times with a constant material and
stores the luminance of each tonemapped pass in one channel:
R = diffuse (r=1, m=0), G = semi-specular (r=0.5, m=0.5), B = specular (r=0, m=1).
"""
from typing import Optional, Sequence, Tuple

import numpy as np

from pbr_recon.envlight import EnvironmentProbe, luminance
from pbr_recon.materials import ConstantMaterial
from pbr_recon.rng import GUIDE_STREAM
from pbr_recon.scene import AccelerationStructure, Camera, intersect_rays, shade_points
from pbr_recon.schemas import RenderConfig
from pbr_recon.tracer import render, tonemap

GUIDE_ALBEDO = 0.7
SHADING_PASSES: Tuple[Tuple[float, float], ...] = ((1.0, 0.0), (0.5, 0.5), (0.0, 1.0))
NORMAL_BACKGROUND = np.array([0.5, 0.5, 1.0])


def render_normal_guide(accel: AccelerationStructure, camera: Camera) -> np.ndarray:
    """(H, W, 3) camera-space shading normals mapped by (n + 1) / 2, one ray per pixel center"""
    h, w = camera.height, camera.width
    px, py = camera.pixel_centers()
    directions = camera.pixel_directions(px, py)
    origins = np.broadcast_to(camera.origin, directions.shape)
    hits = intersect_rays(accel, origins, directions)

    image = np.tile(NORMAL_BACKGROUND, (h * w, 1))
    idx = np.nonzero(hits.valid)[0]
    if idx.size:
        sp = shade_points(accel.mesh, hits.take(idx), origins[idx], directions[idx])
        n_cam = sp.normal @ camera.rotation
        image[idx] = np.clip(0.5 * (n_cam + 1.0), 0.0, 1.0)
    return image.reshape(h, w, 3)


def shading_pass(accel: AccelerationStructure, probe: EnvironmentProbe, camera: Camera,
                 config: RenderConfig, roughness: float, metallic: float,
                 workers: Optional[int] = None) -> np.ndarray:
    """tonemapped render of the constant guide material"""
    material = ConstantMaterial((GUIDE_ALBEDO,) * 3, roughness, metallic)
    image = render(accel, probe, material, camera, config, stream=GUIDE_STREAM, workers=workers)
    return tonemap(image.radiance)


def render_shading_guide(accel: AccelerationStructure, probe: EnvironmentProbe, camera: Camera,
                         config: RenderConfig, passes: Sequence[Tuple[float, float]] = SHADING_PASSES,
                         workers: Optional[int] = None) -> np.ndarray:
    """(H, W, 3) luminance of each uniform-material pass, one pass per channel"""
    channels = [luminance(shading_pass(accel, probe, camera, config, r, m, workers)) for r, m in passes]
    return np.clip(np.stack(channels, axis=-1), 0.0, 1.0)
