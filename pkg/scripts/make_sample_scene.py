#!/usr/bin/env python3
"""Write the bundled desk-scale oracle scene

Creates under sample_scene/:
    cube.obj              unit cube, one UV cell per face in a cross layout
    probe.hdr             training probe (warm sky, bright sun)
    relight/*.hdr         held-out probes for relighting
    truth/                oracle material baked to texture maps
    relight_truth/        oracle renders under the relight probes (--relight-truth only)

Then render the reference frames with:
    python run_pipeline.py render --config sample_scene/config.yaml --intrinsics --output sample_scene/frameset
"""

import argparse
import sys
from pathlib import Path

import numpy as np

#add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from pbr_recon.envlight import save_probe
from pbr_recon.materials import OracleMaterial
from pbr_recon.matfield import bake_textures, save_textures
from pbr_recon.scene import TriangleMesh, save_obj

#(normal, u axis, v axis, cross-layout cell (col, row)); u x v = normal
CUBE_FACES = (
    ((1, 0, 0), (0, 0, -1), (0, 1, 0), (2, 1)),
    ((-1, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1)),
    ((0, 1, 0), (1, 0, 0), (0, 0, -1), (1, 2)),
    ((0, -1, 0), (1, 0, 0), (0, 0, 1), (1, 0)),
    ((0, 0, 1), (1, 0, 0), (0, 1, 0), (1, 1)),
    ((0, 0, -1), (-1, 0, 0), (0, 1, 0), (3, 1)),
)


def unit_cube(size: float = 1.0) -> TriangleMesh:
    """axis-aligned cube centered at the origin with 24 vertices and 12 triangles"""
    positions, normals, uvs, faces = [], [], [], []
    half = 0.5 * size
    for normal, u_axis, v_axis, (col, row) in CUBE_FACES:
        n = np.array(normal, dtype=np.float64)
        u = np.array(u_axis, dtype=np.float64)
        v = np.array(v_axis, dtype=np.float64)
        base = len(positions)
        for a, b in ((0, 0), (1, 0), (1, 1), (0, 1)):
            positions.append(half * n + half * (2 * a - 1) * u + half * (2 * b - 1) * v)
            normals.append(n)
            uvs.append(((col + a) / 4.0, (row + b) / 3.0))
        faces.append((base, base + 1, base + 2))
        faces.append((base, base + 2, base + 3))
    return TriangleMesh(np.array(positions), np.array(normals), np.array(uvs), np.array(faces))


def sky_probe(height: int = 64, width: int = 128, sun=(0.3, 0.25), sun_radiance: float = 40.0,
              tint=(1.0, 0.9, 0.8)) -> np.ndarray:
    """smooth sky gradient plus a small bright sun at (u, v)"""
    v = (np.arange(height) + 0.5) / height
    u = (np.arange(width) + 0.5) / width
    sky = 0.2 + 0.8 * np.clip(1.0 - v, 0.0, 1.0)
    image = sky[:, None, None] * np.asarray(tint)[None, None, :] * np.ones((height, width, 1))
    du = np.minimum(np.abs(u[None, :] - sun[0]), 1.0 - np.abs(u[None, :] - sun[0]))
    dv = v[:, None] - sun[1]
    disk = (du * du + dv * dv) < (1.5 / height) ** 2
    image[disk] = sun_radiance
    return image

def render_relight_truth(out: Path):
    """oracle renders of the configured orbit under every held-out probe"""
    from pbr_recon.envlight import load_probe
    from pbr_recon.pipeline import orbit_cameras, scene_mesh
    from pbr_recon.scene import build_bvh
    from pbr_recon.tools.config_loader import load_config
    from pbr_recon.tools.image_io import write_png
    from pbr_recon.tracer import render

    config = load_config(out / 'config.yaml')
    mesh = scene_mesh(config)
    accel = build_bvh(mesh)
    cameras = orbit_cameras(config, mesh)
    for probe_path in config.relight.probes:
        probe = load_probe(probe_path, config.scene.probe_rotation, config.scene.probe_interpolation)
        folder = Path(config.relight.truth_dir) / Path(probe_path).stem
        for i, cam in enumerate(cameras):
            image = render(accel, probe, OracleMaterial(), cam, config.render)
            write_png(folder / f"{i:05d}.png", image.display())
        print(f"  ✓ {folder.relative_to(out)}/ ({len(cameras)} frames)")


def main():
    parser = argparse.ArgumentParser(description='write the bundled oracle scene')
    parser.add_argument('--relight-truth', action='store_true',
                        help='also render oracle frames under the held-out probes (slow)')
    args = parser.parse_args()

    out = project_root / 'sample_scene'
    out.mkdir(parents=True, exist_ok=True)

    mesh = unit_cube()
    save_obj(out / 'cube.obj', mesh)
    print(f"  ✓ cube.obj ({mesh.n_faces} triangles)")

    save_probe(sky_probe(), out / 'probe.hdr')
    print("  ✓ probe.hdr")
    relight = out / 'relight'
    save_probe(sky_probe(sun=(0.7, 0.3), tint=(0.8, 0.9, 1.0)), relight / 'evening.hdr')
    save_probe(sky_probe(sun=(0.5, 0.1), sun_radiance=20.0, tint=(1.0, 1.0, 1.0)), relight / 'noon.hdr')
    print("  ✓ relight/evening.hdr, relight/noon.hdr")

    maps = bake_textures(OracleMaterial(), mesh, 256)
    save_textures(maps, out / 'truth')
    print("  ✓ truth/ (oracle material, 256x256)")
    if args.relight_truth:
        render_relight_truth(out)
    print("\nNext: python run_pipeline.py render --config sample_scene/config.yaml --intrinsics "
          "--output sample_scene/frameset")


if __name__ == '__main__':
    main()
