"""Subcommand drivers: render, guides, reconstruct, bake, relight, metrics, warp

Each driver takes a validated PipelineConfig, prints phase headers the way the
rest of the pipeline does, writes its files under the output directory and
returns a small result dict.
"""
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from tqdm import tqdm

from pbr_recon import console
from pbr_recon.envlight import EnvironmentProbe, load_probe
from pbr_recon.errors import ConfigError, InputError, MeshError
from pbr_recon.guides import render_normal_guide, render_shading_guide
from pbr_recon.materials import ConstantMaterial, OracleMaterial, load_textures
from pbr_recon.matfield import MaterialField, bake_textures, load_checkpoint, save_checkpoint, save_textures
from pbr_recon.metrics import intrinsics_eval, psnr, relight_eval, write_table
from pbr_recon.recon import FrameSet, reconstruct
from pbr_recon.rng import splitmix64
from pbr_recon.scene import (
    Camera, TriangleMesh, augmented_order, build_bvh, generate_orbit, load_cameras,
    load_mesh,
)
from pbr_recon.schemas import LOSS_CSV_HEADER, MetricRow, PipelineConfig
from pbr_recon.tools.frameset_io import CAMERAS_FILE, frame_name, load_frameset, save_frameset
from pbr_recon.tools.image_io import linear_to_srgb, read_mask, read_png, write_mask, write_png
from pbr_recon.tracer import render, render_intrinsics
from pbr_recon.warp import render_depth, save_depth, warp_image

AUGMENT_FILE = 'augmented_order.txt'


#shared setup

def scene_mesh(config: PipelineConfig) -> TriangleMesh:
    mesh = load_mesh(config.scene.mesh, normalize_to_unit=config.scene.normalize)
    check = mesh.validate()
    if not check['valid']:
        raise MeshError(f"{config.scene.mesh}: {'; '.join(check['errors'])}")
    console.ok(f"Mesh: {mesh.n_faces} triangles, diagonal {mesh.diagonal:.3f}")
    return mesh


def load_scene(config: PipelineConfig):
    """mesh, BVH and probe from the scene section"""
    mesh = scene_mesh(config)
    accel = build_bvh(mesh)
    probe = load_probe(config.scene.probe, config.scene.probe_rotation, config.scene.probe_interpolation)
    console.ok(f"Probe: {probe.width}x{probe.height}, {config.scene.probe_interpolation} lookup")
    return mesh, accel, probe


def orbit_cameras(config: PipelineConfig, mesh: TriangleMesh) -> List[Camera]:
    o = config.orbit
    return generate_orbit(o.n_frames, o.elevation, o.radius, o.fov, config.render.width,
                          config.render.height, mesh.center)


def frameset_cameras(config: PipelineConfig, mesh: TriangleMesh) -> List[Camera]:
    """cameras.txt of the configured frame set when present, the orbit otherwise"""
    if config.paths.frameset is not None and (Path(config.paths.frameset) / CAMERAS_FILE).exists():
        return load_cameras(Path(config.paths.frameset) / CAMERAS_FILE)
    return orbit_cameras(config, mesh)


def make_material(config: PipelineConfig):
    m = config.material
    if m.kind == 'constant':
        return ConstantMaterial(tuple(m.base_color), m.roughness, m.metallic)
    if m.kind == 'oracle':
        return OracleMaterial()
    if m.kind == 'checkpoint':
        return load_checkpoint(m.path)
    return load_textures(m.path)


def _checkpoint_path(config: PipelineConfig) -> Path:
    if config.paths.checkpoint is not None:
        return Path(config.paths.checkpoint)
    if config.material.kind == 'checkpoint':
        return Path(config.material.path)
    raise ConfigError("no checkpoint configured (set paths.checkpoint or material.kind=checkpoint)")


#drivers

def run_render(config: PipelineConfig, out_dir: Path, workers: int, intrinsics: bool = False,
               augment: bool = False, seed: Optional[int] = None) -> Dict:
    """orbit frames, masks and cameras in the FrameSet layout"""
    console.banner("RENDER")
    console.phase(1, 3, "Loading scene...")
    mesh, accel, probe = load_scene(config)
    material = make_material(config)
    cameras = orbit_cameras(config, mesh)

    console.phase(2, 3, f"Rendering {len(cameras)} frames at {config.render.spp} spp...")
    references, masks, guides = [], [], [] if intrinsics else None
    for cam in tqdm(cameras, desc='render', unit='frame', disable=console.is_quiet()):
        image = render(accel, probe, material, cam, config.render, seed=seed, workers=workers)
        references.append(image.display())
        masks.append(image.coverage >= 0.5)
        if intrinsics:
            intr = render_intrinsics(accel, material, cam)
            guides.append({'basecolor': linear_to_srgb(intr.base_color), 'roughness': intr.roughness,
                           'metallic': intr.metallic})

    console.phase(3, 3, "Saving frame set...")
    save_frameset(FrameSet(cameras, references, masks, guides), out_dir)
    console.ok(f"Saved {len(cameras)} frames to {out_dir}")
    result = {'frames': len(cameras), 'intrinsics': intrinsics, 'output': str(out_dir)}

    if augment:
        key = splitmix64(np.uint64(config.render.seed if seed is None else seed))[0]
        reverse = bool(key & np.uint64(1))
        offset = int((key >> np.uint64(1)) % np.uint64(len(cameras)))
        order = augmented_order(len(cameras), reverse, offset)
        with open(Path(out_dir) / AUGMENT_FILE, 'w') as f:
            f.write(f"# reverse={int(reverse)} offset={offset}\n")
            f.write('\n'.join(str(i) for i in order) + '\n')
        console.ok(f"Augmented order: reverse={reverse}, offset={offset}")
        result.update(reverse=reverse, offset=offset)
    return result


def run_guides(config: PipelineConfig, out_dir: Path, workers: int) -> Dict:
    """normal and packed shading guides for every camera"""
    console.banner("GUIDES")
    console.phase(1, 2, "Loading scene...")
    mesh, accel, probe = load_scene(config)
    cameras = frameset_cameras(config, mesh)

    console.phase(2, 2, f"Rendering guides for {len(cameras)} frames...")
    out_dir = Path(out_dir)
    for i, cam in enumerate(tqdm(cameras, desc='guides', unit='frame', disable=console.is_quiet())):
        write_png(out_dir / f"{i:05d}_normal.png", render_normal_guide(accel, cam))
        write_png(out_dir / f"{i:05d}_shading.png",
                  render_shading_guide(accel, probe, cam, config.render, workers=workers))
    console.ok(f"Saved {2 * len(cameras)} guide images to {out_dir}")
    return {'frames': len(cameras), 'output': str(out_dir)}


def _write_loss_history(history, path: Path):
    write_table(history, path, header=LOSS_CSV_HEADER)


def run_reconstruct(config: PipelineConfig, out_dir: Path, workers: int, seed: Optional[int] = None) -> Dict:
    """fit the material field, then write loss history, checkpoint and baked maps"""
    console.banner("RECONSTRUCT")
    if config.paths.frameset is None:
        raise ConfigError("reconstruct needs paths.frameset")
    console.phase(1, 4, "Loading scene and frame set...")
    mesh, accel, probe = load_scene(config)
    frames = load_frameset(config.paths.frameset)
    width, height = frames.resolution
    console.ok(f"Frame set: {len(frames)} frames at {width}x{height}, guides: {frames.has_guides}")

    settings = config.optim
    if seed is not None:
        settings = settings.model_copy(update={'seed': seed})
    initial: Optional[MaterialField] = None
    if config.paths.checkpoint is not None:
        initial = load_checkpoint(config.paths.checkpoint, seed=config.field.seed)
        console.ok(f"Resuming from {config.paths.checkpoint}")

    console.phase(2, 4, f"Optimizing for {settings.iterations} iterations (batch {settings.batch_size})...")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    field, history = reconstruct(frames, accel, probe, settings, config.field, material_field=initial,
                                 output_dir=out_dir, workers=workers)
    _write_loss_history(history, out_dir / 'loss_history.csv')
    if history:
        console.ok(f"Final loss {history[-1].total:.5f} (image {history[-1].image:.5f})")

    console.phase(3, 4, "Saving checkpoint...")
    save_checkpoint(field, out_dir / 'field.bin')
    console.ok(f"Saved {field.n_parameters} parameters")

    console.phase(4, 4, f"Baking {config.bake.resolution}x{config.bake.resolution} textures...")
    maps = bake_textures(field, mesh, config.bake.resolution, config.bake.dilation_iterations)
    save_textures(maps, out_dir, config.bake.sixteen_bit)
    console.ok(f"Saved textures to {out_dir}")
    return {'iterations': len(history), 'final_loss': history[-1].total if history else None,
            'output': str(out_dir)}


def run_bake(config: PipelineConfig, out_dir: Path, workers: int) -> Dict:
    console.banner("BAKE")
    path = _checkpoint_path(config)
    mesh = scene_mesh(config)
    field = load_checkpoint(path, seed=config.field.seed)
    console.ok(f"Loaded {path}")
    maps = bake_textures(field, mesh, config.bake.resolution, config.bake.dilation_iterations)
    written = save_textures(maps, out_dir, config.bake.sixteen_bit)
    console.ok(f"Saved {len(written)} maps to {out_dir}")
    return {'maps': sorted(written), 'overlaps': maps.overlaps, 'output': str(out_dir)}


def _load_truth(truth_dir: Path, probe_path: Path, n_frames: int):
    """truth renders under <truth_dir>/<probe stem>/%05d.png, optional masks alongside in masks/"""
    folder = Path(truth_dir) / Path(probe_path).stem
    if not folder.is_dir():
        raise InputError("relight truth directory not found", str(folder))
    images, masks = [], []
    for i in range(n_frames):
        images.append(read_png(folder / frame_name(i), channels=3))
        mask_path = folder / 'masks' / frame_name(i)
        masks.append(read_mask(mask_path) if mask_path.exists() else None)
    return images, masks


def run_relight(config: PipelineConfig, out_dir: Path, workers: int) -> Dict:
    """render the configured material under new probes and score against truth renders"""
    console.banner("RELIGHT")
    if not config.relight.probes:
        raise ConfigError("relight.probes is empty")
    if config.relight.truth_dir is None:
        raise ConfigError("relight needs relight.truth_dir")
    mesh = scene_mesh(config)
    accel = build_bvh(mesh)
    material = make_material(config)
    cameras = orbit_cameras(config, mesh)

    probes: List[EnvironmentProbe] = []
    truth, masks = [], []
    for p in config.relight.probes:
        probes.append(load_probe(p, config.scene.probe_rotation, config.scene.probe_interpolation))
        images, probe_masks = _load_truth(config.relight.truth_dir, p, len(cameras))
        truth.append(images)
        masks.append(probe_masks)
    have_masks = all(m is not None for row in masks for m in row)

    rows = relight_eval(material, accel, probes, cameras, truth, config.render,
                        masks=masks if have_masks else None,
                        names=[Path(p).stem for p in config.relight.probes], workers=workers)
    for row in rows:
        console.ok(f"{row.probe}: mean {row.mean_psnr:.2f} dB, min {row.min_psnr:.2f} dB over {row.frames} frames")
    target = write_table(rows, Path(out_dir) / 'relight.csv')
    return {'rows': len(rows), 'table': str(target)}


def run_metrics(config: PipelineConfig, out_dir: Path, workers: int) -> Dict:
    """PSNR of baked maps against truth maps, or of rendered frames against a frame set"""
    console.banner("METRICS")
    out_dir = Path(out_dir)
    if config.paths.truth_textures is not None:
        predicted_dir = Path(config.material.path) if config.material.kind == 'textures' else out_dir
        predicted = load_textures(predicted_dir)
        truth = load_textures(config.paths.truth_textures)
        if predicted.base_color.shape != truth.base_color.shape:
            raise InputError(f"baked maps are {predicted.resolution}^2 but truth maps are {truth.resolution}^2",
                             str(config.paths.truth_textures))
        mask = truth.mask if truth.mask is not None else predicted.mask
        if mask is not None and not np.any(mask):
            raise InputError("texture mask covers no texels", str(config.paths.truth_textures))
        rows = intrinsics_eval(predicted, truth, mask)
    elif config.paths.frameset is not None:
        reference = load_frameset(config.paths.frameset)
        rows = []
        for i in range(len(reference)):
            candidate = read_png(out_dir / 'frames' / frame_name(i), channels=3)
            if candidate.shape != reference.references[i].shape:
                raise InputError(f"rendered frame is {candidate.shape[1]}x{candidate.shape[0]} but the reference "
                                 f"is {reference.references[i].shape[1]}x{reference.references[i].shape[0]}",
                                 str(out_dir / 'frames' / frame_name(i)))
            if not np.any(reference.masks[i]):
                raise InputError("reference mask covers no pixels", frame_name(i))
            rows.append(MetricRow(name=frame_name(i), psnr=psnr(candidate, reference.references[i],
                                                                reference.masks[i]),
                                  pixels=int(reference.masks[i].sum())))
    else:
        raise ConfigError("metrics needs paths.truth_textures or paths.frameset")

    for row in rows:
        console.ok(f"{row.name}: {row.psnr:.2f} dB")
    target = write_table(rows, out_dir / 'metrics.csv')
    return {'rows': len(rows), 'table': str(target)}


def run_warp(config: PipelineConfig, out_dir: Path, workers: int) -> Dict:
    """forward-warp one source image to every camera of the trajectory"""
    console.banner("WARP")
    mesh = scene_mesh(config)
    accel = build_bvh(mesh)
    cameras = frameset_cameras(config, mesh)
    index = config.warp.source_frame
    if index >= len(cameras):
        raise ConfigError(f"warp.source_frame ({index}) is beyond the {len(cameras)} cameras")
    src_cam = cameras[index]

    if config.warp.source_image is not None:
        source = read_png(config.warp.source_image, channels=3)
    elif config.paths.frameset is not None:
        source = read_png(Path(config.paths.frameset) / 'frames' / frame_name(index), channels=3)
    else:
        raise ConfigError("warp needs warp.source_image or paths.frameset")
    if source.shape[:2] != (src_cam.height, src_cam.width):
        raise InputError(f"source image is {source.shape[1]}x{source.shape[0]} but camera {index} is "
                         f"{src_cam.width}x{src_cam.height}")

    out_dir = Path(out_dir)
    depth = render_depth(accel, src_cam)
    save_depth(out_dir / 'depth.bin', depth)
    coverage = []
    for i, cam in enumerate(tqdm(cameras, desc='warp', unit='frame', disable=console.is_quiet())):
        warped, mask = warp_image(source, depth, src_cam, cam)
        write_png(out_dir / 'warped' / frame_name(i), warped)
        write_mask(out_dir / 'warp_masks' / frame_name(i), mask)
        coverage.append(float(mask.mean()))
    console.ok(f"Warped frame {index} to {len(cameras)} cameras, mean coverage {np.mean(coverage):.3f}")
    return {'frames': len(cameras), 'output': str(out_dir)}


COMMANDS = {
    'render': run_render,
    'guides': run_guides,
    'reconstruct': run_reconstruct,
    'bake': run_bake,
    'relight': run_relight,
    'metrics': run_metrics,
    'warp': run_warp,
}
