"""Monte Carlo path tracer with next-event estimation, MIS and an adjoint pass

Paths are traced wavefront-style: every bounce processes all live paths of a
chunk as numpy arrays. Each path vertex takes one light sample and one BSDF
sample; the BSDF sample continues the path or, if it escapes, picks up probe
radiance. Random numbers come from per-pixel counter streams so images do not
depend on tiling or worker count.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np

from pbr_recon import console
from pbr_recon.brdf import eval_bsdf, eval_bsdf_grad, mis_weight, pdf_bsdf, sample_bsdf
from pbr_recon.envlight import EnvironmentProbe, eval_probe, sample_probe
from pbr_recon.rng import BACKWARD_STREAM, FORWARD_STREAM, SampleStream, stratified_offsets
from pbr_recon.scene import (
    AccelerationStructure, Camera, Hits, dot, intersect_rays, occluded, shade_points, spawn_origins,
)
from pbr_recon.schemas import RenderConfig
from pbr_recon.tools.image_io import linear_to_srgb

#uniforms per path vertex: 2 light sample + 3 BSDF sample
DIMS_PER_VERTEX = 5


@dataclass
class RenderedImage:
    """linear HDR radiance (H, W, 3) and primary-hit coverage (H, W)"""
    radiance: np.ndarray
    coverage: np.ndarray
    dropped_samples: int = 0

    @property
    def shape(self) -> Tuple[int, int]:
        return self.coverage.shape

    def display(self) -> np.ndarray:
        return tonemap(self.radiance)


@dataclass
class IntrinsicImages:
    """per-pixel material at primary hits through pixel centers"""
    base_color: np.ndarray       #(H, W, 3) linear
    roughness: np.ndarray        #(H, W)
    metallic: np.ndarray         #(H, W)
    mask: np.ndarray             #(H, W) bool
    positions: np.ndarray        #(K, 3) hit points of mask pixels, row-major
    uvs: np.ndarray              #(K, 2)


def tonemap(x: np.ndarray) -> np.ndarray:
    """exposure 1, clamp to [0,1], sRGB transfer"""
    return linear_to_srgb(np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0))


def tonemap_grad(x: np.ndarray) -> np.ndarray:
    """derivative of tonemap; 0 outside the open interval (0, 1)"""
    x = np.asarray(x, dtype=np.float64)
    inside = (x > 0.0) & (x < 1.0)
    safe = np.where(inside, x, 0.5)
    grad = np.where(safe <= 0.0031308, 12.92, (1.055 / 2.4) * np.power(safe, 1.0 / 2.4 - 1.0))
    return np.where(inside, grad, 0.0)


#path tracing core

@dataclass
class _Context:
    accel: AccelerationStructure
    probe: EnvironmentProbe
    material: object
    sampling_material: Optional[object]
    camera: Camera
    config: RenderConfig
    technique: str
    seed: int
    stream: int
    spp: int


@dataclass
class _Vertex:
    """what the adjoint pass needs from one path vertex of a chunk"""
    paths: np.ndarray
    position: np.ndarray
    beta: np.ndarray
    nee: np.ndarray
    throughput: np.ndarray
    escaped: np.ndarray
    grad_nee: Tuple[np.ndarray, np.ndarray, np.ndarray]
    grad_throughput: Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass
class _ChunkResult:
    radiance: np.ndarray
    covered: np.ndarray
    vertices: List[_Vertex] = field(default_factory=list)


def _primary_rays(ctx: _Context, pixels: np.ndarray, samples: np.ndarray, stream: SampleStream):
    cam = ctx.camera
    offsets = stratified_offsets(samples, ctx.spp, stream.next(2))
    px = (pixels % cam.width) + offsets[:, 0]
    py = (pixels // cam.width) + offsets[:, 1]
    directions = cam.pixel_directions(px, py)
    origins = np.broadcast_to(cam.origin, directions.shape).copy()
    return origins, directions


def _trace_chunk(ctx: _Context, pixels: np.ndarray, samples: np.ndarray, record: bool) -> _ChunkResult:
    cfg = ctx.config
    n_paths = pixels.shape[0]
    stream = SampleStream(ctx.seed, ctx.stream, pixels, samples)
    origins, directions = _primary_rays(ctx, pixels, samples, stream)
    hits = intersect_rays(ctx.accel, origins, directions)
    covered = hits.valid.copy()

    radiance = np.zeros((n_paths, 3))
    if np.any(~covered):
        radiance[~covered] = eval_probe(ctx.probe, directions[~covered])[0]

    beta = np.ones((n_paths, 3))
    live = np.nonzero(covered)[0]
    vertices = []
    eps = ctx.accel.spawn_eps
    use_light = ctx.technique in ('mis', 'light')

    for _ in range(cfg.max_bounces):
        u = stream.next(DIMS_PER_VERTEX)
        if live.size == 0:
            break
        sp = shade_points(ctx.accel.mesh, hits.take(live), origins[live], directions[live])
        mat = ctx.material.evaluate(sp.position, sp.uv)
        smat = ctx.sampling_material.evaluate(sp.position, sp.uv) if ctx.sampling_material is not None else mat
        n, wo = sp.normal, sp.wo
        k = live.size

        #light sample
        nee = np.zeros((k, 3))
        grad_nee = (np.zeros((k, 3)), np.zeros((k, 3)), np.zeros((k, 3)))
        if use_light:
            wl, le, pdf_l = sample_probe(ctx.probe, u[live, 0:2])
            cos_l = dot(n, wl)
            test = (cos_l > 0) & (pdf_l > 0)
            visible = np.zeros(k, dtype=bool)
            if np.any(test):
                visible[test] = ~occluded(ctx.accel, spawn_origins(sp.take(test), wl[test], eps), wl[test])
            weight = mis_weight(pdf_l, pdf_bsdf(smat, wl, wo, n, cfg.diffuse_only)) \
                if ctx.technique == 'mis' else np.ones(k)
            with np.errstate(invalid='ignore', divide='ignore'):
                scale_l = np.where(visible, weight * cos_l / pdf_l, 0.0)[:, None] * le
            if record:
                f_l, *d_l = eval_bsdf_grad(mat, wl, wo, n, cfg.diffuse_only)
                grad_nee = tuple(d * scale_l for d in d_l)
            else:
                f_l = eval_bsdf(mat, wl, wo, n, cfg.diffuse_only)
            nee = f_l * scale_l

        #BSDF sample
        wi, pdf_b, _ = sample_bsdf(smat, wo, n, u[live, 2:5], cfg.diffuse_only)
        cos_b = dot(n, wi)
        ok = (pdf_b > 0) & (cos_b > 0)
        with np.errstate(invalid='ignore', divide='ignore'):
            scale_b = np.where(ok, cos_b / pdf_b, 0.0)[:, None]
        if record:
            f_b, *d_b = eval_bsdf_grad(mat, wi, wo, n, cfg.diffuse_only)
            grad_w = tuple(d * scale_b for d in d_b)
        else:
            f_b = eval_bsdf(mat, wi, wo, n, cfg.diffuse_only)
            grad_w = None
        throughput = f_b * scale_b
        cont = ok & np.any(throughput > 0, axis=1)

        next_origins = spawn_origins(sp, wi, eps)
        next_hits = Hits(np.full(k, -1, dtype=np.int64), np.zeros(k), np.zeros(k), np.full(k, np.inf))
        if np.any(cont):
            traced = intersect_rays(ctx.accel, next_origins[cont], wi[cont])
            for name in ('triangle', 'w0', 'w1', 't'):
                getattr(next_hits, name)[cont] = getattr(traced, name)

        escaped = np.zeros((k, 3))
        esc = cont & ~next_hits.valid
        if np.any(esc) and ctx.technique != 'light':
            le_b, pdf_lb = eval_probe(ctx.probe, wi[esc])
            weight_b = mis_weight(pdf_b[esc], pdf_lb) if ctx.technique == 'mis' else np.ones(int(esc.sum()))
            escaped[esc] = weight_b[:, None] * le_b

        radiance[live] += beta[live] * (nee + throughput * escaped)
        if record:
            vertices.append(_Vertex(live, sp.position, beta[live].copy(), nee, throughput, escaped,
                                    grad_nee, grad_w))

        beta[live] *= throughput
        keep = cont & next_hits.valid
        origins[live] = next_origins
        directions[live] = wi
        hits.triangle[live] = next_hits.triangle
        hits.w0[live] = next_hits.w0
        hits.w1[live] = next_hits.w1
        hits.t[live] = next_hits.t
        live = live[keep]

    return _ChunkResult(radiance, covered, vertices)


def _adjoint_records(result: _ChunkResult, path_adjoint: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """walk the vertices backwards; returns (positions, d loss / d material outputs)"""
    n_paths = path_adjoint.shape[0]
    leaving = np.zeros((n_paths, 3))     #radiance leaving vertex j+1 toward vertex j
    positions, upstream = [], []
    for v in reversed(result.vertices):
        incoming = v.escaped + leaving[v.paths]
        a = path_adjoint[v.paths] * v.beta
        (nee_c, nee_r, nee_m), (w_c, w_r, w_m) = v.grad_nee, v.grad_throughput
        g = np.empty((v.paths.size, 5))
        g[:, 0:3] = a * (nee_c + w_c * incoming)
        g[:, 3] = (a * (nee_r + w_r * incoming)).sum(axis=1)
        g[:, 4] = (a * (nee_m + w_m * incoming)).sum(axis=1)
        positions.append(v.position)
        upstream.append(g)

        out = v.nee + v.throughput * incoming
        leaving = np.zeros((n_paths, 3))
        leaving[v.paths] = out
    if not positions:
        return np.zeros((0, 3)), np.zeros((0, 5))
    return np.concatenate(positions[::-1]), np.concatenate(upstream[::-1])


#tiling

def image_tiles(width: int, height: int, tile: int) -> List[np.ndarray]:
    """row-major tiles as arrays of flat pixel indices"""
    tiles = []
    for y0 in range(0, height, tile):
        for x0 in range(0, width, tile):
            ys, xs = np.mgrid[y0:min(y0 + tile, height), x0:min(x0 + tile, width)]
            tiles.append((ys * width + xs).ravel())
    return tiles


def _run_tiles(fn, tiles: List[np.ndarray], workers: int) -> Iterator:
    """map fn over tiles, yielding results in tile order"""
    if workers <= 1:
        for t in tiles:
            yield fn(t)
        return
    window = workers * 2
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for lo in range(0, len(tiles), window):
            for result in pool.map(fn, tiles[lo:lo + window]):
                yield result


def _make_context(accel, probe, material, camera, config, stream, sampling_material,
                  technique, seed, spp) -> _Context:
    technique = technique or config.technique
    if technique not in ('mis', 'light', 'bsdf'):
        raise ValueError(f"unknown technique {technique!r}")
    return _Context(accel, probe, material, sampling_material, camera, config, technique,
                    config.seed if seed is None else int(seed), stream,
                    config.spp if spp is None else int(spp))


def _tile_paths(ctx: _Context, tile: np.ndarray):
    pixels = np.repeat(tile, ctx.spp)
    samples = np.tile(np.arange(ctx.spp, dtype=np.int64), tile.size)
    return pixels, samples


def _render_tile(ctx: _Context, tile: np.ndarray):
    pixels, samples = _tile_paths(ctx, tile)
    radiance = np.empty((pixels.size, 3))
    covered = np.empty(pixels.size, dtype=bool)
    step = ctx.config.ray_batch
    for lo in range(0, pixels.size, step):
        res = _trace_chunk(ctx, pixels[lo:lo + step], samples[lo:lo + step], record=False)
        radiance[lo:lo + step] = res.radiance
        covered[lo:lo + step] = res.covered

    bad = ~np.all(np.isfinite(radiance), axis=1)
    radiance[bad] = 0.0
    radiance = radiance.reshape(tile.size, ctx.spp, 3).mean(axis=1)
    coverage = covered.reshape(tile.size, ctx.spp).mean(axis=1)
    return radiance, coverage, int(bad.sum())


def render(accel: AccelerationStructure, probe: EnvironmentProbe, material, camera: Camera,
           config: RenderConfig, stream: int = FORWARD_STREAM, sampling_material=None,
           technique: Optional[str] = None, seed: Optional[int] = None, spp: Optional[int] = None,
           workers: Optional[int] = None) -> RenderedImage:
    """forward render; sampling_material freezes the sampling decisions (pdfs, lobe choice)"""
    ctx = _make_context(accel, probe, material, camera, config, stream, sampling_material,
                        technique, seed, spp)
    h, w = camera.height, camera.width
    radiance = np.zeros((h * w, 3))
    coverage = np.zeros(h * w)
    dropped = 0
    tiles = image_tiles(w, h, config.tile_size)
    for tile, (rad, cov, bad) in zip(tiles, _run_tiles(lambda t: _render_tile(ctx, t), tiles,
                                                      workers or config.workers)):
        radiance[tile] = rad
        coverage[tile] = cov
        dropped += bad
    if dropped:
        console.count('nonfinite_samples', dropped)
    return RenderedImage(radiance.reshape(h, w, 3), coverage.reshape(h, w), dropped)


def _backward_tile(ctx: _Context, adjoint: np.ndarray, tile: np.ndarray):
    pixels, samples = _tile_paths(ctx, tile)
    positions, upstream = [], []
    step = ctx.config.ray_batch
    for lo in range(0, pixels.size, step):
        pix = pixels[lo:lo + step]
        res = _trace_chunk(ctx, pix, samples[lo:lo + step], record=True)
        finite = np.all(np.isfinite(res.radiance), axis=1)
        path_adjoint = np.where(finite[:, None], adjoint[pix] / ctx.spp, 0.0)
        p, g = _adjoint_records(res, path_adjoint)
        keep = np.all(np.isfinite(g), axis=1) & np.any(g != 0.0, axis=1)
        positions.append(p[keep])
        upstream.append(g[keep])
    return np.concatenate(positions), np.concatenate(upstream)


def render_backward(accel: AccelerationStructure, probe: EnvironmentProbe, material, camera: Camera,
                    config: RenderConfig, adjoint: np.ndarray, stream: int = BACKWARD_STREAM,
                    sampling_material=None, technique: Optional[str] = None, seed: Optional[int] = None,
                    spp: Optional[int] = None, workers: Optional[int] = None):
    """retrace with the backward spp and accumulate material gradients

    adjoint is d loss / d linear radiance per pixel, (H, W, 3). Sampling is
    detached: gradients flow through BSDF values only.
    """
    adjoint = np.asarray(adjoint, dtype=np.float64)
    if adjoint.shape != (camera.height, camera.width, 3):
        raise ValueError(f"adjoint shape {adjoint.shape} does not match the {camera.width}x{camera.height} camera")
    if not np.any(adjoint != 0.0):
        return
    ctx = _make_context(accel, probe, material, camera, config, stream, sampling_material, technique,
                        seed, config.spp_backward if spp is None else spp)
    flat = adjoint.reshape(-1, 3)
    tiles = image_tiles(camera.width, camera.height, config.tile_size)
    #gradient accumulation stays on this thread, in tile order
    for positions, upstream in _run_tiles(lambda t: _backward_tile(ctx, flat, t), tiles,
                                          workers or config.workers):
        if positions.shape[0]:
            material.query_backward(positions, upstream)


#intrinsic G-buffers

def render_intrinsics(accel: AccelerationStructure, material, camera: Camera) -> IntrinsicImages:
    """material channels at the primary hit through each pixel center"""
    h, w = camera.height, camera.width
    px, py = camera.pixel_centers()
    directions = camera.pixel_directions(px, py)
    origins = np.broadcast_to(camera.origin, directions.shape)
    hits = intersect_rays(accel, origins, directions)
    mask = hits.valid

    base = np.zeros((h * w, 3))
    rough = np.zeros(h * w)
    metal = np.zeros(h * w)
    positions = np.zeros((0, 3))
    uvs = np.zeros((0, 2))
    if np.any(mask):
        idx = np.nonzero(mask)[0]
        sp = shade_points(accel.mesh, hits.take(idx), origins[idx], directions[idx])
        s = material.evaluate(sp.position, sp.uv)
        base[idx] = s.base_color
        rough[idx] = s.roughness
        metal[idx] = s.metallic
        positions, uvs = sp.position, sp.uv
    return IntrinsicImages(base.reshape(h, w, 3), rough.reshape(h, w), metal.reshape(h, w),
                           mask.reshape(h, w), positions, uvs)


def render_intrinsics_backward(intrinsics: IntrinsicImages, material, grad_base: np.ndarray,
                               grad_roughness: np.ndarray, grad_metallic: np.ndarray):
    """push per-pixel gradients of the intrinsic images into the material"""
    mask = intrinsics.mask.ravel()
    if not np.any(mask):
        return
    upstream = np.concatenate([
        np.asarray(grad_base, dtype=np.float64).reshape(-1, 3)[mask],
        np.asarray(grad_roughness, dtype=np.float64).reshape(-1, 1)[mask],
        np.asarray(grad_metallic, dtype=np.float64).reshape(-1, 1)[mask],
    ], axis=1)
    material.query_backward(intrinsics.positions, upstream)
