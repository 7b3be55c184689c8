"""Depth-based forward warping of a single image along a camera trajectory"""
from pathlib import Path
from typing import Tuple

import numpy as np

from pbr_recon.scene import AccelerationStructure, Camera, intersect_rays
from pbr_recon.tools.image_io import load_float_image, save_float_image

NO_HIT = -1.0


def render_depth(accel: AccelerationStructure, camera: Camera) -> np.ndarray:
    """(H, W) primary-hit ray distance through pixel centers; NO_HIT on miss"""
    px, py = camera.pixel_centers()
    directions = camera.pixel_directions(px, py)
    hits = intersect_rays(accel, np.broadcast_to(camera.origin, directions.shape), directions)
    depth = np.where(hits.valid, hits.t, NO_HIT)
    return depth.reshape(camera.height, camera.width)


def save_depth(path: Path, depth: np.ndarray):
    save_float_image(path, depth)


def load_depth(path: Path) -> np.ndarray:
    depth = load_float_image(path)
    if depth.ndim != 2:
        raise ValueError(f"depth dump must have one channel, got shape {depth.shape}")
    return depth


def warp_image(src: np.ndarray, src_depth: np.ndarray, src_cam: Camera,
               dst_cam: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """forward-splat src into dst_cam; returns (warped image, bool mask of splatted pixels)

    every valid source pixel is unprojected at its pixel center, reprojected and
    written to the nearest destination pixel; the closest surface wins, ties go
    to the lower source index.
    """
    src = np.asarray(src, dtype=np.float64)
    h, w = src_cam.height, src_cam.width
    if src.shape[:2] != (h, w) or src_depth.shape != (h, w):
        raise ValueError(f"image {src.shape[:2]} and depth {src_depth.shape} must match the "
                         f"{w}x{h} source camera")
    channels = src.shape[2] if src.ndim == 3 else 1
    flat_src = src.reshape(h * w, channels)

    px, py = src_cam.pixel_centers()
    depth = src_depth.ravel()
    valid = depth > 0
    src_index = np.nonzero(valid)[0]
    points = src_cam.origin + src_cam.pixel_directions(px[valid], py[valid]) * depth[valid][:, None]

    dh, dw = dst_cam.height, dst_cam.width
    warped = np.zeros((dh * dw, channels))
    mask = np.zeros(dh * dw, dtype=bool)

    qx, qy, view_z = dst_cam.project(points)
    dist = np.linalg.norm(points - dst_cam.origin, axis=1)
    with np.errstate(invalid='ignore'):
        tx = np.floor(qx)
        ty = np.floor(qy)
    inside = (view_z > 0) & np.isfinite(tx) & np.isfinite(ty) & (tx >= 0) & (tx < dw) & (ty >= 0) & (ty < dh)
    if np.any(inside):
        dst = (ty[inside] * dw + tx[inside]).astype(np.int64)
        order = np.lexsort((src_index[inside], dist[inside], dst))
        dst_sorted = dst[order]
        first = np.ones(dst_sorted.size, dtype=bool)
        first[1:] = dst_sorted[1:] != dst_sorted[:-1]
        winners = src_index[inside][order][first]
        warped[dst_sorted[first]] = flat_src[winners]
        mask[dst_sorted[first]] = True

    shape = (dh, dw, channels) if src.ndim == 3 else (dh, dw)
    return warped.reshape(shape), mask.reshape(dh, dw)
