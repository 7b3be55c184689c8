"""PSNR evaluation of relit renders and intrinsic maps"""
import csv
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from pbr_recon import console
from pbr_recon.envlight import EnvironmentProbe
from pbr_recon.errors import InputError
from pbr_recon.schemas import (
    LOSS_CSV_HEADER, METRIC_CSV_HEADER, RELIGHT_CSV_HEADER, LossRecord, MetricRow, RelightRow, RenderConfig,
)
from pbr_recon.scene import AccelerationStructure, Camera
from pbr_recon.tools.image_io import linear_to_srgb
from pbr_recon.tracer import render

PSNR_INF = float('inf')

_HEADERS = {RelightRow: RELIGHT_CSV_HEADER, MetricRow: METRIC_CSV_HEADER, LossRecord: LOSS_CSV_HEADER}


def psnr(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """10 log10(1 / MSE) over masked pixels with channels pooled; inf when identical"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch {a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        a = a[mask]
        b = b[mask]
    if a.size == 0:
        raise InputError("psnr over an empty mask")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * np.log10(1.0 / mse)


def relight_eval(material, accel: AccelerationStructure, probes: Sequence[EnvironmentProbe],
                 cameras: Sequence[Camera], truth: Sequence[Sequence[np.ndarray]], config: RenderConfig,
                 masks: Optional[Sequence[Sequence[np.ndarray]]] = None, names: Optional[Sequence[str]] = None,
                 workers: Optional[int] = None) -> List[RelightRow]:
    """render under each probe and compare to display-space truth renders

    truth[p][f] is the reference for probe p and camera f; masks are optional
    and default to the render's own coverage.
    """
    rows = []
    for p, probe in enumerate(probes):
        scores = []
        for f, cam in enumerate(cameras):
            image = render(accel, probe, material, cam, config, workers=workers)
            mask = masks[p][f] if masks is not None else image.coverage > 0
            if not np.any(mask):
                console.warn(f"relight: probe {p} frame {f} has an empty mask", key='empty_mask')
                continue
            scores.append(psnr(image.display(), truth[p][f], mask))
        name = names[p] if names is not None else (probe.source or f"probe_{p}")
        if scores:
            rows.append(RelightRow(probe=str(name), frames=len(scores), mean_psnr=float(np.mean(scores)),
                                   min_psnr=float(np.min(scores))))
        else:
            rows.append(RelightRow(probe=str(name), frames=0, mean_psnr=float('nan'), min_psnr=float('nan')))
    return rows


def intrinsics_eval(baked, truth, mask: Optional[np.ndarray] = None) -> List[MetricRow]:
    """PSNR of base color (sRGB-encoded), roughness and metallic maps"""
    if mask is None:
        mask = getattr(baked, 'mask', None)
    pixels = int(np.asarray(mask).sum()) if mask is not None else int(np.prod(baked.roughness.shape))
    pairs = (
        ('basecolor', linear_to_srgb(baked.base_color), linear_to_srgb(truth.base_color)),
        ('roughness', baked.roughness, truth.roughness),
        ('metallic', baked.metallic, truth.metallic),
    )
    rows = []
    for name, a, b in pairs:
        m = mask if mask is None or a.ndim == 2 else np.broadcast_to(np.asarray(mask)[..., None], a.shape)
        rows.append(MetricRow(name=name, psnr=psnr(a, b, m), pixels=pixels))
    return rows


def mean_absolute_error(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    diff = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    if mask is not None:
        diff = diff[np.asarray(mask, dtype=bool)]
    return float(diff.mean())


def write_table(rows: Sequence, path: Path, header: Optional[List[str]] = None) -> Path:
    """comma-separated table of RelightRow / MetricRow / LossRecord rows"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if header is None:
        header = _HEADERS.get(type(rows[0]), []) if rows else []
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        if header:
            writer.writerow(header)
        for row in rows:
            writer.writerow(row.csv_row())
    return path

