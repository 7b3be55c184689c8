"""HDR environment probe: loading, lookup and importance sampling

Equirectangular layout: u in [0,1) is azimuth [0, 2pi) measured from +X toward
+Z, v in [0,1] is the polar angle [0, pi] measured from +Y (row 0 is the top).
`rotation` turns the probe about +Y.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from pbr_recon import console
from pbr_recon.errors import ProbeError
from pbr_recon.tools.hdr_io import read_hdr, write_hdr

LUMA = np.array([0.2126, 0.7152, 0.0722])
TEXEL_MARGIN = 1e-9


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec.709 luminance over the last axis"""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * LUMA[0] + rgb[..., 1] * LUMA[1] + rgb[..., 2] * LUMA[2]


@dataclass(frozen=True)
class EnvironmentProbe:
    image: np.ndarray
    texel_prob: np.ndarray
    marginal_cdf: np.ndarray
    conditional_cdf: np.ndarray
    row_solid_angle: np.ndarray
    search_keys: np.ndarray
    rotation: float = 0.0
    interpolation: str = 'bilinear'
    source: Optional[str] = None

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def max_radiance(self) -> float:
        return float(self.image.max())

    def integrated_radiance(self) -> np.ndarray:
        """sum over texels of radiance x texel solid angle (RGB)"""
        return (self.image * self.row_solid_angle[:, None, None]).sum(axis=(0, 1))

    def validate(self) -> dict:
        errors = []
        if not np.all(np.isfinite(self.image)) or self.image.min() < 0:
            errors.append("radiance must be finite and non-negative")
        for name, cdf in (('marginal', self.marginal_cdf), ('conditional', self.conditional_cdf)):
            if np.any(np.diff(cdf, axis=-1) < 0):
                errors.append(f"{name} cdf is not monotone")
            if np.any(np.abs(cdf[..., -1] - 1.0) > 1e-6):
                errors.append(f"{name} cdf does not end at 1")
        if errors:
            return {'valid': False, 'errors': errors}
        return {'valid': True, 'width': self.width, 'height': self.height}


def _row_solid_angles(height: int, width: int) -> np.ndarray:
    theta = np.linspace(0.0, np.pi, height + 1)
    return (2.0 * np.pi / width) * (np.cos(theta[:-1]) - np.cos(theta[1:]))


def _cdf(weights: np.ndarray) -> np.ndarray:
    """cumulative table with a leading 0 and trailing exact 1 along the last axis"""
    total = weights.sum(axis=-1, keepdims=True)
    csum = np.cumsum(weights, axis=-1)
    n = weights.shape[-1]
    uniform = np.broadcast_to(np.arange(1, n + 1) / n, weights.shape)
    with np.errstate(invalid='ignore', divide='ignore'):
        cdf = np.where(total > 0, csum / total, uniform)
    cdf = np.maximum.accumulate(cdf, axis=-1)
    cdf[..., -1] = 1.0
    zeros = np.zeros(weights.shape[:-1] + (1,))
    return np.concatenate([zeros, cdf], axis=-1)


def make_probe(image: np.ndarray, rotation: float = 0.0, interpolation: str = 'bilinear',
               source: Optional[str] = None) -> EnvironmentProbe:
    """build sampling tables over an (H, W, 3) linear radiance image"""
    image = np.array(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ProbeError(f"probe must be an (H, W, 3) image, got shape {image.shape}", source)
    if interpolation not in ('bilinear', 'nearest'):
        raise ValueError(f"unknown probe interpolation {interpolation!r}")

    bad = ~np.isfinite(image) | (image < 0)
    n_bad = int(bad.sum())
    if n_bad:
        image[bad] = 0.0
        console.warn(f"probe: clamped {n_bad} non-finite or negative values to 0",
                     key='probe_clamped_values', count=n_bad)

    height, width = image.shape[:2]
    omega = _row_solid_angles(height, width)
    weights = luminance(image) * omega[:, None]
    total = weights.sum()
    if not total > 0:
        raise ProbeError("probe has zero energy and cannot be importance-sampled", source)

    conditional = _cdf(weights)
    image.setflags(write=False)
    return EnvironmentProbe(
        image=image,
        texel_prob=weights / total,
        marginal_cdf=_cdf(weights.sum(axis=1)),
        conditional_cdf=conditional,
        search_keys=(conditional + 2.0 * np.arange(height)[:, None]).ravel(),
        row_solid_angle=omega,
        rotation=float(rotation),
        interpolation=interpolation,
        source=source,
    )


def load_probe(path: Path, rotation: float = 0.0, interpolation: str = 'bilinear') -> EnvironmentProbe:
    """decode a Radiance .hdr probe and build its sampling tables"""
    return make_probe(read_hdr(path), rotation, interpolation, source=str(path))


def save_probe(probe: Union[EnvironmentProbe, np.ndarray], path: Path):
    image = probe.image if isinstance(probe, EnvironmentProbe) else np.asarray(probe)
    write_hdr(path, image)


def direction_to_uv(probe: EnvironmentProbe, directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    theta = np.arccos(np.clip(d[:, 1], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[:, 2], d[:, 0]) - probe.rotation, 2.0 * np.pi)
    u = phi / (2.0 * np.pi)
    u = np.where(u >= 1.0, 0.0, u)
    return u, theta / np.pi


def uv_to_direction(probe: EnvironmentProbe, u: np.ndarray, cos_theta: np.ndarray) -> np.ndarray:
    phi = 2.0 * np.pi * u + probe.rotation
    sin_theta = np.sqrt(np.maximum(0.0, 1.0 - cos_theta * cos_theta))
    return np.stack([sin_theta * np.cos(phi), cos_theta, sin_theta * np.sin(phi)], axis=-1)


def _texel(probe: EnvironmentProbe, u: np.ndarray, v: np.ndarray):
    col = np.minimum((u * probe.width).astype(np.int64), probe.width - 1)
    row = np.minimum((v * probe.height).astype(np.int64), probe.height - 1)
    return row, col


def _lookup(probe: EnvironmentProbe, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    if probe.interpolation == 'nearest':
        row, col = _texel(probe, u, v)
        return probe.image[row, col]

    #bilinear between texel centers, wrapping in azimuth, clamped at the poles
    x = u * probe.width - 0.5
    y = np.clip(v * probe.height - 0.5, 0.0, probe.height - 1.0)
    x0 = np.floor(x)
    y0 = np.minimum(np.floor(y), probe.height - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    c0 = np.mod(x0.astype(np.int64), probe.width)
    c1 = np.mod(c0 + 1, probe.width)
    r0 = y0.astype(np.int64)
    r1 = np.minimum(r0 + 1, probe.height - 1)
    img = probe.image
    top = img[r0, c0] * (1.0 - fx) + img[r0, c1] * fx
    bottom = img[r1, c0] * (1.0 - fx) + img[r1, c1] * fx
    return top * (1.0 - fy) + bottom * fy


def eval_probe(probe: EnvironmentProbe, directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """radiance (N,3) and light-sampling pdf (N,) per steradian for unit directions"""
    u, v = direction_to_uv(probe, directions)
    row, col = _texel(probe, u, v)
    pdf = probe.texel_prob[row, col] / probe.row_solid_angle[row]
    return _lookup(probe, u, v), pdf


def sample_probe(probe: EnvironmentProbe, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """importance-sample directions from (N, 2) uniforms; returns (direction, radiance, pdf)"""
    u = np.asarray(u, dtype=np.float64).reshape(-1, 2)
    h, w = probe.height, probe.width

    mcdf = probe.marginal_cdf
    row = np.clip(np.searchsorted(mcdf, u[:, 0], side='right') - 1, 0, h - 1)
    span = mcdf[row + 1] - mcdf[row]
    with np.errstate(invalid='ignore', divide='ignore'):
        sy = np.where(span > 0, (u[:, 0] - mcdf[row]) / span, 0.5)

    #one binary search over all rows: row i occupies keys [2i, 2i+1]
    flat = np.searchsorted(probe.search_keys, u[:, 1] + 2.0 * row, side='right') - 1
    col = np.clip(flat - row * (w + 1), 0, w - 1)
    lo = probe.conditional_cdf[row, col]
    hi = probe.conditional_cdf[row, col + 1]
    with np.errstate(invalid='ignore', divide='ignore'):
        sx = np.where(hi > lo, (u[:, 1] - lo) / (hi - lo), 0.5)
    #stay strictly inside the texel so lookups land in the sampled texel
    sx = np.clip(sx, TEXEL_MARGIN, 1.0 - TEXEL_MARGIN)
    sy = np.clip(sy, TEXEL_MARGIN, 1.0 - TEXEL_MARGIN)

    #uniform in solid angle inside the chosen texel
    theta0 = np.pi * row / h
    theta1 = np.pi * (row + 1) / h
    cos_theta = np.cos(theta0) + sy * (np.cos(theta1) - np.cos(theta0))
    direction = uv_to_direction(probe, (col + sx) / w, cos_theta)

    u_dir, v_dir = direction_to_uv(probe, direction)
    pdf = probe.texel_prob[row, col] / probe.row_solid_angle[row]
    return direction, _lookup(probe, u_dir, v_dir), pdf


if __name__ == '__main__':
    #quick self-check: E[1/pdf] over the sphere
    probe = make_probe(np.ones((32, 64, 3)))
    rng = np.random.default_rng(0)
    _, _, pdf = sample_probe(probe, rng.random((100000, 2)))
    print(f"E[1/pdf] = {np.mean(1.0 / pdf):.5f}  (4*pi = {4 * np.pi:.5f})")
