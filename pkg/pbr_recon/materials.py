"""Material sources: anything that returns a PbrSample for surface points

The tracer, guide renderer and relighting evaluation accept any object with an
`evaluate(positions, uvs)` method. The optimizable MaterialField additionally
implements `query_backward`.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from pbr_recon.brdf import PbrSample
from pbr_recon.errors import InputError
from pbr_recon.tools.image_io import read_png, srgb_to_linear


@runtime_checkable
class MaterialSource(Protocol):
    def evaluate(self, positions: np.ndarray, uvs: np.ndarray) -> PbrSample:
        ...


@runtime_checkable
class DifferentiableMaterial(MaterialSource, Protocol):
    def query_backward(self, positions: np.ndarray, upstream: np.ndarray):
        ...


@dataclass(frozen=True)
class ConstantMaterial:
    base_color: Sequence[float] = (0.7, 0.7, 0.7)
    roughness: float = 0.5
    metallic: float = 0.0

    def evaluate(self, positions: np.ndarray, uvs: np.ndarray) -> PbrSample:
        return PbrSample.constant(len(positions), self.base_color, self.roughness, self.metallic)


def sample_texture(image: np.ndarray, uvs: np.ndarray) -> np.ndarray:
    """bilinear lookup with clamped edges; image row 0 is v = 1"""
    height, width = image.shape[:2]
    uvs = np.asarray(uvs, dtype=np.float64).reshape(-1, 2)
    x = np.clip(uvs[:, 0] * width - 0.5, 0.0, width - 1.0)
    y = np.clip((1.0 - uvs[:, 1]) * height - 0.5, 0.0, height - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), width - 1)
    y0 = np.minimum(np.floor(y).astype(np.int64), height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = x - x0
    fy = y - y0
    if image.ndim == 3:
        fx = fx[:, None]
        fy = fy[:, None]
    top = image[y0, x0] * (1.0 - fx) + image[y0, x1] * fx
    bottom = image[y1, x0] * (1.0 - fx) + image[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


@dataclass
class TextureSet:
    """baked maps in linear units: base color (R,R,3), roughness and metallic (R,R)"""
    base_color: np.ndarray
    roughness: np.ndarray
    metallic: np.ndarray
    mask: np.ndarray = None

    def evaluate(self, positions: np.ndarray, uvs: np.ndarray) -> PbrSample:
        return PbrSample(sample_texture(self.base_color, uvs),
                         sample_texture(self.roughness, uvs),
                         sample_texture(self.metallic, uvs))

    @property
    def resolution(self) -> int:
        return self.base_color.shape[0]


def load_textures(directory: Path) -> TextureSet:
    """read basecolor.png (sRGB), roughness.png and metallic.png (linear) from a directory"""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError("texture directory not found", str(directory))
    base = srgb_to_linear(read_png(directory / 'basecolor.png', channels=3))
    rough = read_png(directory / 'roughness.png', channels=1)
    metal = read_png(directory / 'metallic.png', channels=1)
    mask_path = directory / 'mask.png'
    mask = read_png(mask_path, channels=1) >= 0.5 if mask_path.exists() else None
    if not (base.shape[:2] == rough.shape == metal.shape):
        raise InputError("texture maps have different resolutions", str(directory))
    return TextureSet(base, rough, metal, mask)


@dataclass(frozen=True)
class OracleMaterial:
    """ground-truth pattern in UV space for self-rendered scenes

    checkerboard base color, roughness split into two zones along u, and a
    horizontal metallic stripe.
    """
    checks: int = 4
    color_a: Sequence[float] = (0.8, 0.2, 0.2)
    color_b: Sequence[float] = (0.2, 0.5, 0.8)
    roughness_low: float = 0.3
    roughness_high: float = 0.8
    stripe: Sequence[float] = (0.45, 0.55)

    def evaluate(self, positions: np.ndarray, uvs: np.ndarray) -> PbrSample:
        uvs = np.asarray(uvs, dtype=np.float64).reshape(-1, 2)
        cell = np.floor(np.clip(uvs, 0.0, np.nextafter(1.0, 0.0)) * self.checks).astype(np.int64)
        parity = ((cell[:, 0] + cell[:, 1]) % 2 == 0)[:, None]
        base = np.where(parity, np.asarray(self.color_a), np.asarray(self.color_b))
        rough = np.where(uvs[:, 0] < 0.5, self.roughness_low, self.roughness_high)
        metal = ((uvs[:, 1] >= self.stripe[0]) & (uvs[:, 1] < self.stripe[1])).astype(np.float64)
        return PbrSample(base, rough, metal)

    def bake(self, resolution: int) -> TextureSet:
        """evaluate at texel centers"""
        ys, xs = np.mgrid[0:resolution, 0:resolution]
        uvs = np.stack([(xs.ravel() + 0.5) / resolution, 1.0 - (ys.ravel() + 0.5) / resolution], axis=1)
        s = self.evaluate(np.zeros((uvs.shape[0], 3)), uvs)
        shape = (resolution, resolution)
        return TextureSet(s.base_color.reshape(shape + (3,)), s.roughness.reshape(shape),
                          s.metallic.reshape(shape))
