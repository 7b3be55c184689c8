"""Multiresolution hash grid + MLP material field

Parameters are stored as float32; gradients accumulate in float64 buffers of
the same shapes. Queries take world positions, normalized by the scene box.
"""
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from pbr_recon import console
from pbr_recon.brdf import PbrSample
from pbr_recon.errors import InputError, MeshError
from pbr_recon.schemas import FieldConfig
from pbr_recon.tools.image_io import linear_to_srgb, write_mask, write_png

PRIMES = (np.uint64(1), np.uint64(2654435761), np.uint64(805459861))
N_OUTPUTS = 5
QUERY_CHUNK = 1 << 15

CHECKPOINT_MAGIC = b'PBRF'
CHECKPOINT_VERSION = 1
#magic, version, levels, table_log2, features, n_min, n_max, hidden_layers, hidden_width
_HEADER = struct.Struct('<4sIIIIIIII')
_FLOATS = struct.Struct('<7d')   #leaky slope, bbox min xyz, bbox max xyz

_CORNERS = np.array([[(k >> 0) & 1, (k >> 1) & 1, (k >> 2) & 1] for k in range(8)], dtype=np.int64)


def level_resolutions(config: FieldConfig) -> np.ndarray:
    """geometric schedule between n_min and n_max"""
    if config.levels == 1:
        return np.array([config.n_min], dtype=np.int64)
    growth = np.exp((np.log(config.n_max) - np.log(config.n_min)) / (config.levels - 1))
    res = np.floor(config.n_min * growth ** np.arange(config.levels) + 1e-9).astype(np.int64)
    return np.maximum(res, 1)


def hash_coords(coords: np.ndarray, table_size: int) -> np.ndarray:
    """XOR of coordinate x prime, modulo the (power of two) table size"""
    c = coords.astype(np.uint64)
    with np.errstate(over='ignore'):
        h = (c[..., 0] * PRIMES[0]) ^ (c[..., 1] * PRIMES[1]) ^ (c[..., 2] * PRIMES[2])
    return (h & np.uint64(table_size - 1)).astype(np.int64)


@dataclass
class Encoding:
    """per-point interpolation record: entry indices and weights (N, L, 8)"""
    index: np.ndarray
    weight: np.ndarray
    features: np.ndarray


@dataclass
class Activations:
    inputs: List[np.ndarray]        #input of each dense layer
    preacts: List[np.ndarray]       #pre-activation of each dense layer
    output: np.ndarray              #sigmoid output (N, 5)


class MaterialField:
    """optimizable spatially varying material: hash-grid features decoded by a small MLP"""

    def __init__(self, config: FieldConfig, bbox_min, bbox_max, init: bool = True):
        self.config = config
        self.resolutions = level_resolutions(config)
        self.bbox_min = np.asarray(bbox_min, dtype=np.float64).reshape(3)
        self.bbox_max = np.asarray(bbox_max, dtype=np.float64).reshape(3)
        extent = float(np.max(self.bbox_max - self.bbox_min))
        self._center = 0.5 * (self.bbox_min + self.bbox_max)
        self._extent = extent if extent > 0 else 1.0

        L, T, F = config.levels, config.table_size, config.features
        dims = [L * F] + [config.hidden_width] * config.hidden_layers + [N_OUTPUTS]
        rng = np.random.default_rng(config.seed)
        if init:
            self.tables = rng.uniform(-config.table_init, config.table_init, size=(L, T, F)).astype(np.float32)
            self.weights = []
            for fan_in, fan_out in zip(dims[:-1], dims[1:]):
                bound = np.sqrt(6.0 / fan_in)
                self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32))
        else:
            self.tables = np.zeros((L, T, F), dtype=np.float32)
            self.weights = [np.zeros((a, b), dtype=np.float32) for a, b in zip(dims[:-1], dims[1:])]
        self.biases = [np.zeros(b, dtype=np.float32) for b in dims[1:]]
        self.zero_grad()

    #parameters
    def parameters(self) -> Dict[str, np.ndarray]:
        params = {'tables': self.tables}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f'w{i}'] = w
            params[f'b{i}'] = b
        return params

    def gradients(self) -> Dict[str, np.ndarray]:
        grads = {'tables': self.grad_tables}
        for i, (w, b) in enumerate(zip(self.grad_weights, self.grad_biases)):
            grads[f'w{i}'] = w
            grads[f'b{i}'] = b
        return grads

    def param_groups(self) -> Dict[str, List[str]]:
        """names per learning-rate group"""
        names = list(self.parameters())
        return {'tables': ['tables'], 'mlp': [n for n in names if n != 'tables']}

    def zero_grad(self):
        self.grad_tables = np.zeros(self.tables.shape, dtype=np.float64)
        self.grad_weights = [np.zeros(w.shape, dtype=np.float64) for w in self.weights]
        self.grad_biases = [np.zeros(b.shape, dtype=np.float64) for b in self.biases]

    def copy(self) -> 'MaterialField':
        other = MaterialField(self.config, self.bbox_min, self.bbox_max, init=False)
        other.tables = self.tables.copy()
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    #forward
    def normalize(self, positions: np.ndarray) -> np.ndarray:
        x = (np.asarray(positions, dtype=np.float64).reshape(-1, 3) - self._center) / self._extent + 0.5
        return np.clip(x, 0.0, 1.0)

    def encode(self, positions: np.ndarray) -> Encoding:
        x = self.normalize(positions)
        n = x.shape[0]
        L, T, F = self.config.levels, self.config.table_size, self.config.features
        index = np.empty((n, L, 8), dtype=np.int64)
        weight = np.empty((n, L, 8), dtype=np.float64)
        features = np.empty((n, L * F), dtype=np.float64)
        for level, res in enumerate(self.resolutions):
            pos = x * res
            base = np.minimum(np.floor(pos).astype(np.int64), res - 1)
            frac = pos - base
            corners = base[:, None, :] + _CORNERS[None, :, :]                 #(N, 8, 3)
            w = np.where(_CORNERS[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :]).prod(axis=2)
            idx = hash_coords(corners, T)
            index[:, level] = idx
            weight[:, level] = w
            entries = self.tables[level][idx].astype(np.float64)              #(N, 8, F)
            features[:, level * F:(level + 1) * F] = (w[:, :, None] * entries).sum(axis=1)
        return Encoding(index, weight, features)

    def _mlp(self, features: np.ndarray) -> Activations:
        slope = self.config.leaky_slope
        inputs, preacts = [], []
        h = features
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w.astype(np.float64) + b.astype(np.float64)
            preacts.append(z)
            h = z if i == last else np.where(z > 0, z, slope * z)
        output = 1.0 / (1.0 + np.exp(-h))
        return Activations(inputs, preacts, output)

    def forward(self, positions: np.ndarray) -> Tuple[Encoding, Activations]:
        enc = self.encode(positions)
        return enc, self._mlp(enc.features)

    def query_array(self, positions: np.ndarray) -> np.ndarray:
        """(N, 5) sigmoid outputs: base color rgb, roughness, metallic"""
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        out = np.empty((positions.shape[0], N_OUTPUTS))
        for lo in range(0, positions.shape[0], QUERY_CHUNK):
            _, act = self.forward(positions[lo:lo + QUERY_CHUNK])
            out[lo:lo + QUERY_CHUNK] = act.output
        return out

    def query(self, positions: np.ndarray) -> PbrSample:
        return PbrSample.from_array(self.query_array(positions))

    def evaluate(self, positions: np.ndarray, uvs: np.ndarray = None) -> PbrSample:
        return self.query(positions)

    #backward
    def query_backward(self, positions: np.ndarray, upstream: np.ndarray):
        """accumulate d(upstream . output)/d(parameters) into the gradient buffers"""
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        upstream = np.asarray(upstream, dtype=np.float64).reshape(-1, N_OUTPUTS)
        live = np.any(upstream != 0.0, axis=1)
        if not np.any(live):
            return
        positions, upstream = positions[live], upstream[live]
        for lo in range(0, positions.shape[0], QUERY_CHUNK):
            self._backward_chunk(positions[lo:lo + QUERY_CHUNK], upstream[lo:lo + QUERY_CHUNK])

    def _backward_chunk(self, positions: np.ndarray, upstream: np.ndarray):
        enc, act = self.forward(positions)
        slope = self.config.leaky_slope
        y = act.output
        g = upstream * y * (1.0 - y)

        for i in range(len(self.weights) - 1, -1, -1):
            self.grad_weights[i] += act.inputs[i].T @ g
            self.grad_biases[i] += g.sum(axis=0)
            g = g @ self.weights[i].astype(np.float64).T
            if i > 0:
                g = g * np.where(act.preacts[i - 1] > 0, 1.0, slope)

        F, T = self.config.features, self.config.table_size
        for level in range(self.config.levels):
            g_level = g[:, level * F:(level + 1) * F]                               #(N, F)
            contrib = enc.weight[:, level, :, None] * g_level[:, None, :]          #(N, 8, F)
            keys = (enc.index[:, level, :, None] * F + np.arange(F)).ravel()
            uniq, inverse = np.unique(keys, return_inverse=True)
            sums = np.bincount(inverse.ravel(), weights=contrib.ravel(), minlength=uniq.size)
            flat = self.grad_tables[level].reshape(-1)
            flat[uniq] += sums

    #diagnostics
    def with_levels(self, active: int) -> 'MaterialField':
        """copy with every level from `active` upward zeroed"""
        other = self.copy()
        other.tables[active:] = 0.0
        return other


def save_checkpoint(field: MaterialField, path: Path):
    """versioned little-endian blob: header, tables, then each layer's W and b"""
    c = field.config
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, c.levels, c.table_size_log2,
                             c.features, c.n_min, c.n_max, c.hidden_layers, c.hidden_width))
        f.write(_FLOATS.pack(c.leaky_slope, *field.bbox_min, *field.bbox_max))
        f.write(np.ascontiguousarray(field.tables, dtype='<f4').tobytes())
        for w, b in zip(field.weights, field.biases):
            f.write(np.ascontiguousarray(w, dtype='<f4').tobytes())
            f.write(np.ascontiguousarray(b, dtype='<f4').tobytes())


def load_checkpoint(path: Path, seed: int = 0) -> MaterialField:
    path = Path(path)
    if not path.exists():
        raise InputError("checkpoint not found", str(path))
    data = path.read_bytes()
    if len(data) < _HEADER.size + _FLOATS.size:
        raise InputError("truncated checkpoint", str(path))
    magic, version, levels, log2, features, n_min, n_max, layers, width = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise InputError(f"not a field checkpoint (magic {magic!r})", str(path))
    if version != CHECKPOINT_VERSION:
        raise InputError(f"unsupported checkpoint version {version}", str(path))
    slope, *box = _FLOATS.unpack_from(data, _HEADER.size)

    config = FieldConfig(levels=levels, table_size_log2=log2, features=features, n_min=n_min,
                         n_max=n_max, hidden_layers=layers, hidden_width=width,
                         leaky_slope=slope, seed=seed)
    field = MaterialField(config, box[:3], box[3:], init=False)

    offset = _HEADER.size + _FLOATS.size
    arrays = [field.tables]
    for w, b in zip(field.weights, field.biases):
        arrays.extend([w, b])
    expected = offset + sum(a.size for a in arrays) * 4
    if len(data) != expected:
        raise InputError(f"checkpoint size mismatch ({len(data)} bytes, expected {expected})", str(path))
    for a in arrays:
        a[...] = np.frombuffer(data, dtype='<f4', count=a.size, offset=offset).reshape(a.shape)
        offset += a.size * 4
    return field


#texture bake-out

@dataclass
class BakedMaps:
    base_color: np.ndarray     #(R, R, 3) linear
    roughness: np.ndarray      #(R, R)
    metallic: np.ndarray       #(R, R)
    mask: np.ndarray           #(R, R) bool, texels covered by a triangle
    overlaps: int = 0

    def as_texture_set(self):
        from pbr_recon.materials import TextureSet
        return TextureSet(self.base_color, self.roughness, self.metallic, self.mask)


def rasterize_uv(mesh, resolution: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """texel -> (triangle, barycentric weights) for every covered texel center

    returns (texel flat index, triangle id, (K,3) weights, overlap count); when
    charts overlap the last triangle written wins.
    """
    R = resolution
    uv = mesh.uvs[mesh.faces]                              #(F, 3, 2)
    px = uv[:, :, 0] * R
    py = (1.0 - uv[:, :, 1]) * R
    eps = 1e-9

    owner = np.full(R * R, -1, dtype=np.int64)
    weights = np.zeros((R * R, 3))
    interior_hits = np.zeros(R * R, dtype=np.int64)

    for tri in range(mesh.n_faces):
        x, y = px[tri], py[tri]
        x0 = max(int(np.floor(x.min() - 0.5)), 0)
        x1 = min(int(np.ceil(x.max() - 0.5)), R - 1)
        y0 = max(int(np.floor(y.min() - 0.5)), 0)
        y1 = min(int(np.ceil(y.max() - 0.5)), R - 1)
        if x1 < x0 or y1 < y0:
            continue
        area = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
        if abs(area) < 1e-18:
            continue
        gy, gx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
        cx = gx.ravel() + 0.5
        cy = gy.ravel() + 0.5
        #edge functions -> barycentrics
        w0 = ((x[1] - cx) * (y[2] - cy) - (x[2] - cx) * (y[1] - cy)) / area
        w1 = ((x[2] - cx) * (y[0] - cy) - (x[0] - cx) * (y[2] - cy)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= -eps) & (w1 >= -eps) & (w2 >= -eps)
        if not np.any(inside):
            continue
        texel = (gy.ravel() * R + gx.ravel())[inside]
        owner[texel] = tri
        weights[texel] = np.stack([w0, w1, w2], axis=1)[inside]
        strict = (w0 > eps) & (w1 > eps) & (w2 > eps)
        interior_hits[(gy.ravel() * R + gx.ravel())[strict]] += 1

    covered = np.nonzero(owner >= 0)[0]
    overlaps = int((interior_hits > 1).sum())
    return covered, owner[covered], weights[covered], overlaps


def dilate(values: np.ndarray, mask: np.ndarray, iterations: Optional[int] = None) -> np.ndarray:
    """fill uncovered texels with the mean of filled 8-neighbours, ring by ring"""
    values = values.copy()
    filled = mask.copy()
    squeeze = values.ndim == 2
    if squeeze:
        values = values[..., None]
    if not np.any(filled):
        return values[..., 0] if squeeze else values
    limit = iterations if iterations is not None else sum(values.shape[:2])
    height, width = filled.shape
    for _ in range(limit):
        if np.all(filled):
            break
        pv = np.pad(values * filled[..., None], ((1, 1), (1, 1), (0, 0)))
        pm = np.pad(filled.astype(np.float64), 1)
        acc = np.zeros_like(values)
        cnt = np.zeros(filled.shape)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                acc += pv[1 + dy:1 + dy + height, 1 + dx:1 + dx + width]
                cnt += pm[1 + dy:1 + dy + height, 1 + dx:1 + dx + width]
        grow = ~filled & (cnt > 0)
        if not np.any(grow):
            break
        values[grow] = acc[grow] / cnt[grow][:, None]
        filled = filled | grow
    return values[..., 0] if squeeze else values


def bake_textures(field, mesh, resolution: int, dilation_iterations: Optional[int] = None) -> BakedMaps:
    """sample a material source into UV-space maps"""
    if resolution < 16:
        raise ValueError(f"bake resolution must be >= 16, got {resolution}")
    if mesh.uvs.shape[0] == 0:
        raise MeshError("mesh has no texture coordinates; cannot bake")

    R = resolution
    texel, tri, bary, overlaps = rasterize_uv(mesh, R)
    if overlaps:
        console.warn(f"bake: {overlaps} texels covered by overlapping UV charts (last writer wins)",
                     key='uv_overlap_texels', count=overlaps)

    faces = mesh.faces[tri]
    positions = np.einsum('kc,kcd->kd', bary, mesh.positions[faces])
    uvs = np.einsum('kc,kcd->kd', bary, mesh.uvs[faces])
    sample = field.evaluate(positions, uvs)

    base = np.zeros((R * R, 3))
    rough = np.zeros(R * R)
    metal = np.zeros(R * R)
    base[texel] = sample.base_color
    rough[texel] = sample.roughness
    metal[texel] = sample.metallic
    mask = np.zeros(R * R, dtype=bool)
    mask[texel] = True

    mask = mask.reshape(R, R)
    return BakedMaps(
        base_color=dilate(base.reshape(R, R, 3), mask, dilation_iterations),
        roughness=dilate(rough.reshape(R, R), mask, dilation_iterations),
        metallic=dilate(metal.reshape(R, R), mask, dilation_iterations),
        mask=mask,
        overlaps=overlaps,
    )


def save_textures(maps: BakedMaps, out_dir: Path, sixteen_bit: bool = False) -> Dict[str, Path]:
    """8-bit PNGs (sRGB base color, linear roughness/metallic) plus optional 16-bit linear maps"""
    out_dir = Path(out_dir)
    written = {
        'basecolor': out_dir / 'basecolor.png',
        'roughness': out_dir / 'roughness.png',
        'metallic': out_dir / 'metallic.png',
        'mask': out_dir / 'mask.png',
    }
    write_png(written['basecolor'], linear_to_srgb(maps.base_color))
    write_png(written['roughness'], maps.roughness)
    write_png(written['metallic'], maps.metallic)
    write_mask(written['mask'], maps.mask)
    if sixteen_bit:
        for name, image in (('basecolor', maps.base_color), ('roughness', maps.roughness),
                            ('metallic', maps.metallic)):
            written[f'{name}_16'] = out_dir / f'{name}_linear16.png'
            write_png(written[f'{name}_16'], image, bits=16)
    return written
