"""Multi-view material reconstruction

Losses with their adjoints, the Adam update, and the training loop that fits a
MaterialField to a FrameSet by differentiable rendering.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from pbr_recon import console
from pbr_recon.envlight import EnvironmentProbe
from pbr_recon.errors import ConfigError, DivergenceError, FrameSetError
from pbr_recon.matfield import MaterialField, save_checkpoint
from pbr_recon.rng import splitmix64
from pbr_recon.scene import AccelerationStructure, Camera
from pbr_recon.schemas import FieldConfig, LossRecord, OptimSettings
from pbr_recon.tools.image_io import linear_to_srgb, srgb_to_linear
from pbr_recon.tracer import (
    RenderedImage, render, render_backward, render_intrinsics, render_intrinsics_backward,
    tonemap, tonemap_grad,
)

GUIDE_CHANNELS = ('basecolor', 'roughness', 'metallic')
EPS_MEAN = 1e-4


@dataclass
class FrameSet:
    """aligned per-frame bundle: camera, display-space reference, mask, optional guides"""
    cameras: List[Camera]
    references: List[np.ndarray]
    masks: List[np.ndarray]
    guides: Optional[List[Dict[str, np.ndarray]]] = None

    def __len__(self):
        return len(self.cameras)

    @property
    def resolution(self) -> Tuple[int, int]:
        """(width, height)"""
        return self.cameras[0].width, self.cameras[0].height

    @property
    def has_guides(self) -> bool:
        return bool(self.guides)

    def validate(self) -> Dict:
        errors = []
        n = len(self.cameras)
        if n == 0:
            errors.append("frame set is empty")
        if len(self.references) != n or len(self.masks) != n:
            errors.append(f"{n} cameras but {len(self.references)} frames and {len(self.masks)} masks")
        if self.guides is not None and len(self.guides) != n:
            errors.append(f"guides present for {len(self.guides)} of {n} frames")
        if errors:
            return {'valid': False, 'error': '; '.join(errors)}

        width, height = self.resolution
        for i, (cam, ref, mask) in enumerate(zip(self.cameras, self.references, self.masks)):
            if (cam.width, cam.height) != (width, height):
                errors.append(f"frame {i}: camera is {cam.width}x{cam.height}, expected {width}x{height}")
            if ref.shape != (height, width, 3):
                errors.append(f"frame {i}: reference shape {ref.shape}")
            if mask.shape != (height, width):
                errors.append(f"frame {i}: mask shape {mask.shape}")
            if self.guides is not None:
                missing = [c for c in GUIDE_CHANNELS if c not in self.guides[i]]
                if missing:
                    errors.append(f"frame {i}: missing guide channels {missing}")
        if errors:
            return {'valid': False, 'error': '; '.join(errors[:5]), 'errors': errors}
        return {'valid': True, 'frames': n, 'width': width, 'height': height, 'guides': self.has_guides}


#losses

def image_loss(rendered: Union[RenderedImage, np.ndarray], reference: np.ndarray,
               mask: np.ndarray) -> Tuple[float, np.ndarray]:
    """masked L1 between tonemapped render and display-space reference

    returns (loss, adjoint w.r.t. linear radiance).
    """
    radiance = rendered.radiance if isinstance(rendered, RenderedImage) else np.asarray(rendered)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        console.warn("image loss: empty mask, frame contributes nothing", key='empty_mask')
        return 0.0, np.zeros_like(radiance)

    diff = tonemap(radiance) - reference
    m = mask[..., None]
    loss = float(np.abs(diff[mask]).sum() / (3 * count))
    adjoint = np.where(m, np.sign(diff) * tonemap_grad(radiance), 0.0) / (3 * count)
    return loss, adjoint


def scale_invariant_loss(pred: np.ndarray, guide: np.ndarray, mask: np.ndarray) -> Tuple[float, np.ndarray]:
    """L1 between mean-normalized prediction and guide over the mask

    returns (loss, gradient w.r.t. pred); the gradient includes the dependence
    of the prediction's mean on every pixel.
    """
    pred = np.asarray(pred, dtype=np.float64)
    guide = np.asarray(guide, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    grad = np.zeros_like(pred)
    p = pred[mask]
    g = guide[mask]
    if p.size == 0:
        console.warn("regularizer: empty mask, term skipped", key='empty_mask')
        return 0.0, grad

    mean_p = p.mean()
    mean_g = g.mean()
    if not (mean_p > EPS_MEAN and mean_g > EPS_MEAN) or not np.isfinite(mean_g):
        console.warn(f"regularizer: degenerate mean (pred {mean_p:.3g}, guide {mean_g:.3g}), term skipped",
                     key='degenerate_guide_mean')
        return 0.0, grad

    k = p.size
    diff = p / mean_p - g / mean_g
    s = np.sign(diff)
    loss = float(np.abs(diff).sum() / k)
    grad_p = (s / mean_p - (s * p).sum() / (mean_p * mean_p * k)) / k
    grad[mask] = grad_p
    return loss, grad


def total_loss(image: float, reg_base: float = 0.0, reg_rough: float = 0.0, reg_metal: float = 0.0,
               reg_weight: float = 0.2) -> float:
    return image + reg_weight * (reg_base + reg_rough + reg_metal)


@dataclass
class FrameLoss:
    image: float
    reg_base: float = 0.0
    reg_rough: float = 0.0
    reg_metal: float = 0.0
    adjoint: np.ndarray = None
    grad_base: Optional[np.ndarray] = None
    grad_rough: Optional[np.ndarray] = None
    grad_metal: Optional[np.ndarray] = None
    intrinsics: object = None


def guide_losses(intrinsics, guides: Dict[str, np.ndarray], mask: np.ndarray,
                 color_space: str = 'srgb'):
    """the three regularizer terms and their gradients w.r.t. the linear intrinsics"""
    reg_mask = np.asarray(mask, dtype=bool) & intrinsics.mask
    base = intrinsics.base_color
    if color_space == 'srgb':
        pred = linear_to_srgb(base)
        target = guides['basecolor']
        dpred = tonemap_grad(base)
    else:
        pred = base
        target = srgb_to_linear(guides['basecolor'])
        dpred = np.ones_like(base)
    l_base, g_base = scale_invariant_loss(pred, target, np.broadcast_to(reg_mask[..., None], pred.shape))
    l_rough, g_rough = scale_invariant_loss(intrinsics.roughness, guides['roughness'], reg_mask)
    l_metal, g_metal = scale_invariant_loss(intrinsics.metallic, guides['metallic'], reg_mask)
    return (l_base, g_base * dpred), (l_rough, g_rough), (l_metal, g_metal)


#Adam

@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              lr: Union[float, Dict[str, float]], beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> Dict[str, np.ndarray]:
    """bias-corrected Adam, in place; lr may be a per-parameter dict"""
    state.step += 1
    t = state.step
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.m.setdefault(name, np.zeros(p.shape, dtype=np.float64))
        v = state.v.setdefault(name, np.zeros(p.shape, dtype=np.float64))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        rate = lr[name] if isinstance(lr, dict) else lr
        step = rate * (m / correction1) / (np.sqrt(v / correction2) + eps)
        p[...] = (p.astype(np.float64) - step).astype(p.dtype)
    return params


#training loop

def frame_seed(base: int, iteration: int, frame: int) -> int:
    """decorrelated render seed per (iteration, frame)"""
    key = np.uint64(base) ^ (np.uint64(iteration) << np.uint64(20)) ^ np.uint64(frame)
    return int(splitmix64(key)[0] >> np.uint64(1))


def evaluate_frame(material_field: MaterialField, frames: FrameSet, index: int, accel: AccelerationStructure,
                   probe: EnvironmentProbe, settings: OptimSettings, seed: int,
                   workers: Optional[int] = None) -> FrameLoss:
    """forward render + losses for one frame (no gradients accumulated)"""
    cam = frames.cameras[index]
    rendered = render(accel, probe, material_field, cam, settings.render, seed=seed, workers=workers)
    l_img, adjoint = image_loss(rendered, frames.references[index], frames.masks[index])
    result = FrameLoss(l_img, adjoint=adjoint)
    if frames.has_guides and settings.reg_weight > 0:
        intr = render_intrinsics(accel, material_field, cam)
        (lb, gb), (lr, gr), (lm, gm) = guide_losses(intr, frames.guides[index], frames.masks[index],
                                                    settings.guide_color_space)
        result.reg_base, result.reg_rough, result.reg_metal = lb, lr, lm
        result.grad_base, result.grad_rough, result.grad_metal = gb, gr, gm
        result.intrinsics = intr
    return result


def reconstruct(frames: FrameSet, accel: AccelerationStructure, probe: EnvironmentProbe,
                settings: OptimSettings, field_config: Optional[FieldConfig] = None,
                material_field: Optional[MaterialField] = None, output_dir: Optional[Path] = None,
                workers: Optional[int] = None,
                on_iteration: Optional[Callable[[LossRecord], None]] = None) -> Tuple[MaterialField, List[LossRecord]]:
    """fit a material field to the frame set; returns (field, loss history)"""
    check = frames.validate()
    if not check['valid']:
        raise FrameSetError(f"invalid frame set: {check['error']}")
    n = len(frames)
    if settings.batch_size > n:
        raise ConfigError(f"optim.batch_size ({settings.batch_size}) exceeds the frame count ({n})")

    mesh = accel.mesh
    if material_field is None:
        material_field = MaterialField(field_config or FieldConfig(), mesh.bbox_min, mesh.bbox_max)
    lam = settings.reg_weight
    use_guides = frames.has_guides and lam > 0
    if lam > 0 and not frames.has_guides:
        console.warn_once('guides_absent', "no guide frames: optimizing the image loss only")

    groups = material_field.param_groups()
    lr = {name: settings.lr_tables for name in groups['tables']}
    lr.update({name: settings.lr_mlp for name in groups['mlp']})
    state = AdamState()
    rng = np.random.default_rng(settings.seed)
    history: List[LossRecord] = []
    B = settings.batch_size

    for it in tqdm(range(settings.iterations), desc='reconstruct', unit='it', disable=console.is_quiet()):
        batch = rng.choice(n, size=B, replace=False)
        material_field.zero_grad()
        sums = np.zeros(4)
        for frame in batch:
            seed = frame_seed(settings.render.seed, it, int(frame))
            res = evaluate_frame(material_field, frames, int(frame), accel, probe, settings, seed, workers)
            sums += (res.image, res.reg_base, res.reg_rough, res.reg_metal)
            render_backward(accel, probe, material_field, frames.cameras[frame], settings.render,
                            res.adjoint / B, seed=seed, workers=workers)
            if use_guides and res.grad_base is not None:
                scale = lam / B
                render_intrinsics_backward(res.intrinsics, material_field, res.grad_base * scale,
                                           res.grad_rough * scale, res.grad_metal * scale)

        l_img, l_base, l_rough, l_metal = sums / B
        record = LossRecord(iteration=it, image=l_img, reg_base=l_base, reg_rough=l_rough,
                            reg_metal=l_metal, total=total_loss(l_img, l_base, l_rough, l_metal, lam))
        if not np.isfinite(record.total):
            raise DivergenceError(it, record.total)
        grads = material_field.gradients()
        if not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise DivergenceError(it, float('nan'))

        adam_step(material_field.parameters(), grads, state, lr, settings.beta1, settings.beta2, settings.eps)
        history.append(record)
        if on_iteration is not None:
            on_iteration(record)
        if output_dir is not None and settings.checkpoint_every and (it + 1) % settings.checkpoint_every == 0:
            save_checkpoint(material_field, Path(output_dir) / f"checkpoint_{it + 1:05d}.bin")

    return material_field, history


def smoothed(values: List[float], window: int = 50) -> np.ndarray:
    """trailing moving average"""
    values = np.asarray(values, dtype=np.float64)
    csum = np.cumsum(np.insert(values, 0, 0.0))
    idx = np.arange(1, values.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)
