"""FrameSet directory IO

Layout:
    cameras.txt
    frames/00000.png                 display-space reference
    masks/00000.png                  object mask
    guides/basecolor/00000.png       optional, all three channels or none
    guides/roughness/00000.png
    guides/metallic/00000.png
"""
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from pbr_recon.errors import FrameSetError, InputError
from pbr_recon.recon import GUIDE_CHANNELS, FrameSet
from pbr_recon.scene import load_cameras, save_cameras
from pbr_recon.tools.image_io import read_mask, read_png, write_mask, write_png

CAMERAS_FILE = 'cameras.txt'
FRAME_PATTERN = '{:05d}.png'


def frame_name(index: int) -> str:
    return FRAME_PATTERN.format(index)


def _indices(directory: Path) -> List[int]:
    indices = []
    for p in directory.glob('*.png'):
        if p.stem.isdigit():
            indices.append(int(p.stem))
    return sorted(indices)


def validate_frameset(directory: Path) -> Dict:
    """check a FrameSet directory without decoding images"""
    directory = Path(directory)
    if not directory.is_dir():
        return {'valid': False, 'error': f"frame set directory not found: {directory}"}
    if not (directory / CAMERAS_FILE).exists():
        return {'valid': False, 'error': f"missing {CAMERAS_FILE} in {directory}"}

    frames = _indices(directory / 'frames')
    masks = _indices(directory / 'masks')
    if not frames:
        return {'valid': False, 'error': f"no frames under {directory / 'frames'}"}
    expected = list(range(len(frames)))
    if frames != expected:
        return {'valid': False, 'error': f"frame numbering is not contiguous from 00000 ({len(frames)} files)"}
    if masks != frames:
        missing = sorted(set(frames) - set(masks))
        return {'valid': False, 'error': f"masks missing for frames {missing[:5]}"}

    guide_dirs = [directory / 'guides' / c for c in GUIDE_CHANNELS]
    present = [d.is_dir() for d in guide_dirs]
    if any(present) and not all(present):
        absent = [c for c, ok in zip(GUIDE_CHANNELS, present) if not ok]
        return {'valid': False, 'error': f"guide channels {absent} missing"}
    has_guides = all(present)
    if has_guides:
        for channel, d in zip(GUIDE_CHANNELS, guide_dirs):
            if _indices(d) != frames:
                return {'valid': False, 'error': f"guides/{channel} does not cover every frame"}

    return {'valid': True, 'frames': len(frames), 'guides': has_guides}


def load_frameset(directory: Path, max_frames: Optional[int] = None) -> FrameSet:
    """read a FrameSet directory; raises FrameSetError if it is inconsistent"""
    directory = Path(directory)
    check = validate_frameset(directory)
    if not check['valid']:
        raise FrameSetError(check['error'])

    try:
        cameras = load_cameras(directory / CAMERAS_FILE)
    except InputError as e:
        raise FrameSetError(f"cameras.txt: {e.message}")
    except (ValueError, OSError) as e:
        raise FrameSetError(f"cameras.txt: {e}")
    n = check['frames']
    if len(cameras) != n:
        raise FrameSetError(f"{len(cameras)} cameras for {n} frames")
    if max_frames is not None:
        n = min(n, max_frames)
        cameras = cameras[:n]

    references, masks = [], []
    guides = [] if check['guides'] else None
    for i in range(n):
        name = frame_name(i)
        try:
            references.append(read_png(directory / 'frames' / name, channels=3))
            masks.append(read_mask(directory / 'masks' / name))
            if guides is not None:
                guides.append({
                    'basecolor': read_png(directory / 'guides' / 'basecolor' / name, channels=3),
                    'roughness': read_png(directory / 'guides' / 'roughness' / name, channels=1),
                    'metallic': read_png(directory / 'guides' / 'metallic' / name, channels=1),
                })
        except InputError as e:
            raise FrameSetError(f"frame {i}: {e.message}")

    frameset = FrameSet(cameras, references, masks, guides)
    result = frameset.validate()
    if not result['valid']:
        raise FrameSetError(result['error'])
    return frameset


def save_frameset(frameset: FrameSet, directory: Path, sixteen_bit: bool = False) -> Path:
    directory = Path(directory)
    bits = 16 if sixteen_bit else 8
    directory.mkdir(parents=True, exist_ok=True)
    save_cameras(directory / CAMERAS_FILE, frameset.cameras)
    for i, (ref, mask) in enumerate(zip(frameset.references, frameset.masks)):
        name = frame_name(i)
        write_png(directory / 'frames' / name, ref, bits=bits)
        write_mask(directory / 'masks' / name, mask)
        if frameset.guides is not None:
            for channel in GUIDE_CHANNELS:
                write_png(directory / 'guides' / channel / name, np.asarray(frameset.guides[i][channel]), bits=bits)
    return directory
