#!/usr/bin/env python3
"""Radiance RGBE (.hdr) read/write through OpenCV

OpenCV decodes a texel (m_r, m_g, m_b, e) with e > 0 as (m/256) * 2^(e-128)
and e == 0 as black. The magic is checked here first so a wrong file type
names its leading bytes instead of failing inside the decoder.
"""
from pathlib import Path

import cv2
import numpy as np

from pbr_recon.errors import InputError, ProbeFormatError

MAGICS = (b'#?RADIANCE', b'#?RGBE')
MAGIC_LENGTH = 10


def check_magic(path: Path) -> bytes:
    """leading bytes of the file; raises unless it is a Radiance file"""
    path = Path(path)
    if not path.exists():
        raise InputError("probe file not found", str(path))
    with open(path, 'rb') as f:
        head = f.read(MAGIC_LENGTH)
    if not any(head.startswith(m) for m in MAGICS):
        raise ProbeFormatError(head, str(path))
    return head


def read_hdr(path: Path) -> np.ndarray:
    """read a Radiance .hdr file as (H, W, 3) float64 linear RGB"""
    check_magic(path)
    image = cv2.imread(str(path), cv2.IMREAD_ANYDEPTH | cv2.IMREAD_COLOR)
    if image is None:
        raise InputError("could not decode RGBE pixel data", str(path))
    return image[..., ::-1].astype(np.float64)


def write_hdr(path: Path, rgb: np.ndarray):
    """write (H, W, 3) linear RGB as a run-length RGBE file"""
    rgb = np.clip(np.nan_to_num(np.asarray(rgb, dtype=np.float64), nan=0.0, posinf=0.0), 0.0, None)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bgr = np.ascontiguousarray(rgb[..., ::-1], dtype=np.float32)
    if not cv2.imwrite(str(path), bgr):
        raise InputError("could not write RGBE file", str(path))
