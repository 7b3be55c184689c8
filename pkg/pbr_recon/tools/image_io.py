#!/usr/bin/env python3
"""PNG and float-binary image IO

PNGs go through OpenCV (8-bit and 16-bit, gray or RGB; arrays here are RGB).
Float dumps are little-endian: a header of three uint32 {width, height,
channels} followed by float32 texels in row-major order.
"""
import struct
from pathlib import Path

import cv2
import numpy as np

from pbr_recon.errors import InputError

_FLOAT_HEADER = struct.Struct('<III')


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    """sRGB transfer of values in [0,1]"""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))


def _to_bgr(image: np.ndarray) -> np.ndarray:
    if image.ndim == 3 and image.shape[2] == 3:
        return np.ascontiguousarray(image[..., ::-1])
    if image.ndim == 3 and image.shape[2] == 1:
        return image[..., 0]
    return image


def write_png(path: Path, image: np.ndarray, bits: int = 8):
    """write a [0,1] image as an 8 or 16 bit PNG (values are clipped)"""
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    peak = 255.0 if bits == 8 else 65535.0
    dtype = np.uint8 if bits == 8 else np.uint16
    data = np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * peak).astype(dtype)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), _to_bgr(data)):
        raise InputError("failed to write PNG", str(path))


def read_png(path: Path, channels: int = None) -> np.ndarray:
    """read a PNG as float64 in [0,1]; channels=1 or 3 forces the layout"""
    path = Path(path)
    if not path.exists():
        raise InputError("image not found", str(path))
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise InputError("unreadable image", str(path))

    peak = 65535.0 if data.dtype == np.uint16 else 255.0
    image = data.astype(np.float64) / peak
    if image.ndim == 3:
        if image.shape[2] == 4:
            image = image[..., :3]
        image = image[..., ::-1]

    if channels == 1 and image.ndim == 3:
        image = image.mean(axis=-1)
    elif channels == 3 and image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=-1)
    return np.ascontiguousarray(image)


def write_mask(path: Path, mask: np.ndarray):
    """binary mask as 8-bit gray PNG (0 / 255)"""
    write_png(path, np.asarray(mask, dtype=np.float64), bits=8)


def read_mask(path: Path) -> np.ndarray:
    return read_png(path, channels=1) >= 0.5


def save_float_image(path: Path, image: np.ndarray):
    """32-bit float binary dump with {w, h, channels} header"""
    image = np.asarray(image, dtype='<f4')
    if image.ndim == 2:
        image = image[..., None]
    height, width, channels = image.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(_FLOAT_HEADER.pack(width, height, channels))
        f.write(np.ascontiguousarray(image).tobytes())


def load_float_image(path: Path) -> np.ndarray:
    """inverse of save_float_image; single-channel dumps come back 2-D"""
    path = Path(path)
    if not path.exists():
        raise InputError("float image not found", str(path))
    data = path.read_bytes()
    if len(data) < _FLOAT_HEADER.size:
        raise InputError("truncated float image header", str(path))
    width, height, channels = _FLOAT_HEADER.unpack_from(data)
    expected = width * height * channels * 4
    if len(data) - _FLOAT_HEADER.size != expected:
        raise InputError(f"float image size mismatch (expected {expected} bytes of texels)", str(path))
    image = np.frombuffer(data, dtype='<f4', offset=_FLOAT_HEADER.size).reshape(height, width, channels)
    image = image.astype(np.float64)
    return image[..., 0] if channels == 1 else image
