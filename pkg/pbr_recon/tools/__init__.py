#pipeline file-format tools
from .hdr_io import read_hdr, write_hdr
from .image_io import read_png, write_png, read_mask, write_mask, save_float_image, load_float_image
from .config_loader import load_config, resolve_runtime, write_resolved_config

__all__ = [
    'read_hdr',
    'write_hdr',
    'read_png',
    'write_png',
    'read_mask',
    'write_mask',
    'save_float_image',
    'load_float_image',
    'load_config',
    'resolve_runtime',
    'write_resolved_config',
]
