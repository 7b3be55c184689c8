"""Counter-based random streams

Every random number is a hash of (seed, stream, pixel, sample, dimension), so a
pixel sees the same numbers no matter how the image is tiled or how many
workers render it.
"""
import numpy as np

FORWARD_STREAM = 0
BACKWARD_STREAM = 1
GUIDE_STREAM = 2

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SAMPLE_STRIDE = np.uint64(0xD1B54A32D192ED03)
_INV_2_53 = 1.0 / float(1 << 53)


def splitmix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)"""
    z = np.atleast_1d(np.asarray(z, dtype=np.uint64))
    with np.errstate(over='ignore'):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SampleStream:
    """per-path uniform numbers keyed by pixel and sample index"""

    def __init__(self, seed: int, stream: int, pixel: np.ndarray, sample: np.ndarray):
        pixel = np.asarray(pixel, dtype=np.uint64)
        sample = np.asarray(sample, dtype=np.uint64)
        with np.errstate(over='ignore'):
            base = splitmix64(np.uint64(seed) * np.uint64(4) + np.uint64(stream))
            self._key = splitmix64(splitmix64(base ^ pixel) ^ (sample * _SAMPLE_STRIDE))
        self._dim = 0

    def __len__(self):
        return self._key.shape[0]

    def next(self, k: int = 1) -> np.ndarray:
        """(N, k) uniforms in [0, 1); advances the dimension counter by k"""
        dims = np.arange(self._dim, self._dim + k, dtype=np.uint64)
        self._dim += k
        with np.errstate(over='ignore'):
            h = splitmix64((self._key[:, None] + dims[None, :] * _GOLDEN).ravel())
        return ((h >> np.uint64(11)).astype(np.float64) * _INV_2_53).reshape(-1, k)

    def skip(self, k: int):
        """consume k dimensions without generating them"""
        self._dim += k


def stratified_offsets(sample: np.ndarray, spp: int, jitter: np.ndarray) -> np.ndarray:
    """pixel-plane offsets in [0,1)^2, stratified on a grid when spp is square"""
    side = int(round(np.sqrt(spp)))
    if side * side != spp:
        return jitter
    sample = np.asarray(sample, dtype=np.int64)
    sx = (sample % side).astype(np.float64)
    sy = (sample // side).astype(np.float64)
    return np.stack([(sx + jitter[:, 0]) / side, (sy + jitter[:, 1]) / side], axis=-1)
