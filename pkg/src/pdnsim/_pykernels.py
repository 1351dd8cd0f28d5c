"""Numpy fallback for the byte kernels (splitmix64 in counter mode)."""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def keystream(seed: int, n: int) -> bytes:
    if n < 0:
        raise ValueError("negative length")
    words = (n + 7) // 8
    z = np.uint64(seed) + np.arange(1, words + 1, dtype=np.uint64) * _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    z ^= z >> np.uint64(31)
    return z.astype("<u8", copy=False).tobytes()[:n]


def xor_keystream(data, seed: int) -> bytes:
    buf = np.frombuffer(data, dtype=np.uint8)
    mask = np.frombuffer(keystream(seed, buf.size), dtype=np.uint8)
    return (buf ^ mask).tobytes()
