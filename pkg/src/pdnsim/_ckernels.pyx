# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled byte kernels. Must stay bit-identical to ``_pykernels``."""

from libc.stdint cimport uint64_t, uint8_t
from libc.string cimport memcpy
from cpython.bytes cimport PyBytes_FromStringAndSize, PyBytes_AS_STRING

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef void _fill(uint64_t seed, uint8_t* out, Py_ssize_t n) nogil:
    cdef Py_ssize_t i, words = n // 8, rem = n % 8
    cdef uint64_t w
    cdef uint8_t tail[8]
    for i in range(words):
        w = _mix(seed + <uint64_t>(i + 1) * GAMMA)
        # little-endian layout regardless of host order
        out[8 * i] = <uint8_t>w
        out[8 * i + 1] = <uint8_t>(w >> 8)
        out[8 * i + 2] = <uint8_t>(w >> 16)
        out[8 * i + 3] = <uint8_t>(w >> 24)
        out[8 * i + 4] = <uint8_t>(w >> 32)
        out[8 * i + 5] = <uint8_t>(w >> 40)
        out[8 * i + 6] = <uint8_t>(w >> 48)
        out[8 * i + 7] = <uint8_t>(w >> 56)
    if rem:
        w = _mix(seed + <uint64_t>(words + 1) * GAMMA)
        for i in range(rem):
            tail[i] = <uint8_t>(w >> (8 * i))
        memcpy(out + 8 * words, tail, rem)


def keystream(uint64_t seed, Py_ssize_t n):
    if n < 0:
        raise ValueError("negative length")
    out = PyBytes_FromStringAndSize(NULL, n)
    cdef uint8_t* buf = <uint8_t*>PyBytes_AS_STRING(out)
    with nogil:
        _fill(seed, buf, n)
    return out


def xor_keystream(const uint8_t[::1] data, uint64_t seed):
    cdef Py_ssize_t n = data.shape[0], i
    out = PyBytes_FromStringAndSize(NULL, n)
    cdef uint8_t* buf = <uint8_t*>PyBytes_AS_STRING(out)
    with nogil:
        _fill(seed, buf, n)
        for i in range(n):
            buf[i] ^= data[i]
    return out
