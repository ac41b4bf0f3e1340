"""Numeric substrate: activations, checked linear algebra, seeded RNG.

Matrices and vectors are plain float64 numpy arrays.  The generator is
xoshiro256** seeded through splitmix64, so a seed reproduces the same stream
on every platform and on both the numba and numpy backends.
"""

from __future__ import annotations

import zlib

import numpy as np

from ._jit import JIT_ENABLED, njit
from .errors import ShapeError

__all__ = [
    "Rng",
    "activate",
    "glorot_uniform",
    "hadamard",
    "matvec",
    "relu",
    "sigmoid",
    "tanh",
]

# exp overflows past ~709; sigmoid is already 0/1 to double precision long before
_SIGMOID_CLAMP = 700.0


@njit
def sigmoid(a):
    a = np.minimum(np.maximum(a, -_SIGMOID_CLAMP), _SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-a))


@njit
def tanh(a):
    return np.tanh(a)


@njit
def relu(a):
    return np.maximum(a, 0.0)


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def _as_float(v, name):
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def matvec(W, x):
    """Return ``W @ x`` after checking that ``W.cols == len(x)``."""
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if W.ndim != 2 or x.ndim != 1 or W.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: matrix {W.shape} incompatible with vector {x.shape}")
    return W @ x


def activate(kind: str, v):
    """Elementwise ``sigmoid``, ``tanh`` or ``relu`` of a finite vector."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return fn(_as_float(v, "activate input"))


def hadamard(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    return a * b


def glorot_uniform(rows: int, cols: int, rng: Rng):
    """Matrix with i.i.d. entries uniform on [-s, s], s = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"glorot_uniform: need rows, cols >= 1, got {rows}x{cols}")
    s = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, (rows, cols))


# ---------------------------------------------------------------------------
# xoshiro256** (Blackman & Vigna), seeded with splitmix64

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> tuple[int, int]:
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def _fill_py(state: list[int], n: int) -> np.ndarray:
    s0, s1, s2, s3 = state
    out = np.empty(n, dtype=np.uint64)
    for k in range(n):
        out[k] = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
    state[:] = [s0, s1, s2, s3]
    return out


if JIT_ENABLED:

    @njit
    def _fill_jit(s, n):
        out = np.empty(n, dtype=np.uint64)
        s0, s1, s2, s3 = s[0], s[1], s[2], s[3]
        for k in range(n):
            r = s1 * np.uint64(5)
            r = (r << np.uint64(7)) | (r >> np.uint64(57))
            out[k] = r * np.uint64(9)
            t = s1 << np.uint64(17)
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = (s3 << np.uint64(45)) | (s3 >> np.uint64(19))
        s[0], s[1], s[2], s[3] = s0, s1, s2, s3
        return out


class Rng:
    """Deterministic xoshiro256** generator with explicit, copyable state."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK
        x = self.seed
        words = []
        for _ in range(4):
            x, z = _splitmix64(x)
            words.append(z)
        self._state = words

    @classmethod
    def for_stream(cls, seed: int, label) -> Rng:
        """Independent generator for a named sub-stream of one run seed."""
        tag = zlib.crc32(str(label).encode("utf-8"))
        _, mixed = _splitmix64((int(seed) & _MASK) ^ (tag << 32 | tag))
        return cls(mixed)

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(self._state)

    @state.setter
    def state(self, words) -> None:
        words = [int(w) & _MASK for w in words]
        if len(words) != 4 or not any(words):
            raise ValueError("xoshiro256** state must be four words, not all zero")
        self._state = words

    def u64(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs."""
        if n <= 0:
            return np.empty(0, dtype=np.uint64)
        if JIT_ENABLED:
            s = np.array(self._state, dtype=np.uint64)
            out = _fill_jit(s, n)
            self._state = [int(w) for w in s]
            return out
        return _fill_py(self._state, n)

    def next_u64(self) -> int:
        return int(self.u64(1)[0])

    def random(self, size=None):
        """Uniform doubles on [0, 1) with 53 random bits each."""
        n = 1 if size is None else int(np.prod(size))
        vals = (self.u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        if size is None:
            return float(vals[0])
        return vals.reshape(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        u = self.random(size)
        return low + (high - low) * u

    def integers(self, low: int, high: int | None = None) -> int:
        """Unbiased integer on [low, high) by rejection sampling."""
        if high is None:
            low, high = 0, low
        span = high - low
        if span <= 0:
            raise ValueError(f"empty range [{low}, {high})")
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            u = self.next_u64()
            if u < limit:
                return low + u % span

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``arange(n)``."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integers(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
