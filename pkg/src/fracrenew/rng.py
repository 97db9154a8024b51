"""Counter-based random numbers (Philox4x32-10) with splittable streams.

Every uniform is a pure function of ``(master_seed, stream_index, purpose,
path, draw)``, so results do not depend on batching, ordering or the number
of worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_MASK64 = (1 << 64) - 1


def philox4x32(counter: np.ndarray, key: tuple[int, int], rounds: int = 10) -> np.ndarray:
    """Apply the Philox4x32 bijection to a ``(4, n)`` array of 32-bit counters."""
    c0, c1, c2, c3 = (np.asarray(w, dtype=np.uint64) & _MASK32 for w in counter)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for i in range(rounds):
        if i:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
    return np.stack([c0, c1, c2, c3]).astype(np.uint32)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class Purpose(IntEnum):
    """Counter lane tags keeping independent draw families apart."""

    WAIT = 0
    WAIT_AUX = 1
    JUMP = 2
    THIN = 3


_TWO_M52 = 2.0**-52


def _to_unit(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    # 52 random bits centred in their cell; k + 0.5 is exact, so 0 < u < 1 strictly
    k = (hi.astype(np.uint64) >> np.uint64(6)) * np.uint64(1 << 26) + (lo.astype(np.uint64) >> np.uint64(6))
    return (k.astype(np.float64) + 0.5) * _TWO_M52


@dataclass(frozen=True)
class SeedStream:
    """A reproducible substream; distinct ``stream_index`` values get distinct Philox keys."""

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if int(self.stream_index) < 0:
            raise ValueError("stream_index must be >= 0")

    @property
    def key(self) -> tuple[int, int]:
        h = _splitmix64(int(self.master_seed) ^ _splitmix64(int(self.stream_index) + 0x632BE59BD9B4E019))
        return h & 0xFFFFFFFF, h >> 32

    def child(self, index: int) -> SeedStream:
        """Derive an independent stream, e.g. one per experiment level."""
        return SeedStream(_splitmix64(int(self.master_seed) ^ _splitmix64(int(self.stream_index))), int(index))

    def uniform_pair(self, purpose: int, path, draw) -> tuple[np.ndarray, np.ndarray]:
        """Two independent uniforms in (0, 1) for each ``(path, draw)`` pair."""
        path = np.asarray(path, dtype=np.uint64)
        draw = np.asarray(draw, dtype=np.uint64)
        path, draw = np.broadcast_arrays(path, draw)
        shape = path.shape
        path = path.ravel()
        draw = draw.ravel()
        ctr = np.empty((4, path.size), dtype=np.uint64)
        ctr[0] = draw & _MASK32
        ctr[1] = (draw >> _SHIFT32) | (np.uint64(int(purpose)) << np.uint64(24))
        ctr[2] = path & _MASK32
        ctr[3] = path >> _SHIFT32
        out = philox4x32(ctr, self.key)
        return _to_unit(out[0], out[1]).reshape(shape), _to_unit(out[2], out[3]).reshape(shape)

    def uniform(self, purpose: int, path, draw) -> np.ndarray:
        return self.uniform_pair(purpose, path, draw)[0]
