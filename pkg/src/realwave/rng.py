"""Counter-based random numbers and seed derivation.

Every random draw in the package comes from Philox4x32-10 (Salmon et al.,
"Parallel random numbers: as easy as 1, 2, 3", SC'11). The generator is a
keyed bijection on 128-bit counters, so draw ``j`` of trial ``i`` under a
given seed is a pure function of ``(seed, i, j)``. Results therefore never
depend on how trials are split across workers, and the integer arithmetic
is identical on every platform.

Layout of a counter block: ``(i mod 2**32, i // 2**32, j // 2, 0)``. One
block yields four 32-bit words, i.e. two 53-bit doubles; draw ``j`` takes
the pair ``j % 2``.

Sub-streams are keyed by :func:`derive_seed`, which hashes
``"{master}\\x1f{label}\\x1f{index}"`` (UTF-8) with BLAKE2b (8-byte digest)
and reads the digest as a little-endian unsigned integer.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numba as nb
import numpy as np

T = TypeVar("T")

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_ROUNDS = 10

SEED_MAX = 2**64 - 1
BLOCK_SIZE = 1 << 16


def derive_seed(master: int, label: str, index: int = 0) -> int:
    """Stable 64-bit sub-seed for stream ``label`` and position ``index``."""
    if not 0 <= int(master) <= SEED_MAX:
        raise ValueError(f"master seed must fit in 64 bits, got {master}")
    payload = f"{int(master)}\x1f{label}\x1f{int(index)}".encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def philox4x32(counters: np.ndarray, key: tuple[int, int]) -> np.ndarray:
    """Apply Philox4x32-10 to an ``(n, 4)`` array of 32-bit counter words."""
    ctr = np.asarray(counters, dtype=np.uint64) & _MASK32
    c0, c1, c2, c3 = (ctr[:, i].copy() for i in range(4))
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(_ROUNDS):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0 = hi1 ^ c1 ^ np.uint64(k0)
        c1 = lo1
        c2 = hi0 ^ c3 ^ np.uint64(k1)
        c3 = lo0
    return np.stack([c0, c1, c2, c3], axis=1).astype(np.uint32)


def _to_unit(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    hi = hi.astype(np.uint64) >> np.uint64(5)
    lo = lo.astype(np.uint64) >> np.uint64(6)
    return (hi * np.uint64(67108864) + lo).astype(np.float64) / 9007199254740992.0


class CounterRNG:
    """Uniform draws addressed by ``(trial, draw)`` under a fixed 64-bit seed."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed <= SEED_MAX:
            raise ValueError(f"seed must fit in 64 bits, got {seed}")
        self.seed = seed
        self.key = (seed & 0xFFFFFFFF, seed >> 32)

    def uniform(self, trials, n_draws: int = 1) -> np.ndarray:
        """Uniforms in [0, 1), shape ``(len(trials), n_draws)``."""
        trials = np.atleast_1d(np.asarray(trials, dtype=np.uint64))
        n_blocks = (n_draws + 1) // 2
        out = np.empty((trials.size, 2 * n_blocks))
        for b in range(n_blocks):
            ctr = np.zeros((trials.size, 4), dtype=np.uint64)
            ctr[:, 0] = trials & _MASK32
            ctr[:, 1] = trials >> _SHIFT32
            ctr[:, 2] = b
            words = philox4x32(ctr, self.key)
            out[:, 2 * b] = _to_unit(words[:, 0], words[:, 1])
            out[:, 2 * b + 1] = _to_unit(words[:, 2], words[:, 3])
        return out[:, :n_draws]

    def uniform_range(self, start: int, stop: int, n_draws: int = 1) -> np.ndarray:
        return self.uniform(np.arange(start, stop, dtype=np.uint64), n_draws)


def blocks(n: int, size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    """Fixed partition of ``range(n)``; independent of the worker count."""
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def parallel_map(fn: Callable[..., T], items: Sequence, threads: int = 1) -> list[T]:
    """``[fn(item) for item in items]``, optionally on a thread pool; order kept."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@nb.njit(cache=True)
def philox_pair(key0, key1, trial, block):
    """Scalar twin of ``CounterRNG.uniform``: draws ``2*block`` and ``2*block+1`` of ``trial``."""
    m = np.uint64(0xFFFFFFFF)
    c0 = np.uint64(trial) & m
    c1 = np.uint64(trial) >> np.uint64(32)
    c2 = np.uint64(block)
    c3 = np.uint64(0)
    k0 = np.uint64(key0)
    k1 = np.uint64(key1)
    for r in range(_ROUNDS):
        if r:
            k0 = (k0 + np.uint64(_W0)) & m
            k1 = (k1 + np.uint64(_W1)) & m
        p0 = np.uint64(0xD2511F53) * c0
        p1 = np.uint64(0xCD9E8D57) * c2
        n0 = (p1 >> np.uint64(32)) ^ c1 ^ k0
        n2 = (p0 >> np.uint64(32)) ^ c3 ^ k1
        c1 = p1 & m
        c3 = p0 & m
        c0 = n0
        c2 = n2
    a = (c0 >> np.uint64(5)) * np.uint64(67108864) + (c1 >> np.uint64(6))
    b = (c2 >> np.uint64(5)) * np.uint64(67108864) + (c3 >> np.uint64(6))
    return float(a) / 9007199254740992.0, float(b) / 9007199254740992.0
