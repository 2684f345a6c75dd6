"""
Classical key material: bit strings, the commitment hash, permutations,
XOR combination and Toeplitz privacy amplification.

Bit strings are tuples of ints (0/1), most significant bit first.
"""

from __future__ import annotations

import hashlib
import math
from typing import Callable, Optional, Sequence

import numpy as np

Bits = tuple

DEFAULT_HASH_BITS = 32


def bits_to_bytes(bits: Sequence[int]) -> bytes:
    """Pack bits MSB-first, prefixed by the bit length so ``0`` and ``00`` differ."""
    n = len(bits)
    value = int("".join(map(str, bits)), 2) if n else 0
    return n.to_bytes(4, "big") + value.to_bytes((n + 7) // 8, "big")


def bytes_to_bits(data: bytes, m: int) -> Bits:
    value = int.from_bytes(data, "big")
    total = len(data) * 8
    return tuple((value >> (total - 1 - i)) & 1 for i in range(m))


def bits_to_hex(bits: Sequence[int]) -> str:
    """Lowercase hex of the bit string read as a big-endian integer."""
    if not bits:
        return ""
    digits = (len(bits) + 3) // 4
    return format(int("".join(map(str, bits)), 2), f"0{digits}x")


def random_bits(n: int, rng) -> Bits:
    return tuple(map(int, format(rng.getrandbits(n), f"0{n}b"))) if n else ()


def sha256_hash(key: Sequence[int], m: int) -> Bits:
    """SHA-256 of the packed key, truncated to the first ``m`` bits (m <= 256)."""
    if not 1 <= m <= 256:
        raise ValueError(f"hash length must be in 1..256, got {m}")
    return bytes_to_bits(hashlib.sha256(bits_to_bytes(key)).digest(), m)


def toy_hash(key: Sequence[int], m: int) -> Bits:
    """FNV-1a over the bits, folded to ``m`` bits; for small exhaustive tests only."""
    if not 1 <= m <= 64:
        raise ValueError(f"toy hash length must be in 1..64, got {m}")
    h = 0xCBF29CE484222325
    for b in key:
        h ^= b + 1
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    h ^= len(key)
    h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    h ^= h >> 29
    return tuple((h >> (63 - i)) & 1 for i in range(m))


HASHES: dict[str, Callable[[Sequence[int], int], Bits]] = {
    "sha256": sha256_hash,
    "toy": toy_hash,
}


def hash_key(key: Sequence[int], m: int = DEFAULT_HASH_BITS, name: str = "sha256") -> Bits:
    try:
        fn = HASHES[name]
    except KeyError:
        raise ValueError(f"unknown hash {name!r}; choose from {sorted(HASHES)}") from None
    return fn(key, m)


def random_permutation(n: int, rng) -> tuple:
    """Uniform permutation of ``range(n)`` (``random.shuffle`` is Fisher-Yates)."""
    perm = list(range(n))
    rng.shuffle(perm)
    return tuple(perm)


def is_permutation(perm, n: int) -> bool:
    return (
        isinstance(perm, (list, tuple))
        and len(perm) == n
        and all(isinstance(p, int) and not isinstance(p, bool) for p in perm)
        and sorted(perm) == list(range(n))
    )


def apply_permutation(items: Sequence, perm: Sequence[int]) -> list:
    """``out[j] = items[perm[j]]``."""
    return [items[p] for p in perm]


def undo_permutation(items: Sequence, perm: Sequence[int]) -> list:
    """Inverse of :func:`apply_permutation`: ``out[perm[j]] = items[j]``."""
    out = [None] * len(perm)
    for j, p in enumerate(perm):
        out[p] = items[j]
    return out


def combine_keys(key_a: Sequence[int], key_b: Sequence[int]) -> Bits:
    if len(key_a) != len(key_b):
        raise ValueError(f"key lengths differ: {len(key_a)} vs {len(key_b)}")
    return tuple(a ^ b for a, b in zip(key_a, key_b))


def final_length(n: int, ratio: float) -> int:
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    # round first so 0.8 * 10 lands on 8, not 9
    return max(1, math.ceil(round(ratio * n, 9)))


def toeplitz_diagonals(n: int, r: int, seed: int) -> np.ndarray:
    """The ``n + r - 1`` defining bits of an ``r x n`` Toeplitz matrix."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=n + r - 1, dtype=np.uint8)


def identity_diagonals(n: int) -> np.ndarray:
    """Diagonal sequence whose ``n x n`` Toeplitz matrix is the identity."""
    diag = np.zeros(2 * n - 1, dtype=np.uint8)
    diag[n - 1] = 1
    return diag


def toeplitz_matrix(diagonals: np.ndarray, n: int, r: int) -> np.ndarray:
    """``T[i, j] = diagonals[r - 1 - i + j]``, so T is constant along diagonals."""
    diagonals = np.asarray(diagonals, dtype=np.uint8)
    if diagonals.shape != (n + r - 1,):
        raise ValueError(f"need {n + r - 1} diagonal bits, got {diagonals.shape}")
    windows = np.lib.stride_tricks.sliding_window_view(diagonals, n)
    return windows[::-1].copy()


def privacy_amplification(raw: Sequence[int], ratio: float, seed: int,
                          diagonals: Optional[np.ndarray] = None) -> Bits:
    """Compress ``raw`` to ``ceil(ratio * n)`` bits with a seeded Toeplitz hash over GF(2).

    ``diagonals`` overrides the seeded matrix (e.g. :func:`identity_diagonals`).
    """
    n = len(raw)
    r = final_length(n, ratio)
    if diagonals is None:
        diagonals = toeplitz_diagonals(n, r, seed)
    t = toeplitz_matrix(diagonals, n, r)
    out = (t.astype(np.int64) @ np.asarray(raw, dtype=np.int64)) & 1
    return tuple(int(b) for b in out)
