"""Counter-based random streams.

Every random number is addressed by ``(seed, stream path, position)``: the
path (e.g. ``(WIENER, member)``) is hashed into a Philox key and the position
selects the counter, so any slice of a stream can be regenerated without
drawing what precedes it. Results therefore do not depend on how work is
split across threads or chunks.

Normals use Box-Muller on consecutive uniform pairs, which keeps the mapping
from positions to variates fixed (two uniforms per two normals).
"""

from __future__ import annotations

import numpy as np

__all__ = ["WIENER", "INIT", "PHASES", "SYNTHETIC", "stream_key", "uniforms", "normals"]

WIENER = 1
INIT = 2
PHASES = 3
SYNTHETIC = 4

_WORDS_PER_BLOCK = 4  # Philox4x64 emits four 64-bit words per counter step


def stream_key(seed: int, *path: int) -> np.ndarray:
    """128-bit Philox key derived from ``seed`` and an integer path."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, path)])
    return ss.generate_state(2, np.uint64)


def uniforms(key: np.ndarray, start: int, count: int) -> np.ndarray:
    """Uniforms on ``[0, 1)`` at stream positions ``start .. start+count-1``."""
    block, offset = divmod(int(start), _WORDS_PER_BLOCK)
    bitgen = np.random.Philox(key=key)
    if block:
        bitgen.advance(block)
    return np.random.Generator(bitgen).random(offset + int(count))[offset:]


def normals(key: np.ndarray, start: int, count: int) -> np.ndarray:
    """Standard normals at positions ``start .. start+count-1``.

    Position ``2p`` and ``2p+1`` are the cosine and sine branch of the
    Box-Muller pair built from uniforms ``2p`` and ``2p+1``.
    """
    start, count = int(start), int(count)
    lo = start - start % 2
    hi = start + count + (start + count) % 2
    u = uniforms(key, lo, hi - lo).reshape(-1, 2)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    angle = 2.0 * np.pi * u[:, 1]
    z = np.column_stack([r * np.cos(angle), r * np.sin(angle)]).ravel()
    return z[start - lo:start - lo + count]
