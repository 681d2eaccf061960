"""Seeded counter-based random streams.

Every random quantity in the library is drawn from an explicit
:class:`RngState`, identified by a 64-bit seed and a 64-bit stream id.
Distinct ``(seed, stream)`` pairs index independent Philox streams, so
trials, workers and dataset roles (training draws, test inputs, weight
init, epoch shuffles) can never share draws.  A state is a value: the
triple ``(seed, stream, position)`` pins the next draw exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_BLOCK = 4  # one Philox round yields 4 64-bit words, i.e. 4 doubles


def substream(*parts) -> int:
    """Derive a 64-bit stream id from strings/ints, stable across runs.

    Used to carve named substreams out of a single user seed, e.g.
    ``substream("train-data", "chi2_cdf_1d", 65536, trial, mode)``.
    """
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


class RngState:
    """Counter-based random stream at an explicit position.

    The position counts raw 64-bit draws and is kept block-aligned so the
    state can be reconstructed from ``(seed, stream, position)`` alone.
    """

    __slots__ = ("seed", "stream", "position")

    def __init__(self, seed: int, stream: int = 0, position: int = 0):
        if position % _BLOCK != 0:
            raise ValueError("position must be a multiple of 4 (block aligned)")
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self.position = int(position)

    def __repr__(self):
        return f"RngState(seed={self.seed}, stream={self.stream}, position={self.position})"

    def _draw(self, n: int) -> np.ndarray:
        """Return the next n doubles in [0, 1) and advance the counter."""
        bg = np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))
        bg.advance(self.position // _BLOCK)
        out = np.random.Generator(bg).random(n)
        blocks = -(-n // _BLOCK)
        self.position += blocks * _BLOCK
        return out

    def clone(self) -> "RngState":
        return RngState(self.seed, self.stream, self.position)


def uniform(state: RngState, lo: float, hi: float, size: int | None = None):
    """Uniform draw(s) in [lo, hi); scalar when size is None."""
    if not lo < hi:
        raise ValueError(f"uniform requires lo < hi, got [{lo}, {hi})")
    n = 1 if size is None else int(size)
    r = lo + (hi - lo) * state._draw(n)
    return float(r[0]) if size is None else r


def open_uniform01(state: RngState, size: int | None = None):
    """Uniform draw(s) in (0, 1], the support used for integration draws."""
    n = 1 if size is None else int(size)
    r = 1.0 - state._draw(n)
    return float(r[0]) if size is None else r


def std_normal(state: RngState, size: int | None = None):
    """Standard normal draw(s) via Box-Muller on consecutive uniform pairs.

    Each normal is a pure function of its own pair of counter positions,
    so the stream stays reproducible under any call slicing.
    """
    n = 1 if size is None else int(size)
    u = state._draw(2 * n)
    u1 = 1.0 - u[0::2]  # (0, 1], keeps the log finite
    u2 = u[1::2]
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return float(z[0]) if size is None else z


def permutation(state: RngState, n: int) -> np.ndarray:
    """Deterministic permutation of range(n) driven by this stream.

    Sorts n random keys; ties are measure-zero and broken stably, so the
    result is a pure function of the stream position.
    """
    return np.argsort(state._draw(n), kind="stable")


def sample_inputs(problem, state: RngState, size: int | None = None):
    """Sample input vector(s) uniformly from the problem's box.

    Zero-width coordinates are held constant.  Problems with an
    integration endpoint carry a fixed lower limit ``a`` strictly below
    the sampled range of ``b``, so the a < b constraint holds for every
    draw by construction (checked at catalog build time).
    """
    n = 1 if size is None else int(size)
    cols = []
    for lo, hi in problem.box:
        if lo == hi:
            cols.append(np.full(n, float(lo)))
        else:
            cols.append(uniform(state, lo, hi, n))
    x = np.column_stack(cols)
    return x[0] if size is None else x
