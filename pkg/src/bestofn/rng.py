"""Buffered random stream used by every stochastic routine.

All randomness flows through :class:`RandomStream`, built on numpy's
PCG64 bit generator (PCG-XSL-RR 128/64). A seed ``s`` yields three
independent PCG64 streams via ``SeedSequence(s).spawn(2)``:

* uniforms come from ``PCG64(child 0)``,
* standard normals from ``PCG64(child 1)``,
* anything else (binomials) from ``PCG64(s)``, exposed as ``generator``.

Uniforms and normals are pulled in blocks so per-event sampling in the
pure-Python engines stays cheap. Because each kind has its own stream,
the k-th uniform is the same number no matter how uniform and normal
draws interleave, which lets the compiled simulator engine consume the
same sequences in bulk. Same seed, same calls, bit-identical values.
"""

from __future__ import annotations

import math

import numpy as np

_BLOCK = 2048


class RandomStream:
    """Deterministic random stream seeded by a 64-bit integer."""

    def __init__(self, seed: int, block: int = _BLOCK):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))
        u_seq, z_seq = np.random.SeedSequence(self.seed).spawn(2)
        self._ugen = np.random.Generator(np.random.PCG64(u_seq))
        self._zgen = np.random.Generator(np.random.PCG64(z_seq))
        self._block = block
        # pending draws, stored reversed so that pop() yields the next one
        self._u: list[float] = []
        self._z: list[float] = []

    def _refill_uniform(self) -> None:
        u = self._ugen.random(self._block).tolist()
        u.reverse()
        self._u = u

    def random(self) -> float:
        """Uniform draw on [0, 1)."""
        try:
            return self._u.pop()
        except IndexError:
            self._refill_uniform()
            return self._u.pop()

    def uniform(self) -> float:
        """Uniform draw on (0, 1]; safe to pass to ``log``."""
        try:
            return 1.0 - self._u.pop()
        except IndexError:
            self._refill_uniform()
            return 1.0 - self._u.pop()

    def normal(self) -> float:
        try:
            return self._z.pop()
        except IndexError:
            z = self._zgen.standard_normal(self._block).tolist()
            z.reverse()
            self._z = z
            return self._z.pop()

    def exponential(self, mean: float) -> float:
        return -mean * math.log(self.uniform())

    def randbelow(self, n: int) -> int:
        """Uniform integer on ``range(n)``."""
        try:
            return int(self._u.pop() * n)
        except IndexError:
            self._refill_uniform()
            return int(self._u.pop() * n)

    def distinct_below(self, k: int, m: int) -> list[int]:
        """Uniform ``m``-subset of ``range(k)`` (Floyd's algorithm).

        Uses no draws when ``m >= k``. ``m`` is small here, so a list
        membership test beats a set.
        """
        if m >= k:
            return list(range(k))
        chosen: list[int] = []
        for j in range(k - m, k):
            t = self.randbelow(j + 1)
            chosen.append(j if t in chosen else t)
        return chosen

    def take_uniforms(self, k: int) -> np.ndarray:
        """The next ``k`` values :meth:`random` would return, as an array."""
        head = self._u[::-1][:k]
        del self._u[len(self._u) - len(head):]
        if len(head) == k:
            return np.array(head)
        return np.concatenate([np.array(head), self._ugen.random(k - len(head))])

    def take_normals(self, k: int) -> np.ndarray:
        """The next ``k`` values :meth:`normal` would return, as an array."""
        head = self._z[::-1][:k]
        del self._z[len(self._z) - len(head):]
        if len(head) == k:
            return np.array(head)
        return np.concatenate([np.array(head), self._zgen.standard_normal(k - len(head))])

    def binomial(self, m: int, p: float) -> int:
        return int(self.generator.binomial(m, p))


def as_stream(rng) -> RandomStream:
    """Accept a RandomStream or an integer seed."""
    if isinstance(rng, RandomStream):
        return rng
    return RandomStream(int(rng))
