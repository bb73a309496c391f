"""Portable random streams.

Bits come from Philox4x64-10 (numpy's ``Philox`` bit generator) keyed by the
128-bit integer ``seed | (stream << 64)``. Everything above the raw 64-bit
words is defined here so the streams can be reproduced elsewhere:

* uniform: ``(u >> 11) * 2**-53`` in [0, 1)
* normal: Box-Muller on consecutive word pairs ``(a, b)`` with
  ``u1 = ((a >> 11) + 1) * 2**-53`` in (0, 1], ``u2 = (b >> 11) * 2**-53``,
  ``r = sqrt(-2 ln u1)``, emitting ``r cos(2 pi u2)`` then ``r sin(2 pi u2)``.
  A request for ``k`` normals consumes ``2 * ceil(k / 2)`` words; an odd
  trailing value is discarded.
* permutation: stable argsort of ``k`` fresh words.
"""
import numpy as np

_MASK64 = (1 << 64) - 1
_INV53 = 1.0 / 9007199254740992.0
_CHUNK = 4096


class Rng:
    """Deterministic stream identified by ``(seed, stream)``."""

    def __init__(self, seed, stream=0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self._bits = np.random.Philox(key=self.seed | (self.stream << 64))
        self._buf = np.empty(0, dtype=np.uint64)
        self._pos = 0

    def child(self, stream):
        """A fresh, independent stream sharing this seed."""
        return Rng(self.seed, stream)

    def raw(self, k):
        k = int(k)
        out = np.empty(k, dtype=np.uint64)
        filled = 0
        while filled < k:
            if self._pos >= self._buf.size:
                self._buf = self._bits.random_raw(max(_CHUNK, k - filled))
                self._pos = 0
            take = min(k - filled, self._buf.size - self._pos)
            out[filled:filled + take] = self._buf[self._pos:self._pos + take]
            self._pos += take
            filled += take
        return out

    def uniform(self, size=None):
        k = 1 if size is None else int(np.prod(size))
        u = (self.raw(k) >> np.uint64(11)).astype(np.float64) * _INV53
        return float(u[0]) if size is None else u.reshape(size)

    def normal(self, size=None):
        k = 1 if size is None else int(np.prod(size))
        pairs = (k + 1) // 2
        w = self.raw(2 * pairs) >> np.uint64(11)
        u1 = (w[0::2].astype(np.float64) + 1.0) * _INV53
        u2 = w[1::2].astype(np.float64) * _INV53
        r = np.sqrt(-2.0 * np.log(u1))
        ang = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(ang)
        z[1::2] = r * np.sin(ang)
        z = z[:k]
        return float(z[0]) if size is None else z.reshape(size)

    def permutation(self, k):
        return np.argsort(self.raw(k), kind="stable")

    def integers(self, high, size=None):
        """Uniform integers in [0, high) by scaling a 53-bit uniform."""
        u = np.asarray(self.uniform(size))
        out = np.minimum((u * high).astype(np.int64), high - 1)
        return int(out) if size is None else out
