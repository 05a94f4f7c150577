"""Windows of the last ``L`` (action, observation) pairs.

A canonical window at step ``h`` holds ``m = min(L, h-1)`` meaningful pairs;
the remaining leading slots are ``PAD``.  As a tuple a window is
``((a, o), ...)`` of length ``L``, oldest pair first.

For tables every step gets its own dense index range: a window with ``m``
pairs is encoded in mixed radix ``A * nO`` with the newest pair as the least
significant digit.  The suffix of length ``j`` of a window is therefore
``index % (A * nO) ** j``, and advancing a full window drops the most
significant digit.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

PAD = (-1, -1)


def z_canonical(actions, observations, L: int) -> tuple:
    """Canonical window of a history ``a_{1:h-1}``, ``o_{2:h}``."""
    actions, observations = list(actions), list(observations)
    if len(actions) != len(observations):
        raise ValueError("history needs as many observations as actions")
    m = min(L, len(actions))
    pairs = list(zip(actions[len(actions) - m:], observations[len(observations) - m:]))
    return tuple([PAD] * (L - m) + [(int(a), int(o)) for a, o in pairs])


def z_advance(z: tuple, a: int, o: int) -> tuple:
    """Successor window after playing ``a`` and observing ``o``."""
    if len(z) == 0:
        return z
    return tuple(z[1:]) + ((int(a), int(o)),)


def z_contains(z: tuple, o: int) -> bool:
    return any(p != PAD and p[1] == o for p in z)


@dataclass(frozen=True)
class ZIndexer:
    """Dense encoding of canonical windows for fixed ``(A, nO, L, H)``."""

    n_actions: int
    n_obs: int
    L: int
    H: int

    @property
    def base(self) -> int:
        return self.n_actions * self.n_obs

    def width(self, h: int) -> int:
        """Number of meaningful pairs in a step-``h`` window."""
        return min(self.L, h - 1)

    def size(self, h: int) -> int:
        return self.base ** self.width(h)

    def encode(self, h: int, z: tuple) -> int:
        m = self.width(h)
        if len(z) != self.L:
            raise ValueError(f"window length {len(z)} != L={self.L}")
        idx = 0
        for p in z[self.L - m:]:
            if p == PAD:
                raise ValueError(f"window {z} is not canonical for step {h}")
            idx = idx * self.base + p[0] * self.n_obs + p[1]
        if any(p != PAD for p in z[: self.L - m]):
            raise ValueError(f"window {z} is not canonical for step {h}")
        return idx

    def encode_history(self, actions, observations) -> int:
        h = len(actions) + 1
        return self.encode(h, z_canonical(actions, observations, self.L))

    def decode(self, h: int, idx: int) -> tuple:
        m = self.width(h)
        pairs = []
        for _ in range(m):
            idx, d = divmod(idx, self.base)
            pairs.append(divmod(d, self.n_obs))
        pairs.reverse()
        return tuple([PAD] * (self.L - m) + [tuple(map(int, p)) for p in pairs])

    def advance(self, h: int, idx, a, o):
        """Index at step ``h+1`` of the successor of window ``idx`` at step ``h``.

        Works elementwise on integer arrays.
        """
        pair = np.asarray(a) * self.n_obs + np.asarray(o)
        if self.L == 0:
            return np.zeros_like(pair)
        if self.width(h) < self.L:
            return np.asarray(idx) * self.base + pair
        return (np.asarray(idx) % (self.base ** (self.L - 1))) * self.base + pair

    @cached_property
    def _succ(self):
        out = {}
        for h in range(1, self.H):
            z = np.arange(self.size(h))[:, None, None]
            a = np.arange(self.n_actions)[None, :, None]
            o = np.arange(self.n_obs)[None, None, :]
            out[h] = self.advance(h, z, a, o)
        return out

    def successors(self, h: int) -> np.ndarray:
        """``(size(h), A, nO)`` table of successor indices at step ``h+1``."""
        return self._succ[h]

    def last_obs(self, h: int) -> np.ndarray:
        """Final observation of every step-``h`` window (``-1`` at step 1 or L=0)."""
        if self.width(h) == 0:
            return np.full(self.size(h), -1)
        return np.arange(self.size(h)) % self.n_obs

    def contains_obs(self, h: int, o: int) -> np.ndarray:
        """Boolean mask of step-``h`` windows whose observations include ``o``."""
        idx = np.arange(self.size(h))
        mask = np.zeros(idx.shape, dtype=bool)
        rest = idx.copy()
        for _ in range(self.width(h)):
            rest, d = np.divmod(rest, self.base)
            mask |= (d % self.n_obs) == o
        return mask

    def suffix(self, h: int, idx, j: int):
        """Index of the length-``min(j, h-1)`` suffix (an index for window length ``j``)."""
        return np.asarray(idx) % (self.base ** min(j, self.width(h)))
