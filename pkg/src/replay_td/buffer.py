"""FIFO experience replay memory and its empirical statistics."""

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import EmptyBuffer


class Transition(NamedTuple):
    s: int
    r: float
    s_next: int


class Batch(NamedTuple):
    """Column view of a mini-batch: parallel arrays of states, rewards, successors."""

    s: np.ndarray
    r: np.ndarray
    s_next: np.ndarray

    def __len__(self):
        return len(self.s)

    def transitions(self) -> list:
        return [Transition(int(a), float(b), int(c)) for a, b, c in zip(self.s, self.r, self.s_next)]

    @classmethod
    def from_transitions(cls, items) -> "Batch":
        items = list(items)
        return cls(np.array([t[0] for t in items], dtype=np.int64),
                   np.array([t[1] for t in items], dtype=float),
                   np.array([t[2] for t in items], dtype=np.int64))


class UniformStream:
    """Uniform ``[0, 1)`` doubles served from fixed-size blocks.

    Every double costs one 64-bit draw of the wrapped generator, so the values
    handed out do not depend on how requests are chunked.
    """

    def __init__(self, rng: np.random.Generator, block: int = 8192):
        self._rng = rng
        self._block = block
        self._buf = np.empty(0)
        self._pos = 0

    def take(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._pos >= self._buf.size:
                self._buf = self._rng.random(max(self._block, n - filled))
                self._pos = 0
            k = min(n - filled, self._buf.size - self._pos)
            out[filled:filled + k] = self._buf[self._pos:self._pos + k]
            self._pos += k
            filled += k
        return out

    def one(self) -> float:
        if self._pos >= self._buf.size:
            self._buf = self._rng.random(self._block)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)


def _stream(rng):
    if isinstance(rng, UniformStream):
        return rng
    return UniformStream(rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng))


class ReplayBuffer:
    """Ring buffer of at most ``capacity`` transitions with FIFO eviction.

    Entries are stored column-wise; position ``i`` in FIFO order (0 = oldest)
    lives at physical slot ``(start + i) % capacity``.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._s = np.zeros(self.capacity, dtype=np.int64)
        self._r = np.zeros(self.capacity)
        self._sn = np.zeros(self.capacity, dtype=np.int64)
        self._head = 0
        self.insert_count = 0

    def __len__(self):
        return min(self.insert_count, self.capacity)

    @property
    def full(self) -> bool:
        return self.insert_count >= self.capacity

    def _start(self):
        return (self._head - len(self)) % self.capacity

    def push(self, t) -> "ReplayBuffer":
        s, r, sn = t
        h = self._head
        self._s[h] = s
        self._r[h] = r
        self._sn[h] = sn
        self._head = (h + 1) % self.capacity
        self.insert_count += 1
        return self

    def _fifo_slots(self):
        return (self._start() + np.arange(len(self))) % self.capacity

    @property
    def entries(self) -> list:
        slots = self._fifo_slots()
        return Batch(self._s[slots], self._r[slots], self._sn[slots]).transitions()

    def columns(self) -> Batch:
        """All entries as a :class:`Batch`, storage order (not FIFO order)."""
        n = len(self)
        if n == self.capacity:
            return Batch(self._s, self._r, self._sn)
        slots = self._fifo_slots()
        return Batch(self._s[slots], self._r[slots], self._sn[slots])

    def sample_indices(self, size: int, rng) -> np.ndarray:
        """FIFO positions of ``size`` uniform draws with replacement."""
        n = len(self)
        if n == 0:
            raise EmptyBuffer("cannot sample from an empty buffer")
        u = _stream(rng).take(size)
        pos = np.minimum((u * n).astype(np.int64), n - 1)
        return pos

    def sample_batch(self, size: int, rng) -> Batch:
        pos = self.sample_indices(size, rng)
        slots = (self._start() + pos) % self.capacity
        return Batch(self._s[slots], self._r[slots], self._sn[slots])

    def sample_minibatch(self, size: int, rng) -> list:
        return self.sample_batch(size, rng).transitions()

    def to_json(self) -> str:
        return json.dumps([[t.s, t.r, t.s_next] for t in self.entries])

    @classmethod
    def from_json(cls, text: str, capacity: int | None = None) -> "ReplayBuffer":
        items = json.loads(text)
        buf = cls(capacity if capacity is not None else max(len(items), 1))
        for s, r, sn in items:
            buf.push((int(s), float(r), int(sn)))
        return buf


@dataclass(frozen=True, eq=False)
class BufferEmpirics:
    counts: np.ndarray        # visits per state
    pair_counts: np.ndarray   # visits per (s, s')
    size: int
    mu_s: np.ndarray
    mu_ss: np.ndarray
    d_b: np.ndarray
    p_b: np.ndarray
    r_b: np.ndarray


def empirics_from_columns(s, r, s_next, n_states: int) -> BufferEmpirics:
    s = np.asarray(s, dtype=np.int64)
    n = s.size
    if n == 0:
        raise EmptyBuffer("empirics of an empty buffer are undefined")
    counts = np.bincount(s, minlength=n_states)
    pair_counts = np.bincount(s * n_states + np.asarray(s_next, dtype=np.int64),
                              minlength=n_states * n_states).reshape(n_states, n_states)
    reward_sum = np.bincount(s, weights=np.asarray(r, dtype=float), minlength=n_states)
    visited = counts > 0
    safe = np.where(visited, counts, 1)
    p_b = np.where(visited[:, None], pair_counts / safe[:, None], 0.0)
    r_b = np.where(visited, reward_sum / safe, 0.0)
    mu_s = counts / n
    return BufferEmpirics(counts=counts, pair_counts=pair_counts, size=n, mu_s=mu_s,
                          mu_ss=pair_counts / n, d_b=np.diag(mu_s), p_b=p_b, r_b=r_b)


def empirics(buffer: ReplayBuffer, n_states: int) -> BufferEmpirics:
    cols = buffer.columns()
    return empirics_from_columns(cols.s, cols.r, cols.s_next, n_states)
