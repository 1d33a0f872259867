"""Trajectory-aware ring buffer of registered transitions.

Indices handed out by the buffer are absolute push counters (0 for the first
transition ever pushed), so an index stays meaningful while it is stored and
becomes invalid once evicted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NotReadyError(RuntimeError):
    """The buffer does not hold enough experience for the request."""


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    A: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    terminal: bool
    trial_id: int
    step_in_trial: int


@dataclass(frozen=True)
class Segment:
    """Transitions i..i+n-1 of a single trial.

    The bootstrap state for a sub-horizon ``m <= n`` is ``s_next[m - 1]``;
    it counts as terminal when ``terminal[m - 1]`` is set.
    """

    start: int
    n: int
    s: np.ndarray
    A: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray
    is_trial_start: bool
    prev_s: np.ndarray | None = None
    prev_A: np.ndarray | None = None
    prev_a: np.ndarray | None = None

    @property
    def bootstrap_state(self) -> np.ndarray:
        return self.s_next[self.n - 1]


@dataclass(frozen=True)
class SegmentBatch:
    """``B`` segments padded to a common horizon ``tau`` (padding is zero)."""

    horizon: np.ndarray  # (B,)
    s: np.ndarray  # (B, tau, ds)
    A: np.ndarray  # (B, tau, d)
    a: np.ndarray  # (B, tau, d)
    r: np.ndarray  # (B, tau)
    s_next: np.ndarray  # (B, tau, ds)
    terminal: np.ndarray  # (B, tau)
    has_prev: np.ndarray  # (B,)
    prev_s: np.ndarray  # (B, ds)
    prev_A: np.ndarray  # (B, d)
    prev_a: np.ndarray  # (B, d)

    @classmethod
    def from_segments(cls, segments: list[Segment], tau: int) -> "SegmentBatch":
        B = len(segments)
        ds, d = segments[0].s.shape[1], segments[0].a.shape[1]
        out = dict(
            horizon=np.array([seg.n for seg in segments]),
            s=np.zeros((B, tau, ds)),
            A=np.zeros((B, tau, d)),
            a=np.zeros((B, tau, d)),
            r=np.zeros((B, tau)),
            s_next=np.zeros((B, tau, ds)),
            terminal=np.zeros((B, tau), dtype=bool),
            has_prev=np.array([not seg.is_trial_start for seg in segments]),
            prev_s=np.zeros((B, ds)),
            prev_A=np.zeros((B, d)),
            prev_a=np.zeros((B, d)),
        )
        for b, seg in enumerate(segments):
            n = min(seg.n, tau)
            out["horizon"][b] = n
            for key in ("s", "A", "a", "r", "s_next", "terminal"):
                out[key][b, :n] = getattr(seg, key)[:n]
            if not seg.is_trial_start:
                out["prev_s"][b] = seg.prev_s
                out["prev_A"][b] = seg.prev_A
                out["prev_a"][b] = seg.prev_a
        return cls(**out)


class ReplayMemory:
    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._s = np.zeros((capacity, state_dim))
        self._A = np.zeros((capacity, action_dim))
        self._a = np.zeros((capacity, action_dim))
        self._r = np.zeros(capacity)
        self._s_next = np.zeros((capacity, state_dim))
        self._terminal = np.zeros(capacity, dtype=bool)
        self._trial = np.zeros(capacity, dtype=np.int64)
        self._step = np.zeros(capacity, dtype=np.int64)
        self._count = 0

    def __len__(self) -> int:
        return min(self._count, self.capacity)

    @property
    def oldest(self) -> int:
        return self._count - len(self)

    @property
    def newest(self) -> int:
        return self._count - 1

    def push(self, t: Transition) -> None:
        s, A, a, s_next = (np.asarray(x, dtype=float) for x in (t.s, t.A, t.a, t.s_next))
        if s.shape != (self.state_dim,) or s_next.shape != (self.state_dim,):
            raise ValueError(f"state must have shape ({self.state_dim},)")
        if A.shape != (self.action_dim,) or a.shape != (self.action_dim,):
            raise ValueError(f"action must have shape ({self.action_dim},)")
        if t.step_in_trial < 0:
            raise ValueError("step_in_trial must be >= 0")
        if t.step_in_trial > 0:
            last = (self._count - 1) % self.capacity
            if (
                self._count == 0
                or self._trial[last] != t.trial_id
                or self._step[last] != t.step_in_trial - 1
                or self._terminal[last]
            ):
                raise ValueError("step_in_trial must continue the previous transition of the trial")
        k = self._count % self.capacity
        self._s[k] = s
        self._A[k] = A
        self._a[k] = a
        self._r[k] = t.r
        self._s_next[k] = s_next
        self._terminal[k] = t.terminal
        self._trial[k] = t.trial_id
        self._step[k] = t.step_in_trial
        self._count += 1

    def __getitem__(self, i: int) -> Transition:
        self._check_stored(i)
        k = i % self.capacity
        return Transition(
            self._s[k].copy(), self._A[k].copy(), self._a[k].copy(), float(self._r[k]),
            self._s_next[k].copy(), bool(self._terminal[k]), int(self._trial[k]), int(self._step[k]),
        )

    def _check_stored(self, i: int) -> None:
        if not self.oldest <= i < self._count:
            raise IndexError(f"index {i} is not stored (range {self.oldest}..{self._count - 1})")

    def _first_eligible(self) -> int:
        lo = self.oldest
        # only the oldest stored transition can have lost its predecessor
        if len(self) and self._step[lo % self.capacity] > 0:
            lo += 1
        return lo

    def is_eligible(self, i: int) -> bool:
        return self._first_eligible() <= i < self._count

    def n_eligible(self) -> int:
        return max(0, self._count - self._first_eligible())

    def sample_index(self, rng: np.random.Generator, size: int | None = None):
        lo = self._first_eligible()
        if lo >= self._count:
            raise NotReadyError("no eligible transition in the buffer")
        return rng.integers(lo, self._count, size=size)

    def extract_segment(self, i: int, tau: int) -> Segment:
        if not self.is_eligible(i):
            raise IndexError(f"index {i} is not eligible for replay")
        batch = self.extract_batch(np.array([i]), tau)
        n = int(batch.horizon[0])
        has_prev = bool(batch.has_prev[0])
        return Segment(
            start=int(i),
            n=n,
            s=batch.s[0, :n],
            A=batch.A[0, :n],
            a=batch.a[0, :n],
            r=batch.r[0, :n],
            s_next=batch.s_next[0, :n],
            terminal=batch.terminal[0, :n],
            is_trial_start=not has_prev,
            prev_s=batch.prev_s[0] if has_prev else None,
            prev_A=batch.prev_A[0] if has_prev else None,
            prev_a=batch.prev_a[0] if has_prev else None,
        )

    def extract_batch(self, idx: np.ndarray, tau: int) -> SegmentBatch:
        """Padded segments starting at each (eligible) index in ``idx``."""
        if tau < 1:
            raise ValueError("tau must be >= 1")
        idx = np.asarray(idx, dtype=np.int64)
        cap = self.capacity
        pos = idx[:, None] + np.arange(tau)[None, :]
        slots = pos % cap
        first = idx % cap
        valid = (pos < self._count) & (self._trial[slots] == self._trial[first][:, None])
        # a trial occupies contiguous indices, so validity is a prefix
        valid = np.cumprod(valid, axis=1).astype(bool)
        horizon = valid.sum(axis=1)
        m = valid[..., None]
        has_prev = self._step[first] > 0
        prev = (idx - 1) % cap
        hp = has_prev[:, None]
        return SegmentBatch(
            horizon=horizon,
            s=np.where(m, self._s[slots], 0.0),
            A=np.where(m, self._A[slots], 0.0),
            a=np.where(m, self._a[slots], 0.0),
            r=np.where(valid, self._r[slots], 0.0),
            s_next=np.where(m, self._s_next[slots], 0.0),
            terminal=valid & self._terminal[slots],
            has_prev=has_prev,
            prev_s=np.where(hp, self._s[prev], 0.0),
            prev_A=np.where(hp, self._A[prev], 0.0),
            prev_a=np.where(hp, self._a[prev], 0.0),
        )
