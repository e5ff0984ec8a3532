"""Level storage backends behind :class:`relquantiles.sketch.Sketch`.

``FloatLevels`` packs float64 buffers into 2-D arrays driven by the
kernels; ``ObjectLevels`` keeps one :class:`CompactorState` per level and
works for any items ordered by a key function. Both can export their
contents as a :class:`LevelSet`, the plain working form used by merges
and parameter growth, and load one back.
"""

from __future__ import annotations

import heapq
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import kernels
from .compactor import CompactorState, insert
from .errors import InputError, InvariantError
from .rng import CoinSource


@dataclass
class LevelSet:
    """Sorted level contents plus schedule states, indexed by level."""

    items: list
    sigmas: list
    ncomp: list
    merge_sorted: Callable[[Any, Any], Any] = field(repr=False)
    empty: Callable[[], Any] = field(repr=False)

    @property
    def H(self):
        return len(self.items) - 1

    def open_level(self):
        self.items.append(self.empty())
        self.sigmas.append(0)
        self.ncomp.append(0)


def _merge_sorted_np(a, b):
    if len(b) == 0:
        return a
    if len(a) == 0:
        return b
    return np.sort(np.concatenate((a, b)), kind="stable")


def _empty_np():
    return np.empty(0, dtype=np.float64)


class FloatLevels:
    """Packed float64 levels; see :mod:`relquantiles.kernels` for the layout."""

    def __init__(self, cap, rows=4):
        self.cap = cap
        self.buf = np.zeros((rows, cap))
        self.pend = np.zeros((rows, cap))
        self.cnt = np.zeros(rows, dtype=np.int64)
        self.srt = np.zeros(rows, dtype=np.int64)
        self.sig = np.zeros(rows, dtype=np.int64)
        self.ncomp = np.zeros(rows, dtype=np.int64)
        self.plen = np.zeros(rows, dtype=np.int64)
        self.ppos = np.zeros(rows, dtype=np.int64)
        self.meta = np.zeros(2, dtype=np.int64)

    @property
    def H(self):
        return int(self.meta[0])

    @property
    def coins(self):
        return int(self.meta[1])

    @coins.setter
    def coins(self, value):
        self.meta[1] = value

    def _grow_rows(self):
        rows = 2 * self.buf.shape[0]
        for name in ("buf", "pend"):
            old = getattr(self, name)
            new = np.zeros((rows, self.cap))
            new[: old.shape[0]] = old
            setattr(self, name, new)
        for name in ("cnt", "srt", "sig", "ncomp", "plen", "ppos"):
            old = getattr(self, name)
            new = np.zeros(rows, dtype=np.int64)
            new[: old.shape[0]] = old
            setattr(self, name, new)

    @staticmethod
    def prepare(values):
        try:
            arr = np.asarray(values, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise InputError(f"items must be real numbers: {exc}") from None
        arr = arr.reshape(-1)
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise InputError(f"item at index {bad[0]} is not finite: {arr[bad[0]]!r}")
        # adding +0.0 maps -0.0 to 0.0 so equal items are bit-identical
        return np.ascontiguousarray(arr + 0.0)

    def ingest(self, values, start, stop, params, seed):
        i = start
        while i < stop:
            i = kernels.ingest(values, i, stop, self, params.B, params.k, seed)
            if i < stop:
                self._grow_rows()
        return stop

    def level(self, h):
        return self.buf[h, : self.cnt[h]]

    def sigma(self, h):
        return int(self.sig[h])

    def compactions(self, h):
        return int(self.ncomp[h])

    def ranks(self, ys):
        ys = np.asarray(ys, dtype=np.float64)
        total = np.zeros(ys.shape, dtype=np.int64)
        for h in range(self.H + 1):
            total += np.searchsorted(self.level(h), ys, side="right").astype(np.int64) << h
        return total

    def rank(self, y):
        return int(self.ranks(np.float64(y)))

    def weighted_items(self):
        """All stored items sorted ascending, with their weights."""
        H = self.H
        items = np.concatenate([self.level(h) for h in range(H + 1)])
        weights = np.concatenate(
            [np.full(self.cnt[h], 1 << h, dtype=np.int64) for h in range(H + 1)]
        )
        order = np.argsort(items, kind="stable")
        return items[order], weights[order]

    def export(self):
        H = self.H
        return LevelSet(
            items=[self.level(h).copy() for h in range(H + 1)],
            sigmas=[int(s) for s in self.sig[: H + 1]],
            ncomp=[int(c) for c in self.ncomp[: H + 1]],
            merge_sorted=_merge_sorted_np,
            empty=_empty_np,
        )

    def load(self, levels: LevelSet, params, coins, allow_overfull=False):
        H = levels.H
        cap = max([params.B] + [len(seq) for seq in levels.items])
        if cap > params.B and not allow_overfull:
            raise InvariantError(f"a level holds {cap} items, capacity is {params.B}")
        fresh = FloatLevels(cap, rows=max(4, H + 2))
        for h, seq in enumerate(levels.items):
            fresh.buf[h, : len(seq)] = seq
            fresh.cnt[h] = fresh.srt[h] = len(seq)
            fresh.sig[h] = levels.sigmas[h]
            fresh.ncomp[h] = levels.ncomp[h]
        fresh.meta[:] = (H, coins)
        self.__dict__.update(fresh.__dict__)


class ObjectLevels:
    """One :class:`CompactorState` per level; items ordered by ``key``.

    ``tracer``, when set, receives ``inserted(h, item)`` for every item
    stored at level ``h`` and ``compacted(h, compacted_range)`` before each
    compaction.
    """

    def __init__(self, params, key, tracer=None, seed=0):
        self.key = key
        self.tracer = tracer
        self.states = [CompactorState(0, params.k, params.B, key=key)]
        self._coins = CoinSource(seed)

    @property
    def H(self):
        return len(self.states) - 1

    @property
    def coins(self):
        return self._coins.used

    @coins.setter
    def coins(self, value):
        self._coins.used = value

    def prepare(self, values):
        return list(values)

    def _observe(self, state, compacted):
        self.tracer.compacted(state.level, compacted)

    def _insert(self, x, h, params):
        if h > self.H:
            self.states.append(CompactorState(h, params.k, params.B, key=self.key))
        if self.tracer is not None:
            self.tracer.inserted(h, x)
        observer = self._observe if self.tracer is not None else None
        for z in insert(self.states[h], x, self._coins, observer):
            self._insert(z, h + 1, params)

    def ingest(self, values, start, stop, params, seed):
        for i in range(start, stop):
            self._insert(values[i], 0, params)
        return stop

    def level(self, h):
        return self.states[h].buffer

    def sigma(self, h):
        return self.states[h].sigma

    def compactions(self, h):
        return self.states[h].compaction_count

    def rank(self, y):
        key = self.key
        ky = y if key is None else key(y)
        return sum(bisect_right(st.buffer, ky, key=key) << h for h, st in enumerate(self.states))

    def ranks(self, ys):
        return np.array([self.rank(y) for y in ys], dtype=np.int64)

    def weighted_items(self):
        runs = [[(x, 1 << h) for x in st.buffer] for h, st in enumerate(self.states)]
        key = self.key or (lambda x: x)
        merged = list(heapq.merge(*runs, key=lambda pair: key(pair[0])))
        return [x for x, _ in merged], np.array([w for _, w in merged], dtype=np.int64)

    def export(self):
        key = self.key
        return LevelSet(
            items=[list(st.buffer) for st in self.states],
            sigmas=[st.sigma for st in self.states],
            ncomp=[st.compaction_count for st in self.states],
            merge_sorted=lambda a, b: list(heapq.merge(a, b, key=key)),
            empty=list,
        )

    def load(self, levels: LevelSet, params, coins, allow_overfull=False):
        self.states = [
            CompactorState(h, params.k, params.B, sigma, list(seq), nc, key=self.key)
            for h, (seq, sigma, nc) in enumerate(zip(levels.items, levels.sigmas, levels.ncomp))
        ]
        self.coins = coins
