"""Merging two mergeable-mode sketches, and the compactions it relies on.

A merge picks the sketch with more levels as the target. If the combined
input no longer fits under the target's size bound ``N`` (or the source
was built against a larger bound), the target first runs special
compactions with its old capacity and squares ``N``. A source with a
smaller bound gets special compactions too. Level buffers are then
concatenated, schedule states are combined with bitwise OR, and a single
bottom-up pass compacts every level holding at least ``B`` items.
"""

from __future__ import annotations

import math

from . import params as P
from .compactor import trailing_ones
from .errors import ConsumedError, InvariantError, MergeError
from .rng import CoinSource
from .storage import LevelSet


class MergeStats:
    """Peak buffer occupancy observed at compaction time, as a multiple of ``B``."""

    def __init__(self):
        self.peak_ratio = 0.0
        self.compactions = 0

    def observe(self, size, B):
        self.compactions += 1
        self.peak_ratio = max(self.peak_ratio, size / B)


def occupancy_cap(B):
    return math.ceil(3.5 * B)


def perform_compaction(levels: LevelSet, h, start, coin, B, stats=None):
    """Compact ``levels.items[h][start:]`` (0-based) into level ``h + 1``."""
    seq = levels.items[h]
    if len(seq) > occupancy_cap(B):
        raise InvariantError(f"level {h} holds {len(seq)} items at compaction, cap is {occupancy_cap(B)}")
    if stats is not None:
        stats.observe(len(seq), B)
    if h == levels.H:
        levels.open_level()
    levels.items[h] = seq[:start]
    levels.items[h + 1] = levels.merge_sorted(levels.items[h + 1], seq[start + coin :: 2])
    levels.sigmas[h] += 1
    levels.ncomp[h] += 1


def special_compactions_on(levels: LevelSet, B, coins, stats=None):
    """Shrink every level below the top to at most ``B/2`` items."""
    half = B // 2
    for h in range(levels.H):
        if len(levels.items[h]) > half:
            perform_compaction(levels, h, half, coins(), B, stats)


def scheduled_pass(levels: LevelSet, B, k, coins, stats=None):
    """One bottom-up pass compacting each level that holds ``>= B`` items."""
    h = 0
    while h <= levels.H:
        if len(levels.items[h]) >= B:
            L = min((trailing_ones(levels.sigmas[h]) + 1) * k, B // 2)
            perform_compaction(levels, h, B - L, coins(), B, stats)
        h += 1


def special_compactions(sketch, stats=None):
    """Run special compactions on ``sketch`` in place (mergeable mode only)."""
    sketch._check_live()
    if sketch.params.mode is not P.Mode.MERGEABLE:
        raise MergeError("special compactions need a MERGEABLE sketch")
    levels = sketch._store.export()
    coins = CoinSource(sketch.seed, sketch.coins_used)
    special_compactions_on(levels, sketch.params.B, coins, stats)
    # the top level may now exceed B; it stays in the packed form only after a pass
    sketch._load(levels, sketch.params, coins.used, allow_overfull=True)


def _check_compatible(a, b):
    for s in (a, b):
        if s._consumed:
            raise ConsumedError("sketch was already consumed by a merge")
        if s.params.mode is not P.Mode.MERGEABLE:
            raise MergeError(f"only MERGEABLE sketches can be merged, got {s.params.mode.name}")
    if a is b:
        raise MergeError("cannot merge a sketch with itself")
    if a.params.k_hat != b.params.k_hat:
        raise MergeError(f"k_hat differs: {a.params.k_hat} vs {b.params.k_hat}")
    if a.backend != b.backend or a.key is not b.key:
        raise MergeError("sketches order their items differently")


def _order(a, b):
    # swap rule: more levels wins; ties resolved without looking at argument order
    ka = (a.H, a.params.N, a.n, a.seed, a.coins_used)
    kb = (b.H, b.params.N, b.n, b.seed, b.coins_used)
    return (a, b) if ka >= kb else (b, a)


def merge(a, b, stats=None):
    """Merge two sketches into a new one; both inputs are consumed."""
    _check_compatible(a, b)
    target, source = _order(a, b)
    tp, sp = target.params, source.params
    total = target.n + source.n
    coins = CoinSource(target.seed, target.coins_used)

    tl = target._store.export()
    sl = source._store.export()
    need = max(total, sp.N)
    if tp.N < need:
        special_compactions_on(tl, tp.B, coins, stats)
        while tp.N < need:
            tp = P.grow(tp)
    if sp.N < tp.N:
        special_compactions_on(sl, sp.B, coins, stats)

    while tl.H < sl.H:
        tl.open_level()
    for h in range(sl.H + 1):
        tl.items[h] = tl.merge_sorted(tl.items[h], sl.items[h])
        tl.sigmas[h] |= sl.sigmas[h]
        tl.ncomp[h] += sl.ncomp[h]
    scheduled_pass(tl, tp.B, tp.k, coins, stats)

    result = target._spawn(tp, total, tl, coins.used)
    a._consumed = True
    b._consumed = True
    return result
