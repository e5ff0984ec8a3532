"""A single relative-compactor with the derandomized compaction schedule.

The buffer holds at most ``B`` items, kept sorted. When an item arrives
and the buffer is full, the largest ``L = (z + 1) * k`` items are
compacted, where ``z`` is the number of trailing one bits of the schedule
state ``sigma``: one of the two interleaved halves of that range is
promoted to the next level and the rest is dropped. The smallest ``B/2``
items are never part of a compaction.

This module is the object-level implementation used for arbitrary item
types and for instrumentation. Float sketches run the same schedule
through the array kernels in :mod:`relquantiles.kernels`.

Buffer positions passed to :func:`compact_from` are 1-based.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import InvariantError

ODD = 0  # promote the 1st, 3rd, 5th, ... items of the compacted range
EVEN = 1  # promote the 2nd, 4th, 6th, ... items


def trailing_ones(sigma: int) -> int:
    """Number of consecutive 1 bits at the low end of ``sigma``."""
    return (~sigma & (sigma + 1)).bit_length() - 1


def trailing_zeros(sigma: int) -> int:
    """Number of consecutive 0 bits at the low end of ``sigma`` (0 for ``sigma == 0``)."""
    count = 0
    while sigma and not sigma & 1:
        sigma >>= 1
        count += 1
    return count


@dataclass
class CompactorState:
    level: int
    k: int
    B: int
    sigma: int = 0
    buffer: list = field(default_factory=list)
    compaction_count: int = 0
    key: Callable[[Any], Any] | None = None

    def __len__(self):
        return len(self.buffer)


def compaction_bounds(state: CompactorState) -> tuple[int, int]:
    """Return ``(L, S)``: how many items the next compaction takes and its first slot.

    ``L`` never exceeds ``B/2``; the state bound ``sigma <= N/k`` keeps the
    schedule below that cap whenever the sketch stays within its size bound.
    """
    L = min((trailing_ones(state.sigma) + 1) * state.k, state.B // 2)
    return L, state.B - L + 1


def compact_from(state: CompactorState, start: int, coin: int) -> list:
    """Remove ``buffer[start:]`` (1-based) and return the half selected by ``coin``."""
    size = len(state.buffer)
    if not 1 <= start <= size:
        raise InvariantError(f"compaction start {start} outside buffer of {size} items")
    removed = state.buffer[start - 1 :]
    del state.buffer[start - 1 :]
    state.sigma += 1
    state.compaction_count += 1
    return removed[coin::2]


def insert(
    state: CompactorState,
    item,
    coin_source: Callable[[], int],
    observer: Callable[[CompactorState, list], None] | None = None,
) -> list:
    """Store ``item``, compacting first if the buffer is full.

    Returns the promoted items (empty unless a compaction happened).
    ``observer(state, compacted_range)`` is called just before a
    compaction removes its range.
    """
    promoted = []
    if len(state.buffer) >= state.B:
        _, start = compaction_bounds(state)
        if observer is not None:
            observer(state, state.buffer[start - 1 :])
        promoted = compact_from(state, start, coin_source())
    insort(state.buffer, item, key=state.key)
    return promoted
