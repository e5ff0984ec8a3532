"""Ingest kernels for float64 sketches.

Two interchangeable implementations of the compactor cascade operate on
the same packed state:

* ``numba`` -- the cascade compiled with ``numba.njit``, with a radix
  sort for buffer tails and lazy merging of sorted runs;
* ``numpy`` -- a chunked path that copies runs of items into free buffer
  space and only drops to Python at compactions.

Both draw coins in the same order (depth first, exactly as a recursive
insert would) and therefore produce bit-identical sketches. The numba
path is used when numba imports and ``RELQUANTILES_DISABLE_NUMBA`` is
unset or ``0``; :func:`set_backend` overrides the choice at runtime.

Packed state, one row per level ``h``:

``buf[h, :cnt[h]]``
    buffer contents; ``buf[h, :srt[h]]`` is sorted, the rest is a tail
    that is merged in at compactions and fully at the end of every kernel
    call, so between calls each row is sorted.
``sig[h]``, ``ncomp[h]``
    schedule state and number of compactions performed.
``pend[h]``, ``plen[h]``, ``ppos[h]``
    items promoted into level ``h`` that are still waiting to be inserted.
``meta``
    ``[H, coins_used]``.
"""

from __future__ import annotations

import os

import numpy as np

from .compactor import trailing_ones
from .rng import GAMMA, MIX1, MIX2, coin_bit

DISABLE_ENV = "RELQUANTILES_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None


def _env_disabled():
    return os.environ.get(DISABLE_ENV, "").strip().lower() not in ("", "0", "false", "no")


_backend = "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"


def get_backend():
    return _backend


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous


# ---------------------------------------------------------------------------
# numba path

_G = np.uint64(GAMMA)
_M1 = np.uint64(MIX1)
_M2 = np.uint64(MIX2)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_S63 = np.uint64(63)


def _coin_nb(seed, index):
    z = seed + np.uint64(index + 1) * _G
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    z = z ^ (z >> _S31)
    return np.int64(z >> _S63)


_RADIX_MIN = 64
_SIDE_MAX_DIV = 8  # fold the side run once it exceeds B / 8
_SIGN = np.uint64(1) << np.uint64(63)
_ALL = np.uint64(0xFFFFFFFFFFFFFFFF)
_BYTE = np.uint64(0xFF)


def _radix_sort_nb(values):
    # LSD radix on order-preserving keys; inputs are finite with -0.0 folded
    # into 0.0, so key order equals float order. numba's sort is far slower
    # than numpy's at buffer sizes.
    n = values.size
    keys = values.copy().view(np.uint64)
    for i in range(n):
        if keys[i] & _SIGN:
            keys[i] = keys[i] ^ _ALL
        else:
            keys[i] = keys[i] | _SIGN
    tmp = np.empty_like(keys)
    counts = np.empty(256, np.int64)
    for p in range(8):
        shift = np.uint64(8 * p)
        counts[:] = 0
        for i in range(n):
            counts[(keys[i] >> shift) & _BYTE] += 1
        if counts[(keys[0] >> shift) & _BYTE] == n:
            continue
        total = 0
        for b in range(256):
            c = counts[b]
            counts[b] = total
            total += c
        for i in range(n):
            b = (keys[i] >> shift) & _BYTE
            tmp[counts[b]] = keys[i]
            counts[b] += 1
        keys, tmp = tmp, keys
    for i in range(n):
        if keys[i] & _SIGN:
            keys[i] = keys[i] ^ _SIGN
        else:
            keys[i] = keys[i] ^ _ALL
    return keys.view(np.float64)


def _sorted_copy_nb(values):
    if values.size >= _RADIX_MIN:
        return _radix_sort_nb(values)
    return np.sort(values)


def _merge_back_nb(row, lo, q, tail):
    # merge sorted row[lo:q] with sorted ``tail`` into row[lo:q + len(tail)],
    # back to front so nothing unread is overwritten
    i = q - 1
    j = tail.size - 1
    w = q + tail.size - 1
    while j >= 0:
        if i >= lo and row[i] > tail[j]:
            row[w] = row[i]
            i -= 1
        else:
            row[w] = tail[j]
            j -= 1
        w -= 1


def _settle_row_nb(buf, h, lo, hi):
    # merge the sorted tail into the sorted prefix
    if lo < hi:
        _merge_back_nb(buf[h], 0, lo, _sorted_copy_nb(buf[h, lo:hi]))


def _compact_nb(buf, cnt, srt, side, sig, ncomp, pend, plen, ppos, meta, h, B, k, seed):
    # Within a kernel call a row is a sorted main run row[:p], a sorted side
    # run row[p:p+side[h]] and an unsorted tail. Only the top of the two runs
    # is merged here; the side run is folded into the main run when it gets long.
    row = buf[h]
    c = cnt[h]
    p = srt[h]
    q = p + side[h]
    if c > q:
        _merge_back_nb(row, p, q, _sorted_copy_nb(row[q:c]))
    s = sig[h]
    z = 0
    while s & 1:
        z += 1
        s >>= 1
    L = (z + 1) * k
    if L > B // 2:
        L = B // 2
    start = B - L
    # take the c - start largest items from the back of both runs
    take = c - start
    top = np.empty(take, np.float64)
    i = p - 1
    j = c - 1
    for w in range(take - 1, -1, -1):
        if j < p or (i >= 0 and row[i] > row[j]):
            top[w] = row[i]
            i -= 1
        else:
            top[w] = row[j]
            j -= 1
    coin = _coin_nb(seed, meta[1])
    meta[1] += 1
    m = 0
    for t in range(coin, take, 2):
        pend[h + 1, m] = top[t]
        m += 1
    plen[h + 1] = m
    ppos[h + 1] = 0
    # close the gap left in the main run
    p_new = i + 1
    rest = j + 1 - p
    for t in range(rest):
        row[p_new + t] = row[p + t]
    srt[h] = p_new
    side[h] = rest
    cnt[h] = start
    if rest * _SIDE_MAX_DIV > B:
        _settle_row_nb(buf, h, p_new, start)
        srt[h] = start
        side[h] = 0
    sig[h] += 1
    ncomp[h] += 1
    if h == meta[0]:
        meta[0] = h + 1


def _ingest_nb(values, i0, i1, buf, cnt, srt, sig, ncomp, pend, plen, ppos, meta, B, k, seed):
    # stores are inlined and runs are block-copied: a call per promoted item
    # costs more than the item itself
    rows = buf.shape[0]
    side = np.zeros(rows, np.int64)
    i = i0
    while i < i1:
        free = B - cnt[0]
        if free > 0:
            take = min(free, i1 - i)
            buf[0, cnt[0] : cnt[0] + take] = values[i : i + take]
            cnt[0] += take
            i += take
            continue
        # one item opens at most one new level
        if meta[0] + 2 > rows:
            break
        _compact_nb(buf, cnt, srt, side, sig, ncomp, pend, plen, ppos, meta, 0, B, k, seed)
        buf[0, cnt[0]] = values[i]
        cnt[0] += 1
        i += 1
        h = 1
        while h > 0:
            left = plen[h] - ppos[h]
            if left == 0:
                h -= 1
                continue
            take = min(B - cnt[h], left)
            if take > 0:
                buf[h, cnt[h] : cnt[h] + take] = pend[h, ppos[h] : ppos[h] + take]
                cnt[h] += take
                ppos[h] += take
                continue
            _compact_nb(buf, cnt, srt, side, sig, ncomp, pend, plen, ppos, meta, h, B, k, seed)
            buf[h, cnt[h]] = pend[h, ppos[h]]
            cnt[h] += 1
            ppos[h] += 1
            h += 1
    for h in range(meta[0] + 1):
        _settle_row_nb(buf, h, srt[h], cnt[h])
        srt[h] = cnt[h]
    return i


if HAVE_NUMBA:
    _coin_nb = numba.njit(cache=True)(_coin_nb)
    _radix_sort_nb = numba.njit(cache=True)(_radix_sort_nb)
    _sorted_copy_nb = numba.njit(cache=True)(_sorted_copy_nb)
    _settle_row_nb = numba.njit(cache=True)(_settle_row_nb)
    _merge_back_nb = numba.njit(cache=True)(_merge_back_nb)
    _compact_nb = numba.njit(cache=True)(_compact_nb)
    _ingest_nb = numba.njit(cache=True)(_ingest_nb)


def coin_bit_numba(seed, index):
    """The numba coin, exposed for differential testing against :func:`rng.coin_bit`."""
    return int(_coin_nb(np.uint64(seed), np.int64(index)))


# ---------------------------------------------------------------------------
# numpy path


def _compact_np(buf, cnt, srt, sig, ncomp, meta, h, B, k, seed):
    c = cnt[h]
    buf[h, :c] = np.sort(buf[h, :c], kind="stable")
    L = min((trailing_ones(int(sig[h])) + 1) * k, B // 2)
    start = B - L
    coin = coin_bit(seed, int(meta[1]))
    meta[1] += 1
    promoted = buf[h, start + coin : c : 2].copy()
    cnt[h] = start
    srt[h] = start
    sig[h] += 1
    ncomp[h] += 1
    if h == meta[0]:
        meta[0] = h + 1
    return promoted


def _insert_run_np(items, h, buf, cnt, srt, sig, ncomp, meta, B, k, seed):
    pos = 0
    m = len(items)
    while pos < m:
        free = B - cnt[h]
        if free > 0:
            take = min(free, m - pos)
            buf[h, cnt[h] : cnt[h] + take] = items[pos : pos + take]
            cnt[h] += take
            pos += take
            continue
        promoted = _compact_np(buf, cnt, srt, sig, ncomp, meta, h, B, k, seed)
        buf[h, cnt[h]] = items[pos]
        cnt[h] += 1
        pos += 1
        _insert_run_np(promoted, h + 1, buf, cnt, srt, sig, ncomp, meta, B, k, seed)


def _ingest_np(values, i0, i1, buf, cnt, srt, sig, ncomp, pend, plen, ppos, meta, B, k, seed):
    rows = buf.shape[0]
    seed = int(seed)
    i = i0
    while i < i1:
        free = B - cnt[0]
        if free > 0:
            take = min(free, i1 - i)
            buf[0, cnt[0] : cnt[0] + take] = values[i : i + take]
            cnt[0] += take
            i += take
            continue
        if meta[0] + 2 > rows:
            break
        promoted = _compact_np(buf, cnt, srt, sig, ncomp, meta, 0, B, k, seed)
        buf[0, cnt[0]] = values[i]
        cnt[0] += 1
        i += 1
        _insert_run_np(promoted, 1, buf, cnt, srt, sig, ncomp, meta, B, k, seed)
    for h in range(int(meta[0]) + 1):
        if srt[h] < cnt[h]:
            buf[h, : cnt[h]] = np.sort(buf[h, : cnt[h]], kind="stable")
            srt[h] = cnt[h]
    return i


def ingest(values, i0, i1, state, B, k, seed, backend=None):
    """Run the selected kernel on ``values[i0:i1]``; returns the stop index.

    The kernel stops early when ``state`` needs another row; the caller
    grows the arrays and calls again.
    """
    backend = backend or _backend
    if backend == "numba":
        fn = _ingest_nb
        seed = np.uint64(seed)
    else:
        fn = _ingest_np
    return int(
        fn(
            values, i0, i1, state.buf, state.cnt, state.srt, state.sig, state.ncomp,
            state.pend, state.plen, state.ppos, state.meta, B, k, seed,
        )
    )
