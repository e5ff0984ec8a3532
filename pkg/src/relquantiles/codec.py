"""Binary sketch files (format version 1).

Layout, all integers little-endian::

    magic      4s   b"RQSK"
    version    u8   1
    mode       u8   0 streaming, 1 mergeable, 2 highconf
    item_type  u8   0 = float64
    rng_id     u8
    seed       u64
    eps        f64
    delta      f64
    k_hat      f64  0.0 outside mergeable mode
    N          u64
    n          u64
    k          u32
    B          u32
    H          u16
    coins      u64  coins drawn so far
    H + 1 levels, each:
        sigma  u64
        count  u32
        items  count * f64, ascending

The coin stream is counter based, so ``seed`` and ``coins`` restore it
exactly. Decoding validates every field before allocating anything and
raises :class:`DecodeError` carrying the offset of the offending field.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .errors import DecodeError, ParameterError, SketchError, UnsupportedTypeError
from .params import Mode, Params
from .rng import RNG_ID
from .sketch import Sketch
from .storage import LevelSet, _empty_np, _merge_sorted_np

MAGIC = b"RQSK"
VERSION = 1
ITEM_FLOAT64 = 0

HEADER = struct.Struct("<4sBBBBQdddQQIIH")
COINS = struct.Struct("<Q")
LEVEL = struct.Struct("<QI")

MAX_B = 1 << 28
MAX_H = 62
MAX_N = (1 << 63) - 1
MAX_COINS = 1 << 62

# byte offsets of the header fields, for error reports
_OFF = {}
_pos = 0
for _name, _fmt in zip(
    ("magic", "version", "mode", "item_type", "rng_id", "seed", "eps", "delta", "k_hat",
     "N", "n", "k", "B", "H"),
    ("4s", "B", "B", "B", "B", "Q", "d", "d", "d", "Q", "Q", "I", "I", "H"),
):
    _OFF[_name] = _pos
    _pos += struct.calcsize("<" + _fmt)
_OFF["coins"] = HEADER.size
del _pos, _name, _fmt


def serialize(sketch: Sketch) -> bytes:
    """Encode a float64 sketch."""
    sketch._check_live()
    if sketch.backend != "float":
        raise UnsupportedTypeError("only float64 sketches have a binary encoding")
    p = sketch.params
    if p.N > MAX_N:
        raise SketchError(f"N={p.N} does not fit the file format")
    parts = [
        HEADER.pack(
            MAGIC, VERSION, int(p.mode), ITEM_FLOAT64, RNG_ID, sketch.seed,
            p.eps, p.delta, p.k_hat, p.N, sketch.n, p.k, p.B, sketch.H,
        ),
        COINS.pack(sketch.coins_used),
    ]
    for h in range(sketch.H + 1):
        items = sketch._store.level(h)
        parts.append(LEVEL.pack(sketch._store.sigma(h), len(items)))
        parts.append(np.ascontiguousarray(items, dtype="<f8").tobytes())
    return b"".join(parts)


def _header_params(f):
    def fail(name, msg):
        raise DecodeError(_OFF[name], msg)

    if f["version"] != VERSION:
        fail("version", f"unsupported version {f['version']}")
    try:
        mode = Mode(f["mode"])
    except ValueError:
        fail("mode", f"unknown mode {f['mode']}")
    if f["item_type"] != ITEM_FLOAT64:
        fail("item_type", f"unknown item type {f['item_type']}")
    if f["rng_id"] != RNG_ID:
        fail("rng_id", f"unknown generator {f['rng_id']}")
    if not (math.isfinite(f["eps"]) and 0.0 < f["eps"] <= 1.0):
        fail("eps", f"eps {f['eps']!r} outside (0, 1]")
    if not (math.isfinite(f["delta"]) and 0.0 < f["delta"] <= 0.5):
        fail("delta", f"delta {f['delta']!r} outside (0, 0.5]")
    k_hat = f["k_hat"]
    if mode is Mode.MERGEABLE:
        if not (math.isfinite(k_hat) and k_hat > 0.0):
            fail("k_hat", f"k_hat {k_hat!r} must be positive in mergeable mode")
    elif k_hat != 0.0:
        fail("k_hat", f"k_hat must be 0 outside mergeable mode, got {k_hat!r}")
    if not 1 <= f["N"] <= MAX_N:
        fail("N", f"N={f['N']} out of range")
    if f["n"] > f["N"]:
        fail("n", f"n={f['n']} exceeds N={f['N']}")
    if f["B"] > MAX_B:
        fail("B", f"B={f['B']} exceeds {MAX_B}")
    if f["H"] > MAX_H:
        fail("H", f"H={f['H']} exceeds {MAX_H}")
    try:
        return Params(mode, f["eps"], f["delta"], f["N"], f["k"], f["B"], k_hat)
    except ParameterError as exc:
        fail(exc.field, str(exc))


def deserialize(data) -> Sketch:
    """Decode bytes produced by :func:`serialize`."""
    data = bytes(data)
    total = len(data)
    if total < HEADER.size + COINS.size:
        raise DecodeError(total, f"truncated header: {total} bytes")
    fields = dict(zip(
        ("magic", "version", "mode", "item_type", "rng_id", "seed", "eps", "delta", "k_hat",
         "N", "n", "k", "B", "H"),
        HEADER.unpack_from(data, 0),
    ))
    if fields["magic"] != MAGIC:
        raise DecodeError(0, f"bad magic {fields['magic']!r}")
    params = _header_params(fields)
    (coins,) = COINS.unpack_from(data, HEADER.size)
    if coins > MAX_COINS:
        raise DecodeError(_OFF["coins"], f"coin counter {coins} out of range")

    H = fields["H"]
    pos = HEADER.size + COINS.size
    items, sigmas = [], []
    for h in range(H + 1):
        if total - pos < LEVEL.size:
            raise DecodeError(pos, f"truncated level {h} header")
        sigma, count = LEVEL.unpack_from(data, pos)
        if sigma * params.k > params.N:
            raise DecodeError(pos, f"level {h} sigma={sigma} exceeds N/k")
        if count > params.B:
            raise DecodeError(pos + 8, f"level {h} holds {count} > B={params.B} items")
        pos += LEVEL.size
        if total - pos < 8 * count:
            raise DecodeError(pos, f"level {h} declares {count} items, {total - pos} bytes left")
        seq = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64)
        bad = np.flatnonzero(~np.isfinite(seq))
        if bad.size:
            raise DecodeError(pos + 8 * int(bad[0]), f"level {h} holds a non-finite item")
        down = np.flatnonzero(np.diff(seq) < 0)
        if down.size:
            raise DecodeError(pos + 8 * int(down[0] + 1), f"level {h} is not sorted")
        items.append(seq + 0.0)
        sigmas.append(int(sigma))
        pos += 8 * count
    if pos != total:
        raise DecodeError(pos, f"{total - pos} trailing bytes")

    # compaction counts are not stored; each level's schedule state stands in for them
    levels = LevelSet(items, sigmas, list(sigmas), _merge_sorted_np, _empty_np)
    sketch = Sketch._restore(params, fields["seed"], fields["n"], coins, levels)
    try:
        sketch.check_invariants()
    except SketchError as exc:
        raise DecodeError(_OFF["H"], str(exc)) from None
    return sketch
