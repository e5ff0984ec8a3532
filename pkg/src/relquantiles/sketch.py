"""The full sketch: a cascade of relative-compactors with rank queries."""

from __future__ import annotations

import math

import numpy as np

from . import params as P
from .compactor import CompactorState
from .errors import ConsumedError, InputError, InvariantError, QueryError
from .merge import merge as _merge, scheduled_pass, special_compactions_on
from .rng import MASK64, CoinSource
from .storage import FloatLevels, ObjectLevels


class Sketch:
    """Streaming quantile sketch with relative rank error.

    With probability at least ``1 - delta`` the estimate returned by
    :meth:`rank` for a fixed query ``y`` is within ``eps * R(y)`` of the
    true rank ``R(y)``, the number of ingested items ``<= y``.

    Args:
        eps: relative accuracy in ``(0, 1]``.
        delta: failure probability in ``(0, 0.5]``.
        mode: ``"mergeable"`` (default, no length needed), ``"streaming"``
            or ``"highconf"``; the last two need ``n``.
        n: maximum stream length for the known-length modes.
        seed: seed of the coin stream.
        key: sort key for non-float items. Leave unset for float64 data,
            which uses the compiled kernels. Wrap a comparator with
            :func:`functools.cmp_to_key`.
        all_quantiles: tighten ``eps``/``delta`` so the guarantee holds for
            every query simultaneously (needs ``n``).
        params: explicit :class:`~relquantiles.params.Params`, overriding
            ``eps``/``delta``/``mode``/``n``.
        backend: ``"float"`` or ``"object"``; defaults to ``"float"`` unless
            ``key`` is given.
    """

    def __init__(
        self,
        eps=None,
        delta=None,
        mode="mergeable",
        n=None,
        seed=0,
        *,
        key=None,
        all_quantiles=False,
        params=None,
        backend=None,
        tracer=None,
    ):
        if params is None:
            if all_quantiles:
                if n is None:
                    raise P.ParameterError("n", "the all-quantiles adjustment needs n")
                eps, delta = P.all_quantiles_adjust(eps, delta, n)
            params = P.derive(mode, eps, delta, n)
        if backend is None:
            backend = "float" if key is None and tracer is None else "object"
        if backend not in ("float", "object"):
            raise ValueError(f"unknown backend {backend!r}")
        self._params = params
        self._seed = int(seed) & MASK64
        self._n = 0
        self._key = key
        self._backend = backend
        self._consumed = False
        if backend == "float":
            self._store = FloatLevels(params.B)
        else:
            self._store = ObjectLevels(params, key, tracer, self._seed)

    # -- introspection -----------------------------------------------------

    @property
    def params(self) -> P.Params:
        return self._params

    @property
    def n(self) -> int:
        return self._n

    @property
    def H(self) -> int:
        return self._store.H

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def coins_used(self) -> int:
        return self._store.coins

    @property
    def key(self):
        return self._key

    @property
    def backend(self) -> str:
        return self._backend

    @property
    def consumed(self) -> bool:
        return self._consumed

    def level_sizes(self):
        return [len(self._store.level(h)) for h in range(self.H + 1)]

    def sigmas(self):
        return [self._store.sigma(h) for h in range(self.H + 1)]

    def level_items(self, h):
        """Sorted contents of level ``h`` (a copy)."""
        return list(self._store.level(h)) if self._backend == "object" else self._store.level(h).copy()

    def compactors(self):
        """Snapshot of every level as a :class:`CompactorState`."""
        p = self._params
        return [
            CompactorState(
                h, p.k, p.B, self._store.sigma(h), list(self._store.level(h)),
                self._store.compactions(h), self._key,
            )
            for h in range(self.H + 1)
        ]

    def stored_items(self) -> int:
        return sum(self.level_sizes())

    def stored_values(self):
        """All stored items in ascending order, ignoring weights."""
        items, _ = self._store.weighted_items()
        return items

    def total_weight(self) -> int:
        """``sum 2^h * |level h|``; equals ``n`` unless an odd-sized range was compacted."""
        return sum(size << h for h, size in enumerate(self.level_sizes()))

    def __repr__(self):
        p = self._params
        return (
            f"Sketch(mode={p.mode.name}, eps={p.eps}, delta={p.delta}, n={self._n}, "
            f"N={p.N}, k={p.k}, B={p.B}, H={self.H}, stored={self.stored_items()})"
        )

    # -- updates -------------------------------------------------------------

    def _check_live(self):
        if self._consumed:
            raise ConsumedError("sketch was consumed by a merge")

    def update(self, item):
        self.update_many([item])

    def update_many(self, items):
        """Ingest ``items`` in order; equivalent to calling :meth:`update` on each."""
        self._check_live()
        values = self._store.prepare(items)
        m = len(values)
        mergeable = self._params.mode is P.Mode.MERGEABLE
        if not mergeable and self._n + m > self._params.N:
            raise InputError(
                f"stream length {self._n + m} exceeds the declared n={self._params.N} "
                f"of a {self._params.mode.name} sketch"
            )
        i = 0
        while i < m:
            if mergeable and self._n >= self._params.N:
                self._grow()
            stop = m if not mergeable else min(m, i + self._params.N - self._n)
            self._store.ingest(values, i, stop, self._params, self._seed)
            self._n += stop - i
            i = stop

    def _grow(self):
        levels = self._store.export()
        coins = CoinSource(self._seed, self.coins_used)
        special_compactions_on(levels, self._params.B, coins)
        p = P.grow(self._params)
        scheduled_pass(levels, p.B, p.k, coins)
        self._load(levels, p, coins.used)

    def _load(self, levels, params, coins, allow_overfull=False):
        self._store.load(levels, params, coins, allow_overfull)
        self._params = params

    def _spawn(self, params, n, levels, coins):
        out = Sketch.__new__(Sketch)
        out._params = params
        out._seed = self._seed
        out._n = n
        out._key = self._key
        out._backend = self._backend
        out._consumed = False
        if self._backend == "float":
            out._store = FloatLevels(params.B)
        else:
            out._store = ObjectLevels(params, self._key, self._store.tracer, self._seed)
        out._store.load(levels, params, coins)
        return out

    @classmethod
    def _restore(cls, params, seed, n, coins, levels):
        """Rebuild a float sketch from decoded state."""
        out = cls(params=params, seed=seed)
        out._n = n
        out._store.load(levels, params, coins)
        return out

    def merge(self, other, stats=None):
        """Return the merge of ``self`` and ``other``; both are consumed."""
        return _merge(self, other, stats)

    # -- queries -------------------------------------------------------------

    def rank(self, y) -> int:
        """Estimated number of ingested items ``<= y``."""
        self._check_live()
        return self._store.rank(y)

    def ranks(self, ys):
        """Vectorized :meth:`rank`; returns an int64 array."""
        self._check_live()
        return self._store.ranks(ys)

    def quantile(self, r):
        """Smallest stored item whose estimated rank is at least ``r``."""
        self._check_live()
        if self._n == 0:
            raise QueryError("quantile of an empty sketch")
        if not 1 <= r <= self._n:
            raise QueryError(f"rank {r} outside [1, {self._n}]")
        items, weights = self._store.weighted_items()
        cum = np.cumsum(weights)
        # odd-sized merge compactions can leave the total weight slightly below n
        idx = min(int(np.searchsorted(cum, r, side="left")), len(cum) - 1)
        item = items[idx]
        return float(item) if self._backend == "float" else item

    def cdf(self, points):
        """``[(y, rank(y) / n)]`` for each point, sorted by ``y``; fractions are capped at 1."""
        self._check_live()
        if self._n == 0:
            raise QueryError("cdf of an empty sketch")
        pts = sorted(points, key=self._key)
        if not pts:
            return []
        rs = self._store.ranks(pts)
        # odd-sized compactions can push an estimate slightly past n
        return [(y, min(1.0, int(r) / self._n)) for y, r in zip(pts, rs)]

    # -- invariants ----------------------------------------------------------

    def check_invariants(self):
        """Raise :class:`InvariantError` if any structural invariant fails."""
        p = self._params
        problems = []
        if self._n > p.N:
            problems.append(f"n={self._n} exceeds N={p.N}")
        for h in range(self.H + 1):
            seq = self._store.level(h)
            if len(seq) > p.B:
                problems.append(f"level {h} holds {len(seq)} > B={p.B} items")
            if self._backend == "float":
                if np.any(np.diff(seq) < 0):
                    problems.append(f"level {h} is not sorted")
            else:
                keys = [x if self._key is None else self._key(x) for x in seq]
                if any(b < a for a, b in zip(keys, keys[1:])):
                    problems.append(f"level {h} is not sorted")
            if self._store.sigma(h) * p.k > p.N:
                problems.append(f"level {h} sigma={self._store.sigma(h)} exceeds N/k")
        if p.mode is not P.Mode.MERGEABLE and self._n > 0:
            bound = max(0, math.ceil(math.log2(self._n / p.B))) + 1
            if self.H > bound:
                problems.append(f"H={self.H} exceeds level bound {bound}")
        if problems:
            raise InvariantError("; ".join(problems))
