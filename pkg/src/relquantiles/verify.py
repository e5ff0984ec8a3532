"""Ground-truth oracle and statistical checks for sketches.

Everything here recomputes exact answers from the raw data and never
trusts the sketch under test. Trials are seeded, so every report is
reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import params as P
from .compactor import trailing_ones
from .errors import InvariantError
from .merge import MergeStats
from .sketch import Sketch

DISTRIBUTIONS = ("uniform", "sorted", "reversed", "zipf")


def exact_rank(data, y) -> int:
    """Number of items in ``data`` that are ``<= y``."""
    return sum(1 for x in data if x <= y)


def exact_ranks(sorted_data, ys):
    """Bulk :func:`exact_rank` over an ascending float array."""
    return np.searchsorted(sorted_data, np.asarray(ys, dtype=np.float64), side="right").astype(np.int64)


def make_data(distribution, n, seed=0):
    """A float64 stream of length ``n``.

    ``zipf`` draws heavy-tailed integers, so it is full of duplicates.
    """
    rng = np.random.default_rng(seed)
    if distribution == "uniform":
        return rng.random(n)
    if distribution == "sorted":
        return np.sort(rng.random(n))
    if distribution == "reversed":
        return np.sort(rng.random(n))[::-1].copy()
    if distribution == "zipf":
        return np.minimum(rng.zipf(1.3, n), 10**6).astype(np.float64)
    raise ValueError(f"unknown distribution {distribution!r}")


def trial_seed(base, trial):
    return (base * 1_000_003 + trial) & ((1 << 64) - 1)


@dataclass
class TrialConfig:
    eps: float
    delta: float
    n: int
    trials: int = 100
    distribution: str = "uniform"
    query_ranks: list | None = None
    mode: str = "streaming"
    seed: int = 0
    data_seed: int = 12345


@dataclass
class QueryResult:
    y: float
    exact_rank: int
    estimate: int
    relative_error: float
    failed: bool


@dataclass
class TrialReport:
    seed: int
    n: int
    eps: float
    delta: float
    queries: list = field(default_factory=list)

    @property
    def failures(self):
        return sum(q.failed for q in self.queries)


@dataclass
class RankSummary:
    rank: int
    trials: int
    failures: int
    failure_rate: float
    mean_err: float
    std_err: float
    band: float

    @property
    def within_band(self):
        return self.failure_rate <= self.band

    @property
    def unbiased(self):
        # mean error within 4 standard errors of zero
        return abs(self.mean_err) <= 4.0 * self.std_err / math.sqrt(self.trials)

    def record(self):
        return {
            "rank": self.rank, "trials": self.trials, "failures": self.failures,
            "mean_err": self.mean_err, "band": self.band,
        }


@dataclass
class FailureRateReport:
    params: P.Params
    ranks: list
    weight_exact: int  # trials with rank(max item) == n
    prefix_exact: int  # trials answering every low-rank probe exactly
    trials: int


def failure_band(delta, trials, factor=1.0):
    """Binomial upper band ``factor*delta + 3 sqrt(delta (1 - delta) / trials)``."""
    return factor * delta + 3.0 * math.sqrt(delta * (1.0 - delta) / trials)


def default_query_ranks(B, n):
    ranks = []
    j = 0
    while (1 << j) <= n:
        if (1 << j) > B // 2:
            ranks.append(1 << j)
        j += 1
    return ranks


def query_points(sorted_data, ranks):
    """The item of each requested rank, with its exact rank under ``<=``."""
    ys = sorted_data[np.asarray(ranks, dtype=np.int64) - 1]
    return ys, exact_ranks(sorted_data, ys)


def low_rank_probes(sorted_data, B, count=64):
    """Query points whose exact rank is at most ``B/2``, with those ranks."""
    exact_all = exact_ranks(sorted_data, sorted_data)
    candidates = sorted_data[exact_all <= B // 2]
    if len(candidates) == 0:
        return candidates, exact_all[:0]
    idx = np.unique(np.round(np.linspace(0, len(candidates) - 1, count)).astype(np.int64))
    ys = candidates[idx]
    return ys, exact_ranks(sorted_data, ys)


def score(sketch, ys, exact, eps, seed):
    est = sketch.ranks(ys)
    err = est - exact
    out = TrialReport(seed, sketch.n, eps, sketch.params.delta)
    for y, r, e, d in zip(ys, exact, est, err):
        out.queries.append(QueryResult(float(y), int(r), int(e), float(d / r), bool(abs(d) >= eps * r)))
    return out


def summarize(ranks, errors, eps, exact, delta, factor=1.0):
    """Fold a ``trials x queries`` error matrix into per-rank summaries."""
    errors = np.asarray(errors, dtype=np.float64)
    trials = errors.shape[0]
    band = failure_band(delta, trials, factor)
    out = []
    for i, r in enumerate(ranks):
        col = errors[:, i]
        fails = int(np.sum(np.abs(col) >= eps * exact[i]))
        out.append(RankSummary(
            int(r), trials, fails, fails / trials, float(col.mean()),
            float(col.std(ddof=1)) if trials > 1 else 0.0, band,
        ))
    return out


def failure_rate(config: TrialConfig, band_factor=1.0) -> FailureRateReport:
    """Per-rank failure fractions over independently seeded builds on one dataset."""
    if config.trials < 100:
        raise ValueError("failure_rate needs at least 100 trials")
    data = make_data(config.distribution, config.n, config.data_seed)
    srt = np.sort(data)
    params = P.derive(config.mode, config.eps, config.delta, config.n)
    ranks = config.query_ranks or default_query_ranks(params.B, config.n)
    ys, exact = query_points(srt, ranks)
    low_ys, low_exact = low_rank_probes(srt, params.B)
    top = srt[-1]
    errors = np.empty((config.trials, len(ranks)))
    weight_exact = prefix_exact = 0
    for t in range(config.trials):
        s = Sketch(params=params, seed=trial_seed(config.seed, t))
        s.update_many(data)
        errors[t] = s.ranks(ys) - exact
        weight_exact += s.rank(top) == config.n
        prefix_exact += bool(np.array_equal(s.ranks(low_ys), low_exact))
    return FailureRateReport(
        params, summarize(ranks, errors, config.eps, exact, config.delta, band_factor),
        weight_exact, prefix_exact, config.trials,
    )


# ---------------------------------------------------------------------------
# compaction schedule


def schedule_check(m, schedule=trailing_ones):
    """Check every run of states ``0 .. 2^m - 1``.

    A state compacting ``j`` sections must be separated from the previous
    ``j``-section state by one compacting more than ``j`` sections.
    """
    if not 1 <= m <= 20:
        raise ValueError("m must lie in [1, 20]")
    last_open = {}  # j -> True while no larger compaction has followed the last j-compaction
    for sigma in range(1 << m):
        j = schedule(sigma) + 1
        if last_open.get(j):
            return False
        last_open[j] = True
        for smaller in list(last_open):
            if smaller < j:
                last_open[smaller] = False
    return True


# ---------------------------------------------------------------------------
# merge trees

TREES = ("random", "left-deep", "balanced")


def _merge_checked(a, b, stats):
    out = a.merge(b, stats)
    out.check_invariants()
    if stats.peak_ratio > 3.5:
        raise InvariantError(f"buffer reached {stats.peak_ratio:.2f} B during a merge")
    return out


def merge_along(sketches, tree, rng=None, stats=None):
    """Merge a list of sketches pairwise following ``tree``."""
    stats = stats or MergeStats()
    pool = list(sketches)
    if tree == "left-deep":
        acc = pool[0]
        for s in pool[1:]:
            acc = _merge_checked(acc, s, stats)
        return acc
    if tree == "balanced":
        while len(pool) > 1:
            nxt = [_merge_checked(pool[i], pool[i + 1], stats) for i in range(0, len(pool) - 1, 2)]
            if len(pool) % 2:
                nxt.append(pool[-1])
            pool = nxt
        return pool[0]
    if tree == "random":
        rng = rng or np.random.default_rng(0)
        while len(pool) > 1:
            i, j = rng.choice(len(pool), 2, replace=False)
            merged = _merge_checked(pool[i], pool[j], stats)
            pool = [s for t, s in enumerate(pool) if t not in (i, j)] + [merged]
        return pool[0]
    raise ValueError(f"unknown tree {tree!r}")


def shard_sketches(data, shards, params, seed, shard_sizes=None):
    """One sketch per contiguous shard, each with its own seed."""
    if shard_sizes is None:
        bounds = np.linspace(0, len(data), shards + 1).astype(int)
    else:
        bounds = np.cumsum([0] + list(shard_sizes))
    out = []
    for i in range(len(bounds) - 1):
        s = Sketch(params=params, seed=trial_seed(seed, i + 1))
        s.update_many(data[bounds[i] : bounds[i + 1]])
        out.append(s)
    return out


def merge_tree_trial(shards, tree, config: TrialConfig, seed=0, data=None, stats=None):
    """Build per-shard mergeable sketches, merge along ``tree``, score against the oracle.

    With one shard this is a plain streaming build.
    """
    if shards < 1:
        raise ValueError("shards must be positive")
    if data is None:
        data = make_data(config.distribution, config.n, config.data_seed)
    srt = np.sort(data)
    params = P.derive_mergeable(config.eps, config.delta)
    ranks = config.query_ranks or default_query_ranks(params.B, len(data))
    ys, exact = query_points(srt, ranks)
    parts = shard_sketches(data, shards, params, seed)
    merged = merge_along(parts, tree, np.random.default_rng(seed), stats) if shards > 1 else parts[0]
    merged.check_invariants()
    return score(merged, ys, exact, config.eps, seed)


# ---------------------------------------------------------------------------
# important steps


class _Tracer:
    """Records every insertion and compaction per level of an object sketch."""

    def __init__(self):
        self.items = {}
        self.ranges = {}

    def inserted(self, h, x):
        self.items.setdefault(h, []).append(x)

    def compacted(self, h, compacted):
        self.ranges.setdefault(h, []).append(np.asarray(compacted, dtype=np.float64))


@dataclass
class AuditReport:
    y: float
    k: int
    level_ranks: list  # R_h(y): items <= y fed into level h
    important_steps: list  # compactions at level h with an odd count of items <= y

    @property
    def holds(self):
        return all(c * self.k <= r for c, r in zip(self.important_steps, self.level_ranks))


def important_step_audit(stream, ys, params, seed=0):
    """Count important compactions per level for each query ``y``.

    A compaction is important for ``y`` when its range holds an odd number
    of items ``<= y``. Raises :class:`InvariantError` if some level has
    more than ``R_h(y) / k`` of them.
    """
    tracer = _Tracer()
    sketch = Sketch(params=params, seed=seed, backend="object", tracer=tracer)
    sketch.update_many([float(x) for x in stream])
    levels = range(sketch.H + 1)
    fed = [np.asarray(tracer.items.get(h, []), dtype=np.float64) for h in levels]
    reports = []
    for y in ys:
        R = [int(np.sum(f <= y)) for f in fed]
        steps = [sum(int(np.sum(r <= y)) % 2 for r in tracer.ranges.get(h, [])) for h in levels]
        rep = AuditReport(float(y), params.k, R, steps)
        if not rep.holds:
            raise InvariantError(f"important steps {steps} exceed R_h(y)/k for y={y}, R_h={R}")
        reports.append(rep)
    return reports
