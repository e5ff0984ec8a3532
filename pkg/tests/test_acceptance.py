"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Thresholds are fixed up front. A criterion that does not hold stays red;
see the project notes for the analysis of any failure.
"""

import math
import time

import numpy as np
import pytest

from relquantiles import (
    DecodeError,
    MergeStats,
    Sketch,
    SketchError,
    derive_highconf,
    derive_mergeable,
    derive_streaming,
    deserialize,
    serialize,
)
from relquantiles.compactor import trailing_zeros
from relquantiles.verify import (
    DISTRIBUTIONS,
    TREES,
    TrialConfig,
    default_query_ranks,
    exact_ranks,
    failure_band,
    failure_rate,
    important_step_audit,
    make_data,
    merge_along,
    query_points,
    schedule_check,
    shard_sketches,
    summarize,
    trial_seed,
)

STAT_EPS, STAT_DELTA, STAT_N, STAT_TRIALS = 0.1, 0.1, 2**17, 300
BAND = failure_band(STAT_DELTA, STAT_TRIALS)  # 0.1 + 3 * sqrt(0.1 * 0.9 / 300)


def describe_ranks(summaries):
    return ", ".join(f"{s.rank}:{s.failures}/{s.trials}" for s in summaries)


@pytest.fixture(scope="module")
def stat_runs():
    out = {}
    for mode in ("streaming", "mergeable"):
        t0 = time.perf_counter()
        rep = failure_rate(TrialConfig(STAT_EPS, STAT_DELTA, STAT_N, STAT_TRIALS, mode=mode, seed=2024))
        out[mode] = (rep, time.perf_counter() - t0)
    return out


def test_criterion_01_low_ranks_exact(acceptance):
    t0 = time.perf_counter()
    n = 2**18
    data = make_data("uniform", n, 101)
    srt = np.sort(data)
    B0 = derive_mergeable(0.05, 0.1).B
    exact_all = exact_ranks(srt, srt)
    ys = np.concatenate(([srt[0] - 1.0], srt[exact_all <= B0 // 2]))
    expected = exact_ranks(srt, ys)
    exact_trials = 0
    for t in range(100):
        s = Sketch(0.05, 0.1, mode="mergeable", seed=trial_seed(1, t))
        s.update_many(data)
        exact_trials += bool(np.array_equal(s.ranks(ys), expected))
    elapsed = time.perf_counter() - t0
    ok = exact_trials == 100 and elapsed < 30
    acceptance(1, "exact low ranks", ok,
               f"B0={B0}, {len(ys)} probes, {exact_trials}/100 trials exact, {elapsed:.1f}s")
    assert ok


def test_criterion_02_failure_rate(acceptance, stat_runs):
    parts, ok = [], True
    for mode, (rep, elapsed) in stat_runs.items():
        worst = max(s.failure_rate for s in rep.ranks)
        mode_ok = all(s.within_band for s in rep.ranks) and elapsed < 300
        ok &= mode_ok
        parts.append(f"{mode}: worst {worst:.3f} <= {BAND:.3f} ({describe_ranks(rep.ranks)}) {elapsed:.0f}s")
    acceptance(2, "relative-error failure rate", ok, "; ".join(parts))
    assert ok


def test_criterion_03_unbiased(acceptance, stat_runs):
    parts, ok = [], True
    for mode, (rep, _) in stat_runs.items():
        zs = [abs(s.mean_err) / (s.std_err / math.sqrt(s.trials)) if s.std_err else 0.0 for s in rep.ranks]
        ok &= all(s.unbiased for s in rep.ranks)
        parts.append(f"{mode}: max |mean|/SE = {max(zs):.2f} (limit 4)")
    acceptance(3, "unbiased estimates", ok, "; ".join(parts))
    assert ok


def merge_tree_errors(tree, trials, data, ys, exact, params):
    errors = np.empty((trials, len(ys)))
    for t in range(trials):
        seed = trial_seed(77, t)
        parts = shard_sketches(data, 16, params, seed)
        out = merge_along(parts, tree, np.random.default_rng(seed))
        errors[t] = out.ranks(ys) - exact
    return errors


def fuzzed_merge_tree(i, params):
    rng = np.random.default_rng(10_000 + i)
    shards = int(rng.integers(2, 41))
    sizes = rng.integers(0, 30_000, shards)
    sizes[rng.random(shards) < 0.15] = 0
    data = make_data(DISTRIBUTIONS[i % len(DISTRIBUTIONS)], int(sizes.sum()), i)
    tree = TREES[i % len(TREES)]
    stats = MergeStats()
    parts = shard_sketches(data, shards, params, i, shard_sizes=sizes)
    out = merge_along(parts, tree, rng, stats)
    if out.n != len(data):
        raise AssertionError("merged n is wrong")
    return stats.peak_ratio


def test_criterion_04_mergeability(acceptance):
    n = 16 * 2**14
    data = make_data("uniform", n, 404)
    srt = np.sort(data)
    params = derive_mergeable(STAT_EPS, STAT_DELTA)
    ranks = default_query_ranks(params.B, n)
    ys, exact = query_points(srt, ranks)
    parts, ok = [], True
    for tree in TREES:
        errors = merge_tree_errors(tree, STAT_TRIALS, data, ys, exact, params)
        summary = summarize(ranks, errors, STAT_EPS, exact, STAT_DELTA)
        tree_ok = all(s.within_band and s.unbiased for s in summary)
        ok &= tree_ok
        worst = max(s.failure_rate for s in summary)
        parts.append(f"{tree}: worst {worst:.3f}, unbiased={all(s.unbiased for s in summary)}")
    fired, peak = 0, 0.0
    for i in range(100):
        try:
            peak = max(peak, fuzzed_merge_tree(i, params))
        except (AssertionError, SketchError):
            fired += 1
    ok &= fired == 0
    parts.append(f"fuzzed trees: {fired}/100 assertions fired, peak occupancy {peak:.2f}B")
    acceptance(4, "full mergeability", ok, "; ".join(parts))
    assert ok


def test_criterion_05_space_scaling(acceptance):
    eps, delta = 0.05, 0.1

    def bound_shape(n):
        return (1 / eps) * math.log2(eps * n) ** 1.5 * math.sqrt(math.log(1 / delta))

    exps = (14, 16, 18, 20)
    parts, ok = [], True
    for mode in ("streaming", "mergeable"):
        stored = []
        for e in exps:
            n = 2**e
            s = Sketch(eps, delta, mode=mode, n=n, seed=e)
            s.update_many(make_data("uniform", n, e))
            stored.append(s.stored_items())
        C = 1.25 * stored[0] / bound_shape(2**exps[0])
        fits = [m <= C * bound_shape(2**e) for m, e in zip(stored, exps)]
        ratios = []
        for (m1, e1), (m2, e2) in zip(zip(stored, exps), zip(stored[1:], exps[1:])):
            predicted = bound_shape(2**e2) / bound_shape(2**e1)
            ratios.append((m2 / m1) / predicted)
        ratio_ok = [abs(r - 1) <= 0.2 for r in ratios]
        mode_ok = all(fits) and all(ratio_ok) and all(b > a for a, b in zip(stored, stored[1:]))
        ok &= mode_ok
        parts.append(
            f"{mode}: stored={stored}, C={C:.2f}, fits={fits}, "
            f"ratio/predicted={[round(r, 2) for r in ratios]}"
        )
    acceptance(5, "space scaling", ok, "; ".join(parts))
    assert ok


def test_criterion_06_schedule(acceptance):
    passes = [schedule_check(m) for m in range(3, 13)]
    negative = schedule_check(12, trailing_zeros)
    ok = all(passes) and not negative
    acceptance(6, "compaction schedule", ok,
               f"m=3..12 pass={all(passes)}, trailing-zeros control fails={not negative}")
    assert ok


def test_criterion_07_important_steps(acceptance):
    t0 = time.perf_counter()
    n = 2**14
    params = derive_streaming(0.5, 0.1, n)
    rng = np.random.default_rng(7)
    streams = [np.sort(rng.random(n)), np.sort(rng.random(n))[::-1]]
    streams += [rng.random(n) for _ in range(50)]
    audited = violations = steps = 0
    for i, stream in enumerate(streams):
        ys = np.quantile(stream, rng.random(20))
        for rep in important_step_audit(stream, ys, params, seed=i):
            audited += 1
            steps += sum(rep.important_steps)
            violations += not rep.holds
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and audited == 52 * 20 and elapsed < 60
    acceptance(7, "important-step bound", ok,
               f"{audited} queries, {steps} important steps, {violations} violations, {elapsed:.1f}s")
    assert ok


def test_criterion_08_weight_conservation(acceptance, stat_runs):
    rep, _ = stat_runs["streaming"]
    ok = rep.weight_exact == rep.trials
    acceptance(8, "weight conservation", ok, f"rank(max) == n in {rep.weight_exact}/{rep.trials} streaming trials")
    assert ok


def test_criterion_09_high_confidence(acceptance):
    eps, delta, n = 0.2, 1e-6, 2**16
    hand_k = 2**4 * 19  # ceil(log2(ln(1e6)) / 0.2) = ceil(18.94) = 19
    k = derive_highconf(eps, delta, n).k
    rep = failure_rate(TrialConfig(eps, delta, n, 200, mode="highconf", seed=9))
    failures = sum(s.failures for s in rep.ranks)
    ok = failures == 0 and k == hand_k == 16 * math.ceil(math.log2(math.log(1 / delta)) / eps)
    acceptance(9, "high-confidence mode", ok, f"k={k} (expected {hand_k}), {failures} failures over 200 trials")
    assert ok


def random_sketch(rng, i):
    mode = ("streaming", "mergeable", "highconf")[i % 3]
    eps = float(rng.uniform(0.05, 0.5))
    delta = float(rng.uniform(1e-9, 0.1)) if mode == "highconf" else float(rng.uniform(0.01, 0.5))
    n = int(rng.integers(64, 60_000))
    s = Sketch(eps, delta, mode=mode, n=n, seed=int(rng.integers(0, 2**63)))
    s.update_many(make_data(DISTRIBUTIONS[i % 4], int(rng.integers(0, n // 2 + 1)), i))
    return s, n


def fuzz_blobs(rng, bases, count):
    for i in range(count):
        blob = bytearray(bases[i % len(bases)])
        kind = i % 5
        if kind == 0 and blob:
            for _ in range(int(rng.integers(1, 10))):
                blob[int(rng.integers(0, len(blob)))] ^= 1 << int(rng.integers(0, 8))
        elif kind == 1:
            blob = blob[: int(rng.integers(0, len(blob) + 1))]
        elif kind == 2:
            blob = bytearray(rng.bytes(int(rng.integers(0, 300))))
        elif kind == 3:
            pos = int(rng.integers(0, 80))
            blob[pos : pos + 8] = rng.bytes(8)
        else:
            blob += rng.bytes(int(rng.integers(1, 16)))
        yield bytes(blob)


def test_criterion_10_codec(acceptance):
    rng = np.random.default_rng(10)
    round_trips = 0
    bases = []
    for i in range(100):
        s, n = random_sketch(rng, i)
        blob = serialize(s)
        bases.append(blob)
        t = deserialize(blob)
        more = make_data("uniform", min(1000, n - s.n), 1000 + i)
        s.update_many(more)
        t.update_many(more)
        ys = rng.random(50)
        same = serialize(s) == serialize(t) and np.array_equal(s.ranks(ys), t.ranks(ys))
        if s.n:
            same &= all(s.quantile(r) == t.quantile(r) for r in (1, s.n // 2 + 1, s.n))
        round_trips += same
    crashes = decoded = 0
    for blob in fuzz_blobs(rng, bases, 1000):
        try:
            s = deserialize(blob)
        except DecodeError:
            continue
        except Exception:  # anything but a structured decode error is a crash
            crashes += 1
            continue
        decoded += 1
        try:
            s.check_invariants()
            s.rank(0.5)
        except Exception:
            crashes += 1
    ok = round_trips == 100 and crashes == 0
    acceptance(10, "codec", ok,
               f"{round_trips}/100 round trips identical; 1000 fuzzed inputs, {decoded} decoded, {crashes} crashes")
    assert ok
