"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one `[ACCEPTANCE] <name>: PASS|FAIL` line; run with
`pytest tests/test_acceptance.py -s` to see them live.
"""

import math
import time

import numpy as np
import pytest

from subsel import (
    FacilityLocationMemo,
    FeatureMatrix,
    SessionConfig,
    build_orderings,
    fl_evaluate,
    fl_update_memo,
    kernel_memory_bytes,
    lazy_greedy,
    load_artifact,
    make_partition,
    naive_greedy,
    normalize_rows,
    read_subset_file,
    resample_steps,
    sample_subset,
    sample_without_replacement,
    select_orderings,
    split_budget,
    stochastic_greedy,
    taylor_softmax,
    union_sample,
)
from subsel.cli import main as cli_main

from oracles import (
    fl_value_slow,
    opt_exhaustive,
    random_cosine_kernel,
    random_kernel,
)

GREEDY_RATIO = 1.0 - 1.0 / math.e


def _report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[ACCEPTANCE] {name}: {status}{suffix}")


def test_brute_force_optimality_gap():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    violations = 0
    for _ in range(120):
        m = int(rng.integers(2, 13))
        b = int(rng.integers(1, min(4, m) + 1))
        kern = random_cosine_kernel(rng, m, d=3)
        greedy_value = float(naive_greedy(kern, b).gains.sum())
        opt = opt_exhaustive(kern.values, b)
        if greedy_value < GREEDY_RATIO * opt - 1e-9:
            violations += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 10.0
    _report("brute-force optimality gap", ok, f"120 instances, {elapsed:.1f}s")
    assert violations == 0
    assert elapsed < 10.0


def test_submodularity_and_monotonicity_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    gain_violations = 0
    monotonic_violations = 0
    for trial in range(1000):
        m = int(rng.integers(2, 11))
        kern = random_kernel(rng, m) if trial % 2 else random_cosine_kernel(rng, m)
        smaller = {int(i) for i in np.flatnonzero(rng.random(m) < 0.35)}
        larger = smaller | {int(i) for i in np.flatnonzero(rng.random(m) < 0.35)}
        if fl_evaluate(kern, smaller) > fl_evaluate(kern, larger) + 1e-9:
            monotonic_violations += 1
        outside = [e for e in range(m) if e not in larger]
        if not outside:
            continue
        memo_small = FacilityLocationMemo.empty(m)
        for e in smaller:
            fl_update_memo(memo_small, kern, e)
        memo_large = FacilityLocationMemo.empty(m)
        for e in larger:
            fl_update_memo(memo_large, kern, e)
        for x in outside[:3]:
            small_gain = fl_evaluate(kern, smaller | {x}) - memo_small.value
            large_gain = fl_evaluate(kern, larger | {x}) - memo_large.value
            if small_gain < large_gain - 1e-9:
                gain_violations += 1
    elapsed = time.perf_counter() - start
    ok = gain_violations == 0 and monotonic_violations == 0 and elapsed < 30.0
    _report(
        "submodularity and monotonicity",
        ok,
        f"1000 kernels, {elapsed:.1f}s",
    )
    assert gain_violations == 0
    assert monotonic_violations == 0
    assert elapsed < 30.0


def test_optimizer_equivalences():
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    mismatches = 0
    for trial in range(1000):
        m = int(rng.integers(1, 201))
        kern = random_cosine_kernel(rng, m, d=int(rng.integers(2, 8)))
        b = m if trial % 2 else int(rng.integers(1, m + 1))
        naive = naive_greedy(kern, b)
        lazy = lazy_greedy(kern, b)
        if not (
            np.array_equal(naive.order, lazy.order)
            and np.array_equal(naive.gains, lazy.gains)
        ):
            mismatches += 1
            continue
        # epsilon small enough that the candidate sample always covers the pool
        stoch = stochastic_greedy(kern, b, 1e-300, seed=int(rng.integers(1 << 31)))
        if not (
            np.array_equal(naive.order, stoch.order)
            and np.array_equal(naive.gains, stoch.gains)
        ):
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 120.0
    _report("optimizer equivalences", ok, f"1000 instances, {elapsed:.1f}s")
    assert mismatches == 0
    assert elapsed < 120.0


def test_memoization_against_direct_evaluation():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(50):
        m = int(rng.integers(2, 60))
        kern = random_cosine_kernel(rng, m)
        memo = FacilityLocationMemo.empty(m)
        sequence = rng.permutation(m)[: int(rng.integers(1, m + 1))]
        chosen: list[int] = []
        for e in sequence:
            fl_update_memo(memo, kern, int(e))
            chosen.append(int(e))
            worst = max(worst, abs(memo.value - fl_evaluate(kern, chosen)))
    ok = worst <= 1e-9
    _report("memoization correctness", ok, f"max deviation {worst:.2e}")
    assert worst <= 1e-9


def test_taylor_softmax_properties():
    rng = np.random.default_rng(505)
    gains = np.concatenate(
        [rng.uniform(-1e6, 1e6, size=100_000), [-1e6, 1e6, 0.0, -1.0, 1.0]]
    )
    dist = taylor_softmax(gains)
    positive = bool(dist.probabilities.min() > 0.0)
    normalized = abs(float(dist.probabilities.sum()) - 1.0) <= 1e-12

    uniform = taylor_softmax(np.full(997, 3.25))
    uniform_ok = bool(np.abs(uniform.probabilities - 1.0 / 997).max() <= 1e-12)

    ordered_gains = np.round(rng.uniform(0, 100, size=5000), 1)  # exact ties included
    ordered = taylor_softmax(ordered_gains)
    by_gain = np.lexsort((np.arange(5000), ordered_gains))
    order_ok = True
    for a, b in zip(by_gain[:-1], by_gain[1:]):
        if ordered_gains[a] == ordered_gains[b]:
            if ordered.probabilities[a] != ordered.probabilities[b]:
                order_ok = False
        elif not ordered.probabilities[a] < ordered.probabilities[b]:
            order_ok = False
    ok = positive and normalized and uniform_ok and order_ok
    _report(
        "taylor-softmax properties",
        ok,
        f"positive={positive} normalized={normalized} uniform={uniform_ok} order={order_ok}",
    )
    assert ok


def test_sampler_statistics():
    dist = taylor_softmax(np.array([0.0, 0.5, 1.0, 2.0, 4.0]))
    rng = np.random.default_rng(606)
    draws = 100_000
    counts = np.zeros(5)
    for _ in range(draws):
        counts[sample_without_replacement(dist, 1, rng)[0]] += 1
    freq = counts / draws
    se = np.sqrt(dist.probabilities * (1.0 - dist.probabilities) / draws)
    deviations = np.abs(freq - dist.probabilities) / se
    ok = bool((deviations <= 3.0).all())
    _report("sampler statistics", ok, f"max deviation {deviations.max():.2f} SE")
    assert ok


def test_partition_lower_bound():
    rng = np.random.default_rng(707)
    checked = 0
    violations = 0
    for trial in range(25):
        n = int(rng.integers(6, 25))
        num_blocks = int(rng.integers(2, 4))
        if num_blocks > n:
            continue
        fm, _ = normalize_rows(
            FeatureMatrix(rng.normal(size=(n, 5)).astype(np.float32))
        )
        plan = make_partition(n, num_blocks, seed=trial)
        artifact = build_orderings(fm, plan, epsilon=0.01, master_seed=trial)
        k = int(rng.integers(num_blocks, n + 1))
        subset = union_sample(artifact, split_budget(k, plan), seed=trial)
        from subsel import cosine_kernel

        partitioned = 0.0
        for block in artifact.blocks:
            members = plan.block_indices(block.block_id)
            kern = cosine_kernel(FeatureMatrix(fm.values[members], normalized=True))
            local = [
                int(plan.local_of[g])
                for g in subset
                if plan.block_of[g] == block.block_id
            ]
            partitioned += fl_value_slow(kern.values, local)
        global_kernel = cosine_kernel(fm)
        global_value = fl_value_slow(global_kernel.values, subset.tolist())
        checked += 1
        if partitioned > global_value + 1e-9:
            violations += 1
    ok = violations == 0 and checked >= 20
    _report("partitioned lower bound", ok, f"{checked} instances")
    assert violations == 0


def _audit_fl_value(values: np.ndarray, audit_plan, subset: np.ndarray) -> float:
    member_mask = np.zeros(values.shape[0], dtype=bool)
    member_mask[subset] = True
    total = 0.0
    for b in range(audit_plan.num_blocks):
        members = audit_plan.block_indices(b)
        chosen = members[member_mask[members]]
        if chosen.size == 0:
            continue
        sims = values[members] @ values[chosen].T
        np.clip(sims, 0.0, 1.0, out=sims)
        total += float(sims.max(axis=1).sum(dtype=np.float64))
    return total


def test_desk_scale_selection_quality():
    start = time.perf_counter()
    n, d, clusters = 50_000, 64, 20
    num_blocks, epsilon, fraction = 13, 0.01, 0.25
    k = int(fraction * n)
    workers = 8

    corpus_rng = np.random.default_rng(7777)
    centers = corpus_rng.normal(scale=4.0, size=(clusters, d))
    labels = np.arange(n) % clusters
    points = centers[labels] + corpus_rng.normal(size=(n, d))
    fm, _ = normalize_rows(FeatureMatrix(points.astype(np.float32)))

    audit_plan = make_partition(n, num_blocks, seed=424242)
    predicted = kernel_memory_bytes(
        int(np.ceil(n / num_blocks)), min(workers, num_blocks)
    )

    wins = 0
    uncovered_seeds = []
    peaks = []
    for seed in range(10):
        artifact = select_orderings(
            fm,
            num_blocks,
            epsilon=epsilon,
            master_seed=seed,
            workers=workers,
            memory_budget=2 * predicted,
        )
        peaks.append(artifact.peak_kernel_bytes)
        subset = sample_subset(artifact, k, seed=9_000 + seed)
        assert subset.size == k
        uniform = np.random.default_rng(5_000 + seed).choice(n, size=k, replace=False)

        selected_value = _audit_fl_value(fm.values, audit_plan, subset)
        uniform_value = _audit_fl_value(fm.values, audit_plan, uniform)
        if selected_value > uniform_value:
            wins += 1
        if np.unique(labels[subset]).size != clusters:
            uncovered_seeds.append(seed)

    elapsed = time.perf_counter() - start
    peak = max(peaks)
    memory_ok = peak <= predicted and peak >= 0.85 * predicted
    ok = (
        wins >= 9
        and not uncovered_seeds
        and elapsed < 600.0
        and memory_ok
    )
    _report(
        "desk-scale selection quality",
        ok,
        f"wins={wins}/10 clusters_covered={not uncovered_seeds} "
        f"peak={peak / 1e6:.0f}MB predicted={predicted / 1e6:.0f}MB "
        f"runtime={elapsed:.0f}s",
    )
    assert wins >= 9
    assert not uncovered_seeds
    assert memory_ok
    assert elapsed < 600.0


def test_determinism_and_parity(tmp_path):
    from subsel import save_features

    rng = np.random.default_rng(808)
    fm, _ = normalize_rows(FeatureMatrix(rng.normal(size=(900, 12)).astype(np.float32)))
    features_path = tmp_path / "features.fm"
    save_features(fm, features_path)

    artifact_bytes = {}
    subset_bytes = {}
    for workers in (1, 8):
        artifact_path = tmp_path / f"artifact_w{workers}.json"
        code = cli_main(
            [
                "select",
                "--features", str(features_path),
                "--output", str(artifact_path),
                "--partitions", "9",
                "--workers", str(workers),
                "--seed", "31",
            ]
        )
        assert code == 0
        artifact_bytes[workers] = artifact_path.read_bytes()
        subset_path = tmp_path / f"subset_w{workers}.txt"
        code = cli_main(
            [
                "sample",
                "--artifact", str(artifact_path),
                "--k", "90",
                "--seed", "77",
                "--output", str(subset_path),
            ]
        )
        assert code == 0
        subset_bytes[workers] = subset_path.read_bytes()
    parity = (
        artifact_bytes[1] == artifact_bytes[8] and subset_bytes[1] == subset_bytes[8]
    )

    config = SessionConfig(
        total_steps=12,
        num_blocks=3,
        seed=5,
        warm_start_steps=2,
        refresh_interval=3,
        subset_size=6,
        workers=1,
    )
    schedule = resample_steps(config)
    schedule_ok = schedule == [2, 3, 6, 9, 12]

    emit = tmp_path / "emit"
    import json as json_mod

    config_path = tmp_path / "session.json"
    config_path.write_text(json_mod.dumps(config.to_dict()))
    small = tmp_path / "small.fm"
    small_fm, _ = normalize_rows(
        FeatureMatrix(np.random.default_rng(1).normal(size=(30, 6)).astype(np.float32))
    )
    save_features(small_fm, small)
    code = cli_main(
        [
            "session",
            "--features", str(small),
            "--config", str(config_path),
            "--advance-to", "12",
            "--emit-subset", str(emit),
        ]
    )
    emitted = sorted(int(p.stem.split("_t")[1]) for p in emit.glob("subset_t*.txt"))
    emitted_ok = code == 0 and emitted == [2, 3, 6, 9, 12]

    ok = parity and schedule_ok and emitted_ok
    _report(
        "determinism and parity",
        ok,
        f"worker parity={parity} schedule={schedule} emitted={emitted}",
    )
    assert parity
    assert schedule_ok
    assert emitted_ok


def test_tfidf_hand_oracle():
    from subsel import build_tfidf

    corpus = ["apple banana apple", "banana cherry", "cherry date banana"]
    sparse = build_tfidf(corpus)
    assert sparse.vocabulary == ("apple", "banana", "cherry", "date")

    n = 3
    df = {"apple": 1, "banana": 3, "cherry": 2, "date": 1}
    idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}
    hand_rows = []
    for doc in corpus:
        tokens = doc.split()
        row = {}
        for t in set(tokens):
            row[t] = tokens.count(t) * idf[t]
        norm = math.sqrt(sum(w * w for w in row.values()))
        hand_rows.append({t: w / norm for t, w in row.items()})

    worst = 0.0
    for i, hand in enumerate(hand_rows):
        cols, weights = sparse.row(i)
        got = {sparse.vocabulary[c]: float(w) for c, w in zip(cols, weights)}
        assert set(got) == set(hand)
        for t, w in hand.items():
            worst = max(worst, abs(got[t] - w))
    ok = worst <= 1e-9
    _report("tf-idf hand oracle", ok, f"max deviation {worst:.2e}")
    assert worst <= 1e-9
