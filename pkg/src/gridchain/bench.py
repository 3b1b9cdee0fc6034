"""Authentication timing: bloom validity check vs a naive registry scan.

Each repetition times a fixed batch of queries (half registered pseudonyms,
half outsiders) and records the mean per query; the table reports the median
over repetitions.  Only the trend across group sizes is meaningful.
"""

from __future__ import annotations

import csv
import gc
import io
import platform
import statistics
import time
from collections.abc import Sequence

from . import rng as rngmod
from .bloom import build_filter, contains, size_filter
from .crypto_identity import Pseudonym, random_pseudonym

QUERY_BATCH = 64


def naive_contains(registered: Sequence[bytes], pk: Pseudonym) -> bool:
    """Baseline validity check: compare against every registered encoding."""
    key = pk.key_bytes
    for other in registered:
        if other == key:
            return True
    return False


def _median_per_query_ns(check, queries, repetitions: int) -> float:
    samples = []
    clock = time.perf_counter_ns
    for _ in range(repetitions):
        start = clock()
        for pk in queries:
            check(pk)
        samples.append((clock() - start) / len(queries))
    return statistics.median(samples)


def bench_auth(
    group_sizes: Sequence[int],
    repetitions: int = 1000,
    target_fpr: float = 0.01,
    modulus_bits: int = 64,
    seed: int = 0,
) -> list[dict]:
    rows = []
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for n in group_sizes:
            if n < 0:
                raise ValueError("group sizes must be non-negative")
            rng = rngmod.fork(seed, "bench", n)
            members = [random_pseudonym(modulus_bits, rng) for _ in range(n)]
            member_set = set(members)
            outsiders = []
            while len(outsiders) < QUERY_BATCH:
                pk = random_pseudonym(modulus_bits, rng)
                if pk not in member_set:
                    outsiders.append(pk)
            half = QUERY_BATCH // 2 if members else 0
            queries = [rng.choice(members) for _ in range(half)] + outsiders[: QUERY_BATCH - half]
            bloom = build_filter(members, size_filter(max(n, 1), target_fpr))
            registered = [pk.key_bytes for pk in members]
            rows.append(
                {
                    "group_size": n,
                    "queries": len(queries),
                    "reps": repetitions,
                    "theta": bloom.theta,
                    "k": bloom.k,
                    "bloom_ns": _median_per_query_ns(lambda pk: contains(bloom, pk), queries, repetitions),
                    "naive_ns": _median_per_query_ns(lambda pk: naive_contains(registered, pk), queries, repetitions),
                }
            )
    finally:
        if gc_was_enabled:
            gc.enable()
    return rows


def machine_info() -> str:
    return f"{platform.machine()} {platform.processor() or 'unknown-cpu'} python-{platform.python_version()}"


def timing_csv(rows: Sequence[dict]) -> str:
    out = io.StringIO()
    out.write(f"# machine: {machine_info()}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["group_size", "queries", "reps", "theta", "k", "bloom_ns", "naive_ns"])
    for r in rows:
        w.writerow([r["group_size"], r["queries"], r["reps"], r["theta"], r["k"],
                    f"{r['bloom_ns']:.1f}", f"{r['naive_ns']:.1f}"])
    return out.getvalue()
