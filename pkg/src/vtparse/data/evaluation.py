"""Accuracy, baselines and parsing-speed measurement."""

from __future__ import annotations

import random
import statistics
import time
from functools import lru_cache
from typing import Sequence

from ..errors import ConfigurationError, EvaluationError
from ..transitions import Sentence

BUCKETS = (10, 15, 40, None)


def dda(gold: Sequence[Sequence[int]], predicted: Sequence[Sequence[int]], keep=None) -> float:
    """Share of tokens whose predicted head equals the gold head.

    ``keep`` optionally masks tokens (e.g. punctuation left in the data).
    """
    if len(gold) != len(predicted):
        raise EvaluationError(f"{len(gold)} gold vs {len(predicted)} predicted sentences")
    hit = total = 0
    for k, (g, p) in enumerate(zip(gold, predicted)):
        if len(g) != len(p):
            raise EvaluationError(f"sentence {k + 1}: {len(g)} gold vs {len(p)} predicted tokens")
        mask = keep[k] if keep is not None else [True] * len(g)
        for a, b, m in zip(g, p, mask):
            if m:
                total += 1
                hit += int(a == b)
    if total == 0:
        raise EvaluationError("no tokens to evaluate")
    return hit / total


def dda_by_length(gold, predicted, buckets=BUCKETS) -> dict[str, float | None]:
    """DDA per maximum-length bucket; empty buckets map to None."""
    out: dict[str, float | None] = {}
    for b in buckets:
        idx = [i for i, g in enumerate(gold) if b is None or len(g) <= b]
        name = "all" if b is None else f"<={b}"
        out[name] = dda([gold[i] for i in idx], [predicted[i] for i in idx]) if idx else None
    return out


def left_branching(n: int) -> list[int]:
    return [i + 2 for i in range(n - 1)] + [0]


def right_branching(n: int) -> list[int]:
    return [i for i in range(n)]


@lru_cache(maxsize=None)
def _tables(n: int):
    """Span counts in the first-order split-head recursion (each tree counted once).

    ``C[i][j][0]``: complete span headed at ``j`` covering ``i..j``; ``[1]`` headed at ``i``.
    ``I[i][j][0]``: arc ``j -> i`` plus the words between; ``[1]`` arc ``i -> j``.
    """
    C = [[[0, 0] for _ in range(n + 1)] for _ in range(n + 1)]
    I = [[[0, 0] for _ in range(n + 1)] for _ in range(n + 1)]
    for i in range(1, n + 1):
        C[i][i] = [1, 1]
    for width in range(1, n):
        for i in range(1, n - width + 1):
            j = i + width
            inc = sum(C[i][k][1] * C[k + 1][j][0] for k in range(i, j))
            I[i][j] = [inc, inc]
            C[i][j][0] = sum(C[i][k][0] * I[k][j][0] for k in range(i, j))
            C[i][j][1] = sum(I[i][k][1] * C[k][j][1] for k in range(i + 1, j + 1))
    return C, I


def count_projective_trees(n: int) -> int:
    C, _ = _tables(n)
    return sum(C[1][r][0] * C[r][n][1] for r in range(1, n + 1))


def _pick(rng: random.Random, weights: list[int]) -> int:
    u = rng.randrange(sum(weights))
    for k, w in enumerate(weights):
        if u < w:
            return k
        u -= w
    raise AssertionError("unreachable")


def uniform_random_tree(n: int, rng: random.Random) -> list[int]:
    """A single-rooted projective tree drawn uniformly (exact integer counts)."""
    C, I = _tables(n)
    heads = [0] * n

    def complete(i, j, d):
        if i == j:
            return
        if d == 0:
            ks = list(range(i, j))
            k = ks[_pick(rng, [C[i][k][0] * I[k][j][0] for k in ks])]
            complete(i, k, 0)
            incomplete(k, j, 0)
        else:
            ks = list(range(i + 1, j + 1))
            k = ks[_pick(rng, [I[i][k][1] * C[k][j][1] for k in ks])]
            incomplete(i, k, 1)
            complete(k, j, 1)

    def incomplete(i, j, d):
        if d == 0:
            heads[i - 1] = j
        else:
            heads[j - 1] = i
        ks = list(range(i, j))
        k = ks[_pick(rng, [C[i][k][1] * C[k + 1][j][0] for k in ks])]
        complete(i, k, 1)
        complete(k + 1, j, 0)

    r = 1 + _pick(rng, [C[1][r][0] * C[r][n][1] for r in range(1, n + 1)])
    complete(1, r, 0)
    complete(r, n, 1)
    heads[r - 1] = 0
    return heads


def baseline_parse(lengths: Sequence[int], kind: str, seed: int = 0) -> list[list[int]]:
    if kind == "left_branching":
        return [left_branching(n) for n in lengths]
    if kind == "right_branching":
        return [right_branching(n) for n in lengths]
    if kind == "random":
        rng = random.Random(seed)
        return [uniform_random_tree(n, rng) for n in lengths]
    raise ConfigurationError(f"unknown baseline {kind!r}")


def speed_bench(encoder, sentences: Sequence[Sentence], repetitions: int = 5,
                buckets=(15, 40, None)) -> dict[str, dict]:
    """Median greedy-parse throughput per maximum-length bucket.

    Each bucket entry has ``tokens_per_sec``, ``sec_per_token``, ``sentences``
    and ``runs``.  Empty buckets are reported with ``skipped: True``.
    """
    if repetitions < 1:
        raise ConfigurationError("repetitions must be at least 1")
    out: dict[str, dict] = {}
    for b in buckets:
        name = "all" if b is None else f"<={b}"
        sel = [s for s in sentences if b is None or len(s) <= b]
        if not sel:
            out[name] = {"skipped": True, "note": "no sentences in bucket"}
            continue
        out[name] = time_parse(encoder, sel, repetitions)
    return out


def time_parse(encoder, sentences: Sequence[Sentence], repetitions: int = 5) -> dict:
    """Median wall-clock cost of greedy parsing, one sentence at a time, after a warm-up pass."""
    tokens = sum(len(s) for s in sentences)
    encoder.greedy_parse(sentences[0])
    runs = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        for s in sentences:
            encoder.greedy_parse(s)
        runs.append(time.perf_counter() - t0)
    med = statistics.median(runs)
    return {"tokens_per_sec": tokens / med, "sec_per_token": med / tokens,
            "sentences": len(sentences), "runs": runs}


def linearity_ratio(encoder, short: Sequence[Sentence], long: Sequence[Sentence],
                    repetitions: int = 5) -> float:
    """Per-token time on ``long`` divided by per-token time on ``short``."""
    a = time_parse(encoder, short, repetitions)["sec_per_token"]
    b = time_parse(encoder, long, repetitions)["sec_per_token"]
    return b / a
