"""Corpus-level BLEU: clipped n-gram precision, geometric mean, brevity penalty."""

from __future__ import annotations

import math
from collections import Counter


def ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_len(c: int, refs) -> int:
    return min((len(r) for r in refs), key=lambda rl: (abs(rl - c), rl))


def bleu_stats(candidates, references, max_n: int = 4):
    """Clipped match counts and totals per order, plus (cand_len, ref_len)."""
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates but {len(references)} reference sets")
    matches = [0] * max_n
    totals = [0] * max_n
    c_len = r_len = 0
    for cand, refs in zip(candidates, references):
        if not refs:
            raise ValueError("every candidate needs at least one reference")
        c_len += len(cand)
        r_len += _closest_ref_len(len(cand), refs)
        for n in range(1, max_n + 1):
            counts = ngrams(cand, n)
            max_ref = Counter()
            for ref in refs:
                for g, k in ngrams(ref, n).items():
                    if k > max_ref[g]:
                        max_ref[g] = k
            matches[n - 1] += sum(min(k, max_ref[g]) for g, k in counts.items())
            totals[n - 1] += max(len(cand) - n + 1, 0)
    return matches, totals, c_len, r_len


def bleu(candidates, references, n: int = 4, smooth: bool = False) -> float:
    """BLEU with uniform weights over orders ``1..n``.

    ``candidates`` is a list of token lists; ``references`` a parallel list of
    reference-sentence lists. Without smoothing any order with zero matches
    makes the score 0; ``smooth`` replaces zero counts by 0.1. Orders longer
    than every candidate (no n-grams at all) are left out of the mean, so a
    corpus of short exact matches still scores 1.
    """
    if not 1 <= n <= 4:
        raise ValueError("BLEU order must be between 1 and 4")
    matches, totals, c_len, r_len = bleu_stats(candidates, references, n)
    if c_len == 0:
        return 0.0
    orders = [(m, t) for m, t in zip(matches, totals) if t > 0]
    log_p = 0.0
    for m, t in orders:
        if m == 0:
            if not smooth:
                return 0.0
            m = 0.1
        log_p += math.log(m / t) / len(orders)
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    return bp * math.exp(log_p)


def bleu_report(candidates, references, smooth: bool = False) -> dict:
    return {f"bleu{k}": bleu(candidates, references, k, smooth) for k in range(1, 5)}
