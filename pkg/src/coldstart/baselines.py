"""Non-personalized elicitation rankings: popularity, variance, entropy, HELF.

Each ranking scores every candidate item from the known ratings and orders
them by score descending (ties by smallest item id). The list is the same
for every user; consumers walk it front to back, skipping items already
asked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class StaticRanking:
    items: list
    scores: dict

    def __post_init__(self):
        assert len(self.items) == len(self.scores)


def _ranking(candidates, scores):
    items = sorted(candidates, key=lambda i: (-scores[i], i))
    return StaticRanking(items=items, scores=scores)


def _column(matrix, item):
    vals = []
    for u in matrix.users:
        v = matrix.user_items(u).get(item)
        if v is not None:
            vals.append(v)
    return vals


def rank_popularity(matrix, candidates):
    """Rank by number of ratings; unrated candidates score 0 and sort last."""
    candidates = _check_candidates(candidates)
    counts = matrix.item_counts()
    scores = {i: float(counts.get(i, 0)) for i in candidates}
    return _ranking(candidates, scores)


def rank_variance(matrix, candidates):
    """Rank by population variance of each item's ratings (0 if < 2 ratings)."""
    candidates = _check_candidates(candidates)
    scores = {}
    for i in candidates:
        vals = _column(matrix, i)
        scores[i] = float(np.var(vals)) if len(vals) >= 2 else 0.0
    return _ranking(candidates, scores)


def _entropy_bits(vals, bins, value_range):
    if not vals:
        return 0.0
    counts, _ = np.histogram(vals, bins=bins, range=value_range)
    p = counts[counts > 0] / len(vals)
    return float(-(p * np.log2(p)).sum())


def rank_entropy(matrix, candidates, bins=5):
    """Rank by Shannon entropy (bits) of ratings over equal-width value bins."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    candidates = _check_candidates(candidates)
    value_range = matrix.scale.value_range
    scores = {i: _entropy_bits(_column(matrix, i), bins, value_range) for i in candidates}
    return _ranking(candidates, scores)


def rank_helf(matrix, candidates, bins=5):
    """Rank by the harmonic mean of normalized entropy and log-frequency.

    Log-frequency is log(1 + count) normalized by the most-rated candidate;
    entropy is normalized by log2(bins). Both components lie in [0, 1], so
    the score does too, and it is 0 whenever either component is 0.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    candidates = _check_candidates(candidates)
    value_range = matrix.scale.value_range
    counts = matrix.item_counts()
    max_freq = max((counts.get(i, 0) for i in candidates), default=0)
    scores = {}
    for i in candidates:
        freq = counts.get(i, 0)
        lf = math.log1p(freq) / math.log1p(max_freq) if max_freq > 0 else 0.0
        h = _entropy_bits(_column(matrix, i), bins, value_range) / math.log2(bins)
        scores[i] = 0.0 if lf + h == 0.0 else 2.0 * lf * h / (lf + h)
    return _ranking(candidates, scores)


def _check_candidates(candidates):
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate items to rank")
    if len(set(candidates)) != len(candidates):
        raise ValueError("candidate items must be unique")
    return candidates
