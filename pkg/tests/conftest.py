"""Shared fixtures and independent oracles used across the test suite.

The oracles here deliberately re-derive quantities by naive enumeration so
they stay independent of the library's vectorized/compiled code paths.
"""

import pytest

from coldstart import ItemType, RatingMatrix, Scale


def make_matrix(entries, types=None, scale=Scale.RAW_0_100):
    """Build a matrix from {(user, item): value}; items default to ARTIST."""
    types = types or {}
    m = RatingMatrix(scale)
    for item in {i for _, i in entries}:
        m.register_item(item, types.get(item, ItemType.ARTIST))
    for (user, item), value in sorted(entries.items(), key=lambda kv: (str(kv[0][0]), str(kv[0][1]))):
        m.add(user, item, value)
    return m


def random_matrix(rng, n_users, n_items, density=0.6, scale=Scale.RAW_0_100, genre_every=None):
    """Random matrix with uniform values and Bernoulli missingness."""
    types = {
        i: (ItemType.GENRE if genre_every and i % genre_every == 0 else ItemType.ARTIST)
        for i in range(n_items)
    }
    m = RatingMatrix(scale, types)
    for u in range(n_users):
        for i in range(n_items):
            if rng.random() < density:
                if scale is Scale.RAW_0_100:
                    m.add(u, i, float(rng.uniform(0, 100)))
                else:
                    m.add(u, i, 1.0 if rng.random() < 0.5 else 0.01)
    return m


def brute_split_error(matrix, users, candidate, love_threshold):
    """Naive re-derivation of the 3-way split error: explicit partition,
    per-part per-item means, summed squared residuals."""
    high, low, unrated = [], [], []
    for u in users:
        v = matrix.value(u, candidate)
        if v is None:
            unrated.append(u)
        elif v >= love_threshold:
            high.append(u)
        else:
            low.append(u)
    total = 0.0
    for part in (high, low, unrated):
        items = set()
        for u in part:
            items.update(matrix.user_items(u))
        for i in items:
            vals = [matrix.user_items(u)[i] for u in part if i in matrix.user_items(u)]
            mean = sum(vals) / len(vals)
            total += sum((v - mean) ** 2 for v in vals)
    return total


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # Compile the numba kernels once so individual test timings stay honest.
    from coldstart import kernels

    kernels.warm_up()
