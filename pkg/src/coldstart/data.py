"""Rating data: typed sparse matrices, filtering, partitioning, synthesis.

All functions here are pure: they return new matrices and never mutate their
inputs. Mutation (adding/removing single ratings) is provided on
:class:`RatingMatrix` for the simulation loop, which owns its copies.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

_log = logging.getLogger(__name__)

SEMI_BINARY_HIGH = 1.0
SEMI_BINARY_LOW = 0.01


class ItemType(Enum):
    ARTIST = "artist"
    GENRE = "genre"
    TRACK = "track"
    ALBUM = "album"

    @classmethod
    def parse(cls, text):
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            valid = ", ".join(t.value for t in cls)
            raise DataError(f"unknown item type {text!r} (expected one of: {valid})") from None


class Scale(Enum):
    RAW_0_100 = "raw_0_100"
    SEMI_BINARY = "semi_binary"

    @property
    def value_range(self):
        if self is Scale.RAW_0_100:
            return (0.0, 100.0)
        return (SEMI_BINARY_LOW, SEMI_BINARY_HIGH)


class DataError(ValueError):
    """Invalid rating data."""


class ParseError(DataError):
    """A ratings file row could not be parsed."""


class RatingRangeError(DataError):
    """A rating value falls outside the declared scale."""


class DuplicateRatingError(DataError):
    """The same (user, item) key appears twice."""


class RatingMatrix:
    """Sparse user x item ratings with per-item type labels and a value scale.

    Entries live in per-user dicts; each item carries exactly one
    :class:`ItemType`. ``items`` is the typed item universe, which may be a
    superset of the items that currently have ratings (e.g. after moving
    ratings between partitions).
    """

    __slots__ = ("scale", "_type_of", "_rows")

    def __init__(self, scale, type_of=None):
        self.scale = scale
        self._type_of = dict(type_of) if type_of else {}
        self._rows = {}

    # -- construction -------------------------------------------------------

    @classmethod
    def from_entries(cls, scale, type_of, entries):
        m = cls(scale, type_of)
        for user, item, value in entries:
            m.add(user, item, value)
        return m

    def _check_value(self, value):
        if self.scale is Scale.RAW_0_100:
            if not (0.0 <= value <= 100.0):
                raise RatingRangeError(f"rating {value} outside [0, 100]")
        else:
            if value not in (SEMI_BINARY_HIGH, SEMI_BINARY_LOW):
                raise RatingRangeError(
                    f"rating {value} not a semi-binary value "
                    f"({SEMI_BINARY_HIGH} or {SEMI_BINARY_LOW})"
                )

    def register_item(self, item, item_type):
        known = self._type_of.get(item)
        if known is None:
            self._type_of[item] = item_type
        elif known is not item_type:
            raise DataError(f"item {item!r} already registered with type {known.value}")

    def add(self, user, item, value, item_type=None):
        """Insert one rating; the item must have a type (given or known)."""
        if item_type is not None:
            self.register_item(item, item_type)
        elif item not in self._type_of:
            raise DataError(f"item {item!r} has no registered type")
        value = float(value)
        self._check_value(value)
        row = self._rows.setdefault(user, {})
        if item in row:
            raise DuplicateRatingError(f"duplicate rating for user={user!r} item={item!r}")
        row[item] = value

    def remove(self, user, item):
        """Drop one rating and return its value."""
        row = self._rows.get(user)
        if row is None or item not in row:
            raise DataError(f"no rating for user={user!r} item={item!r}")
        value = row.pop(item)
        if not row:
            del self._rows[user]
        return value

    # -- access -------------------------------------------------------------

    @property
    def users(self):
        return set(self._rows)

    @property
    def items(self):
        return set(self._type_of)

    @property
    def n_ratings(self):
        return sum(len(r) for r in self._rows.values())

    def __len__(self):
        return self.n_ratings

    def __contains__(self, key):
        user, item = key
        row = self._rows.get(user)
        return row is not None and item in row

    def value(self, user, item, default=None):
        row = self._rows.get(user)
        if row is None:
            return default
        return row.get(item, default)

    def user_items(self, user):
        """Read-only view of one user's {item: value} ratings."""
        return self._rows.get(user, {})

    def item_type(self, item):
        return self._type_of[item]

    def items_of_type(self, types):
        wanted = set(types)
        return {i for i, t in self._type_of.items() if t in wanted}

    def rated_items(self):
        rated = set()
        for row in self._rows.values():
            rated.update(row)
        return rated

    def iter_entries(self):
        """Yield (user, item, value) sorted by user then item."""
        for user in sorted(self._rows):
            row = self._rows[user]
            for item in sorted(row):
                yield user, item, row[item]

    def key_set(self):
        return {(u, i) for u, row in self._rows.items() for i in row}

    def user_counts(self):
        return {u: len(row) for u, row in self._rows.items()}

    def item_counts(self):
        counts = dict.fromkeys(self._type_of, 0)
        for row in self._rows.values():
            for item in row:
                counts[item] += 1
        return counts

    # -- derived matrices ----------------------------------------------------

    def copy(self):
        m = RatingMatrix(self.scale, self._type_of)
        m._rows = {u: dict(row) for u, row in self._rows.items()}
        return m

    def subset_users(self, users):
        """Matrix holding only the given users' ratings (same item universe)."""
        m = RatingMatrix(self.scale, self._type_of)
        m._rows = {u: dict(self._rows[u]) for u in users if u in self._rows}
        return m

    def __eq__(self, other):
        if not isinstance(other, RatingMatrix):
            return NotImplemented
        return (
            self.scale is other.scale
            and self._type_of == other._type_of
            and self._rows == other._rows
        )

    def __repr__(self):
        return (
            f"RatingMatrix(scale={self.scale.value}, users={len(self._rows)}, "
            f"items={len(self._type_of)}, ratings={self.n_ratings})"
        )


@dataclass
class PartitionState:
    """Disjoint rating sets of one elicitation run.

    ``known`` is the recommender's training data (cold users' seed ratings
    plus all warm users' logs), ``pool`` holds the cold users' remaining
    ratings available for elicitation, and ``test`` the held-out cold-user
    ratings of the target type used for evaluation only.
    """

    known: RatingMatrix
    pool: RatingMatrix
    test: RatingMatrix
    cold_users: set
    warm_users: set


# ---------------------------------------------------------------------------
# file I/O

_HEADER = ("user_id", "item_id", "item_type", "rating")


def load_ratings(path):
    """Read a tab-separated ratings file into a raw-scale matrix.

    The file carries a one-line header and rows of
    ``user_id  item_id  item_type  rating`` with ratings in [0, 100].
    Duplicate (user, item) rows, malformed rows, and out-of-range ratings
    raise :class:`DataError` subclasses naming the offending line.
    """
    m = RatingMatrix(Scale.RAW_0_100)
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        for lineno, fields in enumerate(reader, start=1):
            if lineno == 1:
                continue  # header
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            if len(fields) != 4:
                raise ParseError(f"line {lineno}: expected 4 tab-separated fields, got {len(fields)}")
            user, item, type_text, rating_text = fields
            item_type = ItemType.parse(type_text)
            try:
                rating = float(rating_text)
            except ValueError:
                raise ParseError(f"line {lineno}: rating {rating_text!r} is not a number") from None
            if not (0.0 <= rating <= 100.0):
                raise RatingRangeError(f"line {lineno}: rating {rating} outside [0, 100]")
            try:
                m.add(user, item, rating, item_type)
            except DuplicateRatingError:
                raise DuplicateRatingError(
                    f"line {lineno}: duplicate rating for user={user!r} item={item!r}"
                ) from None
            except DataError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
    return m


def write_ratings(m, path):
    """Write a matrix as the tab-separated format read by :func:`load_ratings`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(_HEADER)
        for user, item, value in m.iter_entries():
            writer.writerow([user, item, m.item_type(item).value, repr(value)])


# ---------------------------------------------------------------------------
# filtering and partitioning


def filter_density(m, min_user_ratings=0, min_ratings_per_type=None):
    """Drop sparse users and items until every threshold holds.

    Users need at least ``min_user_ratings`` ratings; items need at least
    ``min_ratings_per_type[item_type]`` ratings (types not listed are
    unconstrained). Removing a user can push an item below its threshold and
    vice versa, so passes repeat until a fixed point. May return an empty
    matrix.
    """
    if m.scale is not Scale.RAW_0_100:
        raise DataError("density filtering expects raw-scale data")
    thresholds = {t: 0 for t in ItemType}
    if min_ratings_per_type:
        thresholds.update(min_ratings_per_type)

    out = m.copy()
    while True:
        bad_users = {u for u, c in out.user_counts().items() if c < min_user_ratings}
        bad_items = {
            i for i, c in out.item_counts().items() if c < thresholds[out.item_type(i)]
        }
        if not bad_users and not bad_items:
            return out
        kept = RatingMatrix(
            out.scale, {i: t for i, t in out._type_of.items() if i not in bad_items}
        )
        for user, item, value in out.iter_entries():
            if user not in bad_users and item not in bad_items:
                kept.add(user, item, value)
        out = kept


def split_users(m, cold_fraction, seed):
    """Partition users uniformly at random into cold and warm matrices.

    Every rating of a user lands on that user's side. The cold side gets
    ``round(cold_fraction * n_users)`` users. Deterministic under ``seed``.
    """
    if not (0.0 <= cold_fraction <= 1.0):
        raise ValueError(f"cold_fraction must be in [0, 1], got {cold_fraction}")
    users = sorted(m.users)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(users))
    n_cold = int(cold_fraction * len(users) + 0.5)
    cold = {users[k] for k in order[:n_cold]}
    warm = set(users) - cold
    return m.subset_users(cold), m.subset_users(warm)


def re_split(d_cold, k_per_user, t_per_user, target_type, seed):
    """Split cold users' logs into seed, elicitation-pool, and test matrices.

    Per user: ``k_per_user`` random target-type ratings become seeds,
    ``t_per_user`` further random target-type ratings become test entries,
    and everything else (all item types) goes to the elicitation pool.
    Users with fewer than ``k_per_user + t_per_user`` target-type ratings are
    dropped entirely, with a logged warning.
    """
    if k_per_user < 0 or t_per_user < 0:
        raise ValueError("k_per_user and t_per_user must be non-negative")
    seeds = RatingMatrix(d_cold.scale, d_cold._type_of)
    pool = RatingMatrix(d_cold.scale, d_cold._type_of)
    test = RatingMatrix(d_cold.scale, d_cold._type_of)
    rng = np.random.default_rng(seed)
    dropped = []
    for user in sorted(d_cold.users):
        row = d_cold.user_items(user)
        targets = sorted(i for i in row if d_cold.item_type(i) is target_type)
        if len(targets) < k_per_user + t_per_user:
            dropped.append(user)
            continue
        order = rng.permutation(len(targets))
        seed_items = {targets[k] for k in order[:k_per_user]}
        test_items = {targets[k] for k in order[k_per_user : k_per_user + t_per_user]}
        for item in sorted(row):
            if item in seed_items:
                seeds.add(user, item, row[item])
            elif item in test_items:
                test.add(user, item, row[item])
            else:
                pool.add(user, item, row[item])
    if dropped:
        _log.warning(
            "dropped %d cold user(s) with fewer than %d %s ratings: %s",
            len(dropped),
            k_per_user + t_per_user,
            target_type.value,
            dropped[:10],
        )
    return seeds, pool, test


def semi_binarize(m, threshold=50.0):
    """Map raw ratings to the semi-binary scale.

    Values at or above ``threshold`` become 1, values below become 0.01, and
    missing entries stay missing. The key set is unchanged.
    """
    if m.scale is not Scale.RAW_0_100:
        raise DataError("semi_binarize expects raw-scale data")
    out = RatingMatrix(Scale.SEMI_BINARY, m._type_of)
    for user, item, value in m.iter_entries():
        out.add(user, item, SEMI_BINARY_HIGH if value >= threshold else SEMI_BINARY_LOW)
    return out


# ---------------------------------------------------------------------------
# synthetic data

# Fixed generator behavior (not part of SyntheticConfig): log-weights of the
# observation sampling. Users mostly rate items of their own taste community
# (_AFFINITY_EXPOSURE), mildly prefer rating what they like (_VALUE_EXPOSURE),
# and rate broad genre items more often than individual artists
# (_GENRE_EXPOSURE, a multiplicative column boost).
_AFFINITY_EXPOSURE = 3.0
_VALUE_EXPOSURE = 0.4
_GENRE_EXPOSURE = 2.5
_ITEM_POP_SPREAD = 0.8  # sd of per-item log-popularity (long-tailed catalogs)
_FACTOR_SPREAD = 0.6  # within-genre spread of artist/user factor vectors
# Genre ratings sit lower than artist ratings, so a user's own-community
# genres land above mid-scale and foreign genres below it.
_GENRE_VALUE_OFFSET = 11.0


@dataclass
class SyntheticConfig:
    """Parameters of the planted-structure synthetic dataset."""

    n_users: int = 250
    n_artists: int = 160
    n_genres: int = 18
    n_factors: int = 8
    density: float = 0.3
    noise_sd: float = 3.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_users", "n_artists", "n_genres", "n_factors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0.0 < self.density <= 1.0):
            raise ValueError("density must be in (0, 1]")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


def rating_gain(n_factors):
    """Scale applied to latent dot products when mapping them to 0-100."""
    return 11.0 / math.sqrt(n_factors)


def generate_synthetic(cfg, return_latents=False):
    """Generate a raw-scale rating matrix with planted latent structure.

    Users and artists share genre-level latent factors, so genre affinity
    correlates with artist affinity. Ratings are ``50 + gain * <user, item>``
    plus optional noise, clipped to [0, 100]. Which cells are observed is
    biased toward the user's own taste community, mildly toward high ratings,
    and toward genre items, mimicking users rating what they actually listen
    to; the total number of observed cells is
    ``round(density * n_users * n_items)``.

    Item ids 0..n_artists-1 are artists, the rest genres. With
    ``return_latents=True`` also returns the factor matrices and gain for
    independent recomputation.
    """
    rng = np.random.default_rng(cfg.seed)
    f = cfg.n_factors
    genre_factors = rng.normal(0.0, 1.0, (cfg.n_genres, f))
    genre_of_artist = rng.integers(0, cfg.n_genres, cfg.n_artists)
    artist_factors = genre_factors[genre_of_artist] + rng.normal(
        0.0, _FACTOR_SPREAD, (cfg.n_artists, f)
    )
    taste = rng.integers(0, cfg.n_genres, cfg.n_users)
    user_factors = genre_factors[taste] + rng.normal(0.0, _FACTOR_SPREAD, (cfg.n_users, f))
    item_factors = np.vstack([artist_factors, genre_factors])

    gain = rating_gain(f)
    ratings = 50.0 + gain * (user_factors @ item_factors.T)
    ratings[:, cfg.n_artists :] -= _GENRE_VALUE_OFFSET
    if cfg.noise_sd > 0:
        ratings = ratings + rng.normal(0.0, cfg.noise_sd, ratings.shape)
    ratings = np.clip(ratings, 0.0, 100.0)

    n_items = cfg.n_artists + cfg.n_genres
    n_obs = int(round(cfg.density * cfg.n_users * n_items))
    # Weighted sampling without replacement via Gumbel keys.
    genre_of_item = np.concatenate([genre_of_artist, np.arange(cfg.n_genres)])
    same_community = taste[:, None] == genre_of_item[None, :]
    item_pop = _ITEM_POP_SPREAD * rng.normal(0.0, 1.0, n_items)
    log_w = (
        _AFFINITY_EXPOSURE * same_community
        + _VALUE_EXPOSURE * (ratings - 50.0) / 50.0
        + item_pop[None, :]
    )
    log_w[:, cfg.n_artists :] += math.log(_GENRE_EXPOSURE)
    keys = log_w + rng.gumbel(size=ratings.shape)
    flat = np.argsort(keys, axis=None)[::-1][:n_obs]
    flat = np.sort(flat)

    type_of = {i: (ItemType.ARTIST if i < cfg.n_artists else ItemType.GENRE) for i in range(n_items)}
    m = RatingMatrix(Scale.RAW_0_100, type_of)
    for cell in flat:
        u, i = divmod(int(cell), n_items)
        m.add(u, i, float(ratings[u, i]))
    if return_latents:
        latents = {
            "user_factors": user_factors,
            "item_factors": item_factors,
            "gain": gain,
            "genre_offset": _GENRE_VALUE_OFFSET,
            "n_artists": cfg.n_artists,
        }
        return m, latents
    return m
