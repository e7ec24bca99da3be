"""Offline elicitation simulation against historical rating logs.

One run: split users into warm and cold, carve the cold users' logs into
seed/pool/test sets, train the recommender on everything known, then iterate
elicitation rounds. Each round asks every cold user one query (chosen by the
configured strategy), moves any pool ratings the query hits into the known
set, refits the recommender from scratch, and records RMSE on the untouched
test set. Tree strategies are rebuilt from the current known ratings every
round and traversed top-down from the root; static rankings are computed
once and consumed front to back per user.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .data import (
    ItemType,
    PartitionState,
    Scale,
    re_split,
    semi_binarize,
    split_users,
)
from .mf import MFHyperparams, evaluate_rmse, fit
from .tree import (
    BranchLabel,
    Mode,
    PairStrategy,
    SingleItem,
    TreeConfig,
    build_tree,
    pair_branch,
)

TREE_STRATEGY_NAMES = ("tree_single", "tree_hybrid", "pairwise_tree_1", "pairwise_tree_2")
STATIC_STRATEGY_NAMES = ("popularity", "variance", "entropy", "helf")
STRATEGY_NAMES = TREE_STRATEGY_NAMES + STATIC_STRATEGY_NAMES + ("random",)


class ProtocolError(RuntimeError):
    """A query was issued twice to the same user."""


@dataclass
class SplitParams:
    cold_fraction: float = 0.9
    k_per_user: int = 1
    t_per_user: int = 30
    target_type: ItemType = ItemType.ARTIST


@dataclass
class StrategyParams:
    """A strategy name plus its knobs; unset knobs resolve to scale-aware
    defaults inside :class:`SimConfig`."""

    name: str
    label: str = None
    candidate_types: tuple = None
    max_depth: int = 25
    min_node_users: int = 2
    love_threshold: float = None
    pool_size: int = 20
    bins: int = 5

    def __post_init__(self):
        if self.name not in STRATEGY_NAMES:
            raise ValueError(
                f"unknown strategy {self.name!r}; valid names: {', '.join(STRATEGY_NAMES)}"
            )
        if self.label is None:
            self.label = self.name


@dataclass
class SimConfig:
    strategy: StrategyParams
    mf: MFHyperparams = field(default_factory=MFHyperparams)
    split: SplitParams = field(default_factory=SplitParams)
    n_iterations: int = 20
    semi_binary: bool = None
    seed: int = 0

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.semi_binary is None:
            self.semi_binary = self.strategy.name.startswith("pairwise")
        if self.strategy.name.startswith("pairwise") and not self.semi_binary:
            raise ValueError("pairwise strategies run on semi-binarized data")

    @property
    def love_threshold(self):
        if self.strategy.love_threshold is not None:
            return self.strategy.love_threshold
        return 0.5 if self.semi_binary else 50.0

    @property
    def candidate_types(self):
        if self.strategy.candidate_types is not None:
            return frozenset(self.strategy.candidate_types)
        if self.strategy.name == "tree_single":
            return frozenset({self.split.target_type})
        return frozenset({self.split.target_type, ItemType.GENRE})

    @property
    def scale_name(self):
        return Scale.SEMI_BINARY.value if self.semi_binary else Scale.RAW_0_100.value


@dataclass
class IterationRecord:
    iteration: int
    rmse: float
    known_size: int
    queries_issued: int
    queries_answered: int


@dataclass
class UserSession:
    """Per-user record of asked queries and the branch each answer produced."""

    user: object
    asked: dict = field(default_factory=dict)


@dataclass
class SimulationSnapshot:
    """Live view handed to ``on_iteration`` callbacks (references, not copies)."""

    iteration: int
    state: PartitionState
    model: object
    record: IterationRecord
    query_log: list


# ---------------------------------------------------------------------------
# query resolution


def resolve_single(user, item, pool, known, love_threshold, asked=None):
    """Answer a single-item query from the elicitation pool.

    A pool hit moves the rating into the known set and labels the user by the
    threshold; a miss labels them unknown and moves nothing. The test set is
    never consulted. Returns (label, moved ratings).
    """
    query = SingleItem(item)
    if asked is not None and query in asked:
        raise ProtocolError(f"user {user!r} was already asked {query}")
    if (user, item) in pool:
        value = pool.remove(user, item)
        known.add(user, item, value)
        label = BranchLabel.LOVER if value >= love_threshold else BranchLabel.HATER
        return label, [(user, item, value)]
    return BranchLabel.UNKNOWN, []


def resolve_pair(user, pair, pool, known, asked=None):
    """Answer a pair query on semi-binary data.

    Both items' values are read from the known set or the pool; pool hits
    migrate into the known set. The label follows the semi-binary preference
    rule. Returns (label, moved ratings).
    """
    if pool.scale is not Scale.SEMI_BINARY or known.scale is not Scale.SEMI_BINARY:
        raise ValueError("pair queries require semi-binary pool and known sets")
    if asked is not None and pair in asked:
        raise ProtocolError(f"user {user!r} was already asked {pair}")
    moved = []
    values = []
    for item in (pair.first, pair.second):
        value = known.value(user, item)
        if value is None and (user, item) in pool:
            value = pool.remove(user, item)
            known.add(user, item, value)
            moved.append((user, item, value))
        values.append(value)
    return pair_branch(values[0], values[1]), moved


# ---------------------------------------------------------------------------
# strategies


class TreeQueryStrategy:
    """Personalized queries from a tree rebuilt on the known ratings each round."""

    def __init__(self, tree_config):
        self.tree_config = tree_config
        self._tree = None

    def begin_iteration(self, known):
        # Snapshot so in-round migrations cannot leak into this round's tree.
        frozen = known.copy()
        self._tree = build_tree(frozen, frozen.users, self.tree_config, lazy=True)

    def next_query(self, session):
        return self._tree.next_query(session.asked)


class StaticListStrategy:
    """One fixed ranking for all users, consumed front to back."""

    def __init__(self, ranking):
        self._items = list(ranking.items)

    def begin_iteration(self, known):
        pass

    def next_query(self, session):
        for item in self._items:
            query = SingleItem(item)
            if query not in session.asked:
                return query
        return None


class RandomOrderStrategy:
    """Control strategy: an independent seeded item order per user."""

    def __init__(self, candidates, seed):
        self._candidates = sorted(candidates)
        self._seed = seed
        self._orders = {}

    def begin_iteration(self, known):
        pass

    def _order(self, user):
        order = self._orders.get(user)
        if order is None:
            rng = np.random.default_rng([self._seed, zlib.crc32(repr(user).encode())])
            order = [self._candidates[k] for k in rng.permutation(len(self._candidates))]
            self._orders[user] = order
        return order

    def next_query(self, session):
        for item in self._order(session.user):
            query = SingleItem(item)
            if query not in session.asked:
                return query
        return None


def make_tree_config(cfg):
    name = cfg.strategy.name
    if name == "tree_single":
        mode, pair_strategy = Mode.SINGLE, None
    elif name == "tree_hybrid":
        mode, pair_strategy = Mode.HYBRID, None
    elif name == "pairwise_tree_1":
        mode, pair_strategy = Mode.PAIRWISE, PairStrategy.FIRST_TWO
    else:
        mode, pair_strategy = Mode.PAIRWISE, PairStrategy.MOST_SIMILAR
    return TreeConfig(
        mode=mode,
        target_type=cfg.split.target_type,
        candidate_types=cfg.candidate_types,
        max_depth=cfg.strategy.max_depth,
        min_node_users=cfg.strategy.min_node_users,
        love_threshold=cfg.love_threshold,
        pair_strategy=pair_strategy,
        pool_size=cfg.strategy.pool_size,
    )


def default_strategy(cfg, partition):
    """Instantiate the strategy named in the config."""
    name = cfg.strategy.name
    if name in TREE_STRATEGY_NAMES:
        return TreeQueryStrategy(make_tree_config(cfg))
    candidates = sorted(partition.known.items_of_type(cfg.candidate_types))
    if not candidates:
        raise ValueError(f"no items of types {sorted(t.value for t in cfg.candidate_types)}")
    if name == "random":
        return RandomOrderStrategy(candidates, cfg.seed)
    known = partition.known
    if name == "popularity":
        ranking = baselines.rank_popularity(known, candidates)
    elif name == "variance":
        ranking = baselines.rank_variance(known, candidates)
    elif name == "entropy":
        ranking = baselines.rank_entropy(known, candidates, bins=cfg.strategy.bins)
    else:
        ranking = baselines.rank_helf(known, candidates, bins=cfg.strategy.bins)
    return StaticListStrategy(ranking)


# ---------------------------------------------------------------------------
# the simulation itself


def prepare_partition(dataset, split, seed):
    """Split a (filtered) dataset into the known/pool/test partition."""
    ss = np.random.SeedSequence(seed)
    seed_split, seed_resplit = ss.spawn(2)
    d_cold, d_warm = split_users(dataset, split.cold_fraction, seed_split)
    seeds, pool, test = re_split(
        d_cold, split.k_per_user, split.t_per_user, split.target_type, seed_resplit
    )
    known = seeds.copy()
    for user, item, value in d_warm.iter_entries():
        known.add(user, item, value)
    cold_users = seeds.users | pool.users | test.users
    return PartitionState(
        known=known,
        pool=pool,
        test=test,
        cold_users=cold_users,
        warm_users=d_warm.users,
    )


def run_elicitation(partition, cfg, on_iteration=None, strategy_factory=None):
    """Iterate elicitation rounds over a prepared partition, mutating it.

    Returns one record per round plus a round-zero record for the state
    before any elicitation.
    """
    factory = strategy_factory or default_strategy
    strategy = factory(cfg, partition)
    known, pool, test = partition.known, partition.pool, partition.test
    sessions = {u: UserSession(u) for u in partition.cold_users}
    query_log = []

    model = fit(known, cfg.mf)
    records = [
        IterationRecord(
            iteration=0,
            rmse=evaluate_rmse(model, test),
            known_size=known.n_ratings,
            queries_issued=0,
            queries_answered=0,
        )
    ]
    if on_iteration:
        on_iteration(SimulationSnapshot(0, partition, model, records[0], query_log))

    for iteration in range(1, cfg.n_iterations + 1):
        strategy.begin_iteration(known)
        issued = answered = 0
        for user in sorted(partition.cold_users):
            session = sessions[user]
            query = strategy.next_query(session)
            if query is None:
                continue
            issued += 1
            if isinstance(query, SingleItem):
                label, moved = resolve_single(
                    user, query.item, pool, known, cfg.love_threshold, asked=session.asked
                )
            else:
                label, moved = resolve_pair(user, query, pool, known, asked=session.asked)
            session.asked[query] = label
            answered += len(moved)
            query_log.append((iteration, user, query))
        model = fit(known, cfg.mf)
        record = IterationRecord(
            iteration=iteration,
            rmse=evaluate_rmse(model, test),
            known_size=known.n_ratings,
            queries_issued=issued,
            queries_answered=answered,
        )
        records.append(record)
        if on_iteration:
            on_iteration(SimulationSnapshot(iteration, partition, model, record, query_log))
    return records


def run_simulation(dataset, cfg, on_iteration=None, strategy_factory=None):
    """Run one full elicitation simulation on a raw-scale dataset.

    The dataset is semi-binarized first when the config asks for it; the
    partition is derived from the config seed, so configs sharing seed and
    split parameters see identical (user, item) partitions regardless of
    scale.
    """
    if dataset.scale is not Scale.RAW_0_100:
        raise ValueError("run_simulation expects raw-scale input data")
    if cfg.semi_binary:
        dataset = semi_binarize(dataset)
    partition = prepare_partition(dataset, cfg.split, cfg.seed)
    return run_elicitation(partition, cfg, on_iteration=on_iteration, strategy_factory=strategy_factory)


@dataclass
class ComparisonResult:
    """Per-strategy RMSE curves over identical partitions.

    ``scales`` flags each curve's rating scale; curves on different scales
    are not directly comparable.
    """

    curves: dict
    scales: dict

    def csv_lines(self):
        yield "strategy,iteration,rmse,known_size,queries_issued,queries_answered"
        for label, records in self.curves.items():
            for r in records:
                yield (
                    f"{label},{r.iteration},{r.rmse!r},{r.known_size},"
                    f"{r.queries_issued},{r.queries_answered}"
                )


def run_comparison(dataset, configs):
    """Run several strategy configs over identical partitions.

    All configs must share split parameters and seed (so the partitions
    coincide) and carry distinct labels.
    """
    if not configs:
        raise ValueError("no simulation configs given")
    base = configs[0]
    for cfg in configs[1:]:
        if cfg.split != base.split or cfg.seed != base.seed:
            raise ValueError("comparison configs must share split parameters and seed")
    labels = [cfg.strategy.label for cfg in configs]
    if len(set(labels)) != len(labels):
        raise ValueError("comparison configs must carry distinct labels")
    curves = {}
    scales = {}
    for cfg in configs:
        curves[cfg.strategy.label] = run_simulation(dataset, cfg)
        scales[cfg.strategy.label] = cfg.scale_name
    return ComparisonResult(curves=curves, scales=scales)
