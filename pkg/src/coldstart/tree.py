"""Ternary elicitation trees: single-item, hybrid multi-type, and pairwise.

A node asks one query (an item, or a pair of same-type items) and routes a
user down one of three branches. Split quality of a candidate item is the sum
over the three branches of the within-branch squared deviation of every
rating from its branch item mean; the candidate minimizing it wins.

Trees support lazy expansion: nodes are materialized on first touch, so a
traversal-driven consumer only pays for the paths it visits. ``build_tree``
defaults to eager construction, which is what inspection and small trees
want; pass ``lazy=True`` when serving traversals over large data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .data import (
    SEMI_BINARY_HIGH,
    SEMI_BINARY_LOW,
    DataError,
    ItemType,
    Scale,
)


class Mode(Enum):
    SINGLE = "single"
    HYBRID = "hybrid"
    PAIRWISE = "pairwise"


class PairStrategy(Enum):
    FIRST_TWO = "first_two"
    MOST_SIMILAR = "most_similar"


@dataclass(frozen=True)
class SingleItem:
    item: object

    def __str__(self):
        return str(self.item)


@dataclass(frozen=True)
class ItemPair:
    first: object
    second: object

    def __str__(self):
        return f"{self.first} vs {self.second}"


class BranchLabel(Enum):
    LOVER = "lover"
    HATER = "hater"
    UNKNOWN = "unknown"
    PREFER_FIRST = "prefer_first"
    PREFER_SECOND = "prefer_second"
    INDIFFERENT = "indifferent"


SINGLE_LABELS = (BranchLabel.LOVER, BranchLabel.HATER, BranchLabel.UNKNOWN)
PAIR_LABELS = (BranchLabel.PREFER_FIRST, BranchLabel.PREFER_SECOND, BranchLabel.INDIFFERENT)


def labels_for(query):
    """The three branch labels a query can produce."""
    return SINGLE_LABELS if isinstance(query, SingleItem) else PAIR_LABELS


@dataclass
class TreeConfig:
    """Shape and thresholds of an elicitation tree.

    ``candidate_types`` defaults to the target type alone in single mode and
    to target-plus-genre otherwise. ``love_threshold`` separates high from
    low ratings on the matrix's scale (>= is high) and must lie inside the
    scale's value range.
    """

    mode: Mode
    target_type: ItemType = ItemType.ARTIST
    candidate_types: frozenset = None
    max_depth: int = 25
    min_node_users: int = 2
    love_threshold: float = 50.0
    pair_strategy: PairStrategy = None
    pool_size: int = 20

    def __post_init__(self):
        if self.candidate_types is None:
            if self.mode is Mode.SINGLE:
                self.candidate_types = frozenset({self.target_type})
            else:
                self.candidate_types = frozenset({self.target_type, ItemType.GENRE})
        else:
            self.candidate_types = frozenset(self.candidate_types)
        if self.mode is Mode.SINGLE and self.candidate_types != {self.target_type}:
            raise ValueError("single mode restricts candidates to the target type")
        if self.mode is Mode.PAIRWISE and self.pair_strategy is None:
            raise ValueError("pairwise mode requires a pair_strategy")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_node_users < 1:
            raise ValueError("min_node_users must be >= 1")
        if self.pool_size < 2:
            raise ValueError("pool_size must be >= 2")

    def check_scale(self, scale):
        if self.mode is Mode.PAIRWISE and scale is not Scale.SEMI_BINARY:
            raise DataError("pairwise trees require semi-binary data")
        lo, hi = scale.value_range
        if not (lo < self.love_threshold <= hi):
            raise ValueError(
                f"love_threshold {self.love_threshold} outside the "
                f"{scale.value} value range ({lo}, {hi}]"
            )


class TreeNode:
    """One tree node; a leaf once expanded with ``query`` still None."""

    __slots__ = ("query", "children", "depth", "split_error", "users", "path_items", "expanded")

    def __init__(self, depth, users, path_items):
        self.depth = depth
        self.users = tuple(users)
        self.path_items = path_items
        self.query = None
        self.children = None
        self.split_error = None
        self.expanded = False

    @property
    def n_users(self):
        return len(self.users)

    @property
    def is_leaf(self):
        return self.expanded and self.query is None


# ---------------------------------------------------------------------------
# node-local array views


class _NodeArrays:
    """CSR/CSC views of one node's ratings over local item positions."""

    def __init__(self, matrix, users):
        users = sorted(users)
        item_set = set()
        for u in users:
            item_set.update(matrix.user_items(u))
        self.items = sorted(item_set)
        self.pos = {i: k for k, i in enumerate(self.items)}
        cols, vals = [], []
        indptr = [0]
        for u in users:
            row = matrix.user_items(u)
            for i in sorted(row):
                cols.append(self.pos[i])
                vals.append(row[i])
            indptr.append(len(cols))
        self.indptr = np.array(indptr, np.int64)
        self.cols = np.array(cols, np.int64)
        self.vals = np.array(vals, np.float64)
        self.rows = np.repeat(np.arange(len(users), dtype=np.int64), np.diff(self.indptr))
        order = np.lexsort((self.rows, self.cols))
        self.c_rows = self.rows[order]
        self.c_vals = self.vals[order]
        counts = np.bincount(self.cols, minlength=len(self.items))
        self.c_indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

    @property
    def n_items(self):
        return len(self.items)

    def total_error(self):
        if self.rows.shape[0] == 0:
            return 0.0
        branch = np.zeros(self.indptr.shape[0] - 1, np.int64)
        return kernels.partition_error(self.rows, self.cols, self.vals, branch, self.n_items)

    def candidate_errors(self, candidates, love_threshold):
        """Split error of each candidate item, keyed by item id.

        Candidates no node user has rated put everyone in the unrated branch,
        so their error equals the node's total error.
        """
        errors = {}
        rated = [c for c in candidates if c in self.pos]
        if rated:
            arr = kernels.split_errors(
                self.indptr,
                self.rows,
                self.cols,
                self.vals,
                self.c_indptr,
                self.c_rows,
                self.c_vals,
                np.array([self.pos[c] for c in rated], np.int64),
                self.n_items,
                love_threshold,
            )
            errors.update(zip(rated, arr.tolist()))
        unrated = [c for c in candidates if c not in self.pos]
        if unrated:
            node_err = self.total_error()
            errors.update((c, node_err) for c in unrated)
        return errors

    def pair_partition_error(self, branch_by_user_row):
        return kernels.partition_error(
            self.rows, self.cols, self.vals, branch_by_user_row, self.n_items
        )


# ---------------------------------------------------------------------------
# split-quality operations


def node_item_means(matrix, users):
    """Mean rating per item over the given users; unrated items are absent."""
    sums, counts = {}, {}
    for u in users:
        for i, v in matrix.user_items(u).items():
            sums[i] = sums.get(i, 0.0) + v
            counts[i] = counts.get(i, 0) + 1
    return {i: sums[i] / counts[i] for i in sums}


def split_error(matrix, users, candidate, love_threshold):
    """Squared prediction error if the node were split on ``candidate``.

    Users are partitioned by their rating of the candidate (at/above the
    threshold, below it, or unrated); within each part every rating is scored
    against the part's item mean.
    """
    nd = _NodeArrays(matrix, users)
    return nd.candidate_errors([candidate], love_threshold)[candidate]


def select_single_split(matrix, users, candidates, love_threshold):
    """The candidate with the lowest split error; ties go to the smallest id."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate items to split on")
    errors = _NodeArrays(matrix, users).candidate_errors(candidates, love_threshold)
    best = min(candidates, key=lambda c: (errors[c], c))
    return best, errors[best]


def top_k_candidates(matrix, users, candidates, k, love_threshold):
    """The k candidates with the smallest split error, ascending, id tie-break."""
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate items to rank")
    errors = _NodeArrays(matrix, users).candidate_errors(candidates, love_threshold)
    return sorted(candidates, key=lambda c: (errors[c], c))[:k]


def item_cosine_similarity(matrix, i, j, users=None):
    """Cosine of two items' rating columns, treating missing entries as zero.

    Restricted to ``users`` when given; 0.0 if either column is all-zero.
    """
    rows = matrix.users if users is None else users
    dot = n_i = n_j = 0.0
    for u in rows:
        row = matrix.user_items(u)
        vi = row.get(i)
        vj = row.get(j)
        if vi is not None:
            n_i += vi * vi
        if vj is not None:
            n_j += vj * vj
        if vi is not None and vj is not None:
            dot += vi * vj
    if n_i == 0.0 or n_j == 0.0:
        return 0.0
    return dot / math.sqrt(n_i * n_j)


def select_pair(matrix, users, pool, strategy):
    """Form a query pair from an error-ranked pool of same-type items.

    ``FIRST_TWO`` pairs the two best-ranked items; ``MOST_SIMILAR`` pairs the
    best-ranked item with its most cosine-similar companion in the rest of
    the pool (similarity over the given users, ties broken by pool order).
    """
    pool = list(pool)
    if len(pool) < 2:
        raise ValueError("pair selection needs a pool of at least 2 items")
    if len({matrix.item_type(i) for i in pool}) > 1:
        raise ValueError("pair pool must contain a single item type")
    first = pool[0]
    if strategy is PairStrategy.FIRST_TWO:
        return first, pool[1]
    best, best_sim = None, -1.0
    for candidate in pool[1:]:
        sim = item_cosine_similarity(matrix, first, candidate, users=users)
        if sim > best_sim:
            best, best_sim = candidate, sim
    return first, best


_PAIR_RANK = {SEMI_BINARY_HIGH: 2, SEMI_BINARY_LOW: 1, None: 0}


def pair_branch(first_value, second_value):
    """Branch label for a pair answer on semi-binary values.

    Equal transformed values (both 1, both 0.01, or both missing) mean
    indifference; otherwise the higher-ranked value wins, with a rated-but-
    disliked item preferred over an unrated one.
    """
    for v in (first_value, second_value):
        if v is not None and v not in (SEMI_BINARY_HIGH, SEMI_BINARY_LOW):
            raise ValueError(f"not a semi-binary value: {v!r}")
    r1 = _PAIR_RANK[first_value]
    r2 = _PAIR_RANK[second_value]
    if r1 == r2:
        return BranchLabel.INDIFFERENT
    return BranchLabel.PREFER_FIRST if r1 > r2 else BranchLabel.PREFER_SECOND


# ---------------------------------------------------------------------------
# tree construction and traversal


class ElicitationTree:
    """A (possibly lazily expanded) ternary elicitation tree."""

    def __init__(self, matrix, config, root):
        self.matrix = matrix
        self.config = config
        self.root = root

    def expand(self, node):
        """Materialize a node's query and children; idempotent."""
        if node.expanded:
            return node
        node.expanded = True
        cfg = self.config
        if node.depth >= cfg.max_depth or node.n_users < cfg.min_node_users:
            return node
        nd = _NodeArrays(self.matrix, node.users)
        candidates = [
            i
            for i in nd.items
            if self.matrix.item_type(i) in cfg.candidate_types and i not in node.path_items
        ]
        if not candidates:
            return node
        if cfg.mode is Mode.PAIRWISE:
            picked = self._pick_pair(nd, candidates, node.users)
            if picked is None:
                return node
            query = ItemPair(*picked)
        else:
            item, err = select_single_split_from(nd, candidates, cfg.love_threshold)
            query = SingleItem(item)
            node.split_error = err
        branches = {u: self._branch_of(u, query) for u in node.users}
        groups = {label: [] for label in labels_for(query)}
        for u in node.users:
            groups[branches[u]].append(u)
        if cfg.mode is Mode.PAIRWISE:
            branch_codes = {label: code for code, label in enumerate(PAIR_LABELS)}
            by_row = np.array(
                [branch_codes[branches[u]] for u in sorted(node.users)], np.int64
            )
            node.split_error = nd.pair_partition_error(by_row)
        node.query = query
        path = node.path_items | (
            {query.item} if isinstance(query, SingleItem) else {query.first, query.second}
        )
        node.children = {
            label: TreeNode(node.depth + 1, group, path) for label, group in groups.items()
        }
        return node

    def _branch_of(self, user, query):
        row = self.matrix.user_items(user)
        if isinstance(query, SingleItem):
            v = row.get(query.item)
            if v is None:
                return BranchLabel.UNKNOWN
            return BranchLabel.LOVER if v >= self.config.love_threshold else BranchLabel.HATER
        return pair_branch(row.get(query.first), row.get(query.second))

    def _pick_pair(self, nd, candidates, users):
        cfg = self.config
        errors = nd.candidate_errors(candidates, cfg.love_threshold)
        ranking = sorted(candidates, key=lambda c: (errors[c], c))
        window = set(ranking[: cfg.pool_size])
        for head in ranking:
            head_type = self.matrix.item_type(head)
            partners = [
                c for c in ranking if c != head and self.matrix.item_type(c) is head_type
            ]
            if not partners:
                continue
            in_window = [c for c in partners if c in window]
            pool = [head] + (in_window if in_window else partners[: cfg.pool_size - 1])
            return select_pair(self.matrix, users, pool, cfg.pair_strategy)
        return None

    def expand_all(self, max_depth=None):
        stack = [self.root]
        while stack:
            node = stack.pop()
            self.expand(node)
            if node.children and (max_depth is None or node.depth + 1 < max_depth):
                stack.extend(node.children.values())
        return self

    def next_query(self, answers):
        """First query on the user's path not yet answered; None at a leaf.

        ``answers`` maps previously asked queries to the branch the user's
        answer produced; traversal follows those branches top-down.
        """
        node = self.root
        while True:
            self.expand(node)
            if node.query is None:
                return None
            if node.query not in answers:
                return node.query
            label = answers[node.query]
            if label not in node.children:
                raise ValueError(f"label {label} does not apply to query {node.query}")
            node = node.children[label]

    # -- dumps ---------------------------------------------------------------

    def to_dict(self, max_depth=None):
        """Nested-dict form of the tree, expanding down to ``max_depth``."""

        def render(node, levels_left):
            self.expand(node)
            out = {
                "depth": node.depth,
                "n_users": node.n_users,
                "split_error": node.split_error,
                "query": _query_to_dict(node.query, self.matrix),
                "children": None,
            }
            if node.query is not None and levels_left != 0:
                nxt = None if levels_left is None else levels_left - 1
                out["children"] = {
                    label.value: render(node.children[label], nxt)
                    for label in labels_for(node.query)
                }
            return out

        return render(self.root, max_depth)

    def format_text(self, max_depth=None):
        """Indented one-node-per-line rendering of the tree."""
        lines = []

        def render(node, label, levels_left):
            self.expand(node)
            indent = "  " * node.depth
            prefix = f"{indent}{label}: " if label else indent
            if node.query is None:
                lines.append(f"{prefix}(leaf, users={node.n_users})")
                return
            lines.append(
                f"{prefix}[{node.query}] users={node.n_users} err={node.split_error:.6g}"
            )
            if levels_left == 0:
                return
            nxt = None if levels_left is None else levels_left - 1
            for child_label in labels_for(node.query):
                render(node.children[child_label], child_label.value, nxt)

        render(self.root, "", None if max_depth is None else max_depth - 1)
        return "\n".join(lines)


def _query_to_dict(query, matrix):
    if query is None:
        return None
    if isinstance(query, SingleItem):
        return {
            "kind": "single",
            "item": query.item,
            "item_type": matrix.item_type(query.item).value,
        }
    return {
        "kind": "pair",
        "first": query.first,
        "second": query.second,
        "item_type": matrix.item_type(query.first).value,
    }


def select_single_split_from(nd, candidates, love_threshold):
    errors = nd.candidate_errors(candidates, love_threshold)
    best = min(candidates, key=lambda c: (errors[c], c))
    return best, errors[best]


def build_tree(matrix, users, config, lazy=False):
    """Build an elicitation tree over the given build-time users.

    With ``lazy=True`` nodes materialize on first traversal instead of up
    front, which is the economical choice when only a few paths will be
    walked. Raises on an empty user set, and on scale/threshold mismatches
    (pairwise trees require semi-binary data).
    """
    users = sorted(users)
    if not users:
        raise ValueError("cannot build a tree for an empty user set")
    config.check_scale(matrix.scale)
    root = TreeNode(0, users, frozenset())
    tree = ElicitationTree(matrix, config, root)
    if not lazy:
        tree.expand_all()
    return tree


def next_query(tree, answers):
    """Module-level alias of :meth:`ElicitationTree.next_query`."""
    return tree.next_query(answers)
