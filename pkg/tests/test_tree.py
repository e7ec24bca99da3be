import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coldstart import (
    BranchLabel,
    DataError,
    ItemPair,
    ItemType,
    Mode,
    PairStrategy,
    SingleItem,
    TreeConfig,
    build_tree,
    item_cosine_similarity,
    node_item_means,
    pair_branch,
    select_pair,
    select_single_split,
    semi_binarize,
    split_error,
    top_k_candidates,
)
from conftest import brute_split_error, make_matrix, random_matrix


class TestNodeItemMeans:
    def test_two_user_mean(self):
        m = make_matrix({("u1", "i"): 80.0, ("u2", "i"): 40.0})
        assert node_item_means(m, {"u1", "u2"}) == {"i": 60.0}

    def test_empty_user_set(self):
        m = make_matrix({("u1", "i"): 80.0})
        assert node_item_means(m, set()) == {}

    def test_matches_column_means(self):
        rng = np.random.default_rng(3)
        m = random_matrix(rng, 5, 4, density=0.7)
        users = set(m.users)
        means = node_item_means(m, users)
        for i in m.items:
            vals = [m.value(u, i) for u in users if m.value(u, i) is not None]
            if vals:
                assert means[i] == pytest.approx(sum(vals) / len(vals), abs=1e-12)
            else:
                assert i not in means


class TestSplitError:
    def test_unanimous_parts_zero(self):
        m = make_matrix(
            {
                ("u1", "a"): 90.0,
                ("u2", "a"): 90.0,
                ("u3", "a"): 10.0,
                ("u1", "b"): 70.0,
                ("u2", "b"): 70.0,
                ("u3", "b"): 20.0,
            }
        )
        assert split_error(m, m.users, "a", 50.0) == pytest.approx(0.0, abs=1e-12)

    def test_single_user_zero(self):
        m = make_matrix({("u", "a"): 42.0, ("u", "b"): 7.0})
        assert split_error(m, {"u"}, "a", 50.0) == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            m = random_matrix(rng, 6, 5, density=float(rng.uniform(0.3, 0.9)))
            users = set(m.users)
            for cand in sorted(m.items):
                got = split_error(m, users, cand, 50.0)
                want = brute_split_error(m, users, cand, 50.0)
                assert got == pytest.approx(want, abs=1e-9)
                assert got >= 0.0

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(2, 9),
        st.integers(2, 7),
        st.integers(0, 10_000),
    )
    def test_matches_brute_force_property(self, n_users, n_items, seed):
        rng = np.random.default_rng(seed)
        m = random_matrix(rng, n_users, n_items, density=0.55)
        users = set(m.users)
        for cand in sorted(m.items):
            assert split_error(m, users, cand, 50.0) == pytest.approx(
                brute_split_error(m, users, cand, 50.0), abs=1e-9
            )


class TestSelectSingleSplit:
    def test_single_candidate(self):
        m = make_matrix({("u1", "a"): 10.0, ("u2", "a"): 90.0})
        item, err = select_single_split(m, m.users, ["a"], 50.0)
        assert item == "a"

    def test_hand_computed_four_users(self):
        # Splitting on a: high raters {u1,u2} leave b at (100,40) around 70
        # -> 1800; low raters {u3,u4} leave b at (100,0) around 50 -> 5000.
        # E(a) = 6800. Splitting on b: high {u1,u3} leave a at (100,0)
        # -> 5000; low {u2,u4} leave a at (100,0) -> 5000 plus b residuals
        # (40,0) around 20 -> 800. E(b) = 10800.
        m = make_matrix(
            {
                ("u1", "a"): 100.0,
                ("u1", "b"): 100.0,
                ("u2", "a"): 100.0,
                ("u2", "b"): 40.0,
                ("u3", "a"): 0.0,
                ("u3", "b"): 100.0,
                ("u4", "a"): 0.0,
                ("u4", "b"): 0.0,
            }
        )
        assert split_error(m, m.users, "a", 50.0) == pytest.approx(6800.0, abs=1e-9)
        assert split_error(m, m.users, "b", 50.0) == pytest.approx(10800.0, abs=1e-9)
        item, err = select_single_split(m, m.users, ["b", "a"], 50.0)
        assert item == "a"
        assert err == pytest.approx(6800.0, abs=1e-9)

    def test_tie_breaks_to_smallest_id(self):
        m = make_matrix({("u1", "a"): 90.0, ("u1", "b"): 90.0, ("u2", "a"): 80.0, ("u2", "b"): 80.0})
        item, _ = select_single_split(m, m.users, ["b", "a"], 50.0)
        assert item == "a"

    def test_permutation_invariant(self):
        rng = np.random.default_rng(23)
        m = random_matrix(rng, 7, 6, density=0.6)
        cands = sorted(m.items)
        baseline = select_single_split(m, m.users, cands, 50.0)
        for _ in range(5):
            rng.shuffle(cands)
            assert select_single_split(m, m.users, cands, 50.0) == baseline

    def test_empty_candidates_rejected(self):
        m = make_matrix({("u", "a"): 10.0})
        with pytest.raises(ValueError):
            select_single_split(m, m.users, [], 50.0)


class TestTopKCandidates:
    def test_k_at_least_all(self):
        rng = np.random.default_rng(29)
        m = random_matrix(rng, 6, 5, density=0.7)
        cands = sorted(m.items)
        ranked = top_k_candidates(m, m.users, cands, 20, 50.0)
        errs = [split_error(m, m.users, c, 50.0) for c in ranked]
        assert sorted(ranked) == cands
        assert errs == sorted(errs)

    def test_prefix_of_full_ranking(self):
        rng = np.random.default_rng(31)
        m = random_matrix(rng, 6, 5, density=0.7)
        cands = sorted(m.items)
        full = top_k_candidates(m, m.users, cands, len(cands), 50.0)
        # oracle ranking: brute-force errors, same tie rule
        brute = sorted(cands, key=lambda c: (brute_split_error(m, m.users, c, 50.0), c))
        assert full == brute
        assert top_k_candidates(m, m.users, cands, 2, 50.0) == full[:2]

    def test_bad_args(self):
        m = make_matrix({("u", "a"): 10.0})
        with pytest.raises(ValueError):
            top_k_candidates(m, m.users, ["a"], 0, 50.0)
        with pytest.raises(ValueError):
            top_k_candidates(m, m.users, [], 3, 50.0)


class TestCosineSimilarity:
    def test_identical_columns(self):
        m = make_matrix({("u1", "a"): 3.0, ("u1", "b"): 3.0, ("u2", "a"): 4.0, ("u2", "b"): 4.0})
        assert item_cosine_similarity(m, "a", "b") == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_raters(self):
        m = make_matrix({("u1", "a"): 3.0, ("u2", "b"): 4.0})
        assert item_cosine_similarity(m, "a", "b") == 0.0

    def test_all_zero_column(self):
        m = make_matrix({("u1", "a"): 3.0})
        assert item_cosine_similarity(m, "a", "never_rated_anywhere") == 0.0

    def test_hand_computed_semi_binary(self):
        m = semi_binarize(
            make_matrix({("u1", "a"): 80.0, ("u2", "a"): 10.0, ("u1", "b"): 90.0})
        )
        # columns (1, 0.01) and (1, missing): dot 1, norms 1.00005 and 1
        expected = 1.0 / np.sqrt(1.0 + 0.0001)
        assert item_cosine_similarity(m, "a", "b") == pytest.approx(expected, abs=1e-12)


class TestSelectPair:
    def test_first_two(self):
        m = make_matrix({("u", "a"): 10.0, ("u", "b"): 20.0, ("u", "c"): 30.0})
        assert select_pair(m, m.users, ["a", "b", "c"], PairStrategy.FIRST_TWO) == ("a", "b")

    def test_most_similar_prefers_closer_column(self):
        m = make_matrix(
            {
                ("u1", "a"): 90.0,
                ("u2", "a"): 10.0,
                ("u1", "b"): 10.0,
                ("u2", "b"): 90.0,
                ("u1", "c"): 90.0,
                ("u2", "c"): 10.0,
            }
        )
        assert item_cosine_similarity(m, "a", "c") > item_cosine_similarity(m, "a", "b")
        assert select_pair(m, m.users, ["a", "b", "c"], PairStrategy.MOST_SIMILAR) == ("a", "c")

    def test_pool_of_two_either_strategy(self):
        m = make_matrix({("u", "a"): 10.0, ("u", "b"): 20.0})
        for strategy in PairStrategy:
            assert select_pair(m, m.users, ["a", "b"], strategy) == ("a", "b")

    def test_short_pool_rejected(self):
        m = make_matrix({("u", "a"): 10.0})
        with pytest.raises(ValueError):
            select_pair(m, m.users, ["a"], PairStrategy.FIRST_TWO)

    def test_mixed_type_pool_rejected(self):
        m = make_matrix(
            {("u", "a"): 10.0, ("u", "g"): 20.0}, types={"g": ItemType.GENRE}
        )
        with pytest.raises(ValueError):
            select_pair(m, m.users, ["a", "g"], PairStrategy.FIRST_TWO)


class TestPairBranch:
    @pytest.mark.parametrize(
        "first,second,expected",
        [
            (1.0, 1.0, BranchLabel.INDIFFERENT),
            (0.01, 0.01, BranchLabel.INDIFFERENT),
            (None, None, BranchLabel.INDIFFERENT),
            (1.0, 0.01, BranchLabel.PREFER_FIRST),
            (1.0, None, BranchLabel.PREFER_FIRST),
            (0.01, None, BranchLabel.PREFER_FIRST),
            (0.01, 1.0, BranchLabel.PREFER_SECOND),
            (None, 1.0, BranchLabel.PREFER_SECOND),
            (None, 0.01, BranchLabel.PREFER_SECOND),
        ],
    )
    def test_truth_table(self, first, second, expected):
        assert pair_branch(first, second) is expected

    def test_invalid_value_rejected(self):
        with pytest.raises(ValueError):
            pair_branch(0.5, 1.0)


def _clustered_matrix(seed=0, n_users=12, n_items=8):
    """Two taste groups with noisy ratings, all items artists."""
    rng = np.random.default_rng(seed)
    entries = {}
    for u in range(n_users):
        group = u % 2
        for i in range(n_items):
            if rng.random() < 0.75:
                base = 80.0 if (i % 2 == group) else 20.0
                entries[(f"u{u:02d}", f"i{i}")] = float(
                    np.clip(base + rng.normal(0, 10), 0, 100)
                )
    return make_matrix(entries)


class TestBuildTree:
    def test_depth_one_root_with_three_leaves(self):
        m = _clustered_matrix()
        cfg = TreeConfig(mode=Mode.SINGLE, max_depth=1, min_node_users=1)
        tree = build_tree(m, m.users, cfg)
        root = tree.root
        assert isinstance(root.query, SingleItem)
        assert set(root.children) == {BranchLabel.LOVER, BranchLabel.HATER, BranchLabel.UNKNOWN}
        for child in root.children.values():
            assert child.is_leaf

    def test_branch_partition_is_exact(self):
        m = _clustered_matrix(seed=5)
        cfg = TreeConfig(mode=Mode.SINGLE, max_depth=3, min_node_users=2)
        tree = build_tree(m, m.users, cfg)

        def walk(node):
            if node.query is None:
                return
            parts = [set(c.users) for c in node.children.values()]
            assert set().union(*parts) == set(node.users)
            assert sum(len(p) for p in parts) == len(node.users)
            item = node.query.item
            assert set(node.children[BranchLabel.LOVER].users) == {
                u for u in node.users if (m.value(u, item) or -1) >= 50.0
            }
            assert set(node.children[BranchLabel.UNKNOWN].users) == {
                u for u in node.users if m.value(u, item) is None
            }
            for c in node.children.values():
                walk(c)

        walk(tree.root)

    def test_hybrid_prefers_perfectly_splitting_genre(self):
        # The genre separates users into groups that agree on every item
        # they rate, so its split error is 0; both artists mix groups.
        types = {"g": ItemType.GENRE, "a1": ItemType.ARTIST, "a2": ItemType.ARTIST}
        m = make_matrix(
            {
                ("u1", "g"): 100.0,
                ("u2", "g"): 100.0,
                ("u3", "g"): 0.0,
                ("u4", "g"): 0.0,
                ("u1", "a1"): 90.0,
                ("u3", "a1"): 85.0,
                ("u2", "a2"): 20.0,
                ("u4", "a2"): 15.0,
            },
            types,
        )
        assert split_error(m, m.users, "g", 50.0) == pytest.approx(0.0, abs=1e-12)
        assert split_error(m, m.users, "a1", 50.0) > 0.0
        cfg = TreeConfig(mode=Mode.HYBRID, max_depth=1, min_node_users=1)
        tree = build_tree(m, m.users, cfg)
        assert tree.root.query == SingleItem("g")

    def test_pairwise_root_children_match_pair_branch(self):
        raw = make_matrix(
            {
                ("u1", "x"): 90.0,
                ("u1", "y"): 10.0,
                ("u2", "x"): 90.0,
                ("u3", "y"): 80.0,
                ("u4", "x"): 10.0,
                ("u4", "y"): 20.0,
            }
        )
        m = semi_binarize(raw)
        cfg = TreeConfig(
            mode=Mode.PAIRWISE,
            max_depth=1,
            min_node_users=1,
            love_threshold=0.5,
            pair_strategy=PairStrategy.FIRST_TWO,
        )
        tree = build_tree(m, m.users, cfg)
        pair = tree.root.query
        assert isinstance(pair, ItemPair)
        for label, child in tree.root.children.items():
            expected = {
                u
                for u in tree.root.users
                if pair_branch(m.value(u, pair.first), m.value(u, pair.second)) is label
            }
            assert set(child.users) == expected

    def test_pairwise_requires_semi_binary(self):
        m = _clustered_matrix()
        cfg = TreeConfig(
            mode=Mode.PAIRWISE,
            love_threshold=0.5,
            pair_strategy=PairStrategy.FIRST_TWO,
        )
        with pytest.raises(DataError):
            build_tree(m, m.users, cfg)

    def test_threshold_outside_scale_rejected(self):
        m = semi_binarize(_clustered_matrix())
        cfg = TreeConfig(mode=Mode.SINGLE, love_threshold=50.0)
        with pytest.raises(ValueError):
            build_tree(m, m.users, cfg)

    def test_empty_root_rejected(self):
        m = _clustered_matrix()
        with pytest.raises(ValueError):
            build_tree(m, set(), TreeConfig(mode=Mode.SINGLE))

    def test_no_query_repeats_on_any_path(self):
        m = _clustered_matrix(seed=9, n_users=14, n_items=6)
        cfg = TreeConfig(mode=Mode.SINGLE, max_depth=6, min_node_users=1)
        tree = build_tree(m, m.users, cfg)

        def walk(node, seen):
            if node.query is None:
                return
            assert node.query not in seen
            for child in node.children.values():
                walk(child, seen | {node.query})

        walk(tree.root, set())

    def test_single_mode_restricts_candidate_types(self):
        with pytest.raises(ValueError):
            TreeConfig(mode=Mode.SINGLE, candidate_types={ItemType.ARTIST, ItemType.GENRE})

    def test_lazy_matches_eager(self):
        m = _clustered_matrix(seed=13)
        cfg = TreeConfig(mode=Mode.SINGLE, max_depth=4, min_node_users=1)
        eager = build_tree(m, m.users, cfg)
        lazy = build_tree(m, m.users, cfg, lazy=True)

        def compare(a, b):
            lazy_tree_node = lazy.expand(b)
            assert a.query == lazy_tree_node.query
            assert a.n_users == lazy_tree_node.n_users
            if a.query is not None:
                assert a.split_error == pytest.approx(lazy_tree_node.split_error, abs=1e-12)
                for label in a.children:
                    compare(a.children[label], lazy_tree_node.children[label])

        compare(eager.root, lazy.root)


class TestNextQuery:
    def _tree(self):
        m = _clustered_matrix(seed=21)
        cfg = TreeConfig(mode=Mode.SINGLE, max_depth=3, min_node_users=1)
        return build_tree(m, m.users, cfg)

    def test_empty_answers_returns_root(self):
        tree = self._tree()
        assert tree.next_query({}) == tree.root.query

    def test_follows_answered_branch(self):
        tree = self._tree()
        root_q = tree.root.query
        child = tree.root.children[BranchLabel.LOVER]
        assert tree.next_query({root_q: BranchLabel.LOVER}) == child.query

    def test_manual_trace_depth_three(self):
        tree = self._tree()
        answers = {}
        node = tree.root
        trail = []
        while node.query is not None:
            q = tree.next_query(answers)
            assert q == node.query
            trail.append(q)
            answers[q] = BranchLabel.UNKNOWN
            node = node.children[BranchLabel.UNKNOWN]
        assert tree.next_query(answers) is None
        assert len(trail) == len(set(trail)) == 3

    def test_invalid_label_kind_rejected(self):
        tree = self._tree()
        with pytest.raises(ValueError):
            tree.next_query({tree.root.query: BranchLabel.PREFER_FIRST})


class TestDumps:
    def test_json_round_trip_matches_tree(self):
        m = _clustered_matrix(seed=2)
        cfg = TreeConfig(mode=Mode.SINGLE, max_depth=2, min_node_users=1)
        tree = build_tree(m, m.users, cfg)
        parsed = json.loads(json.dumps(tree.to_dict()))

        def check(node, blob):
            assert blob["n_users"] == node.n_users
            if node.query is None:
                assert blob["query"] is None
                assert blob["children"] is None
                return
            assert blob["query"]["item"] == node.query.item
            assert blob["split_error"] == pytest.approx(node.split_error)
            for label, child in node.children.items():
                check(child, blob["children"][label.value])

        check(tree.root, parsed)

    def test_text_dump_shows_pairs(self):
        raw = make_matrix(
            {("u1", "x"): 90.0, ("u1", "y"): 10.0, ("u2", "x"): 20.0, ("u2", "y"): 95.0}
        )
        m = semi_binarize(raw)
        cfg = TreeConfig(
            mode=Mode.PAIRWISE,
            max_depth=1,
            min_node_users=1,
            love_threshold=0.5,
            pair_strategy=PairStrategy.FIRST_TWO,
        )
        text = build_tree(m, m.users, cfg).format_text()
        assert " vs " in text
