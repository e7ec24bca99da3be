import copy

import numpy as np
import pytest

from coldstart import (
    BranchLabel,
    ItemPair,
    ItemType,
    MFHyperparams,
    ProtocolError,
    Scale,
    SingleItem,
    SyntheticConfig,
    generate_synthetic,
    prepare_partition,
    resolve_pair,
    resolve_single,
    run_comparison,
    run_simulation,
    semi_binarize,
)
from coldstart.simulate import SimConfig, SplitParams, StrategyParams
from conftest import make_matrix


def _small_dataset(seed=3):
    cfg = SyntheticConfig(
        n_users=40, n_artists=30, n_genres=5, n_factors=4, density=0.6, noise_sd=3.0, seed=seed
    )
    return generate_synthetic(cfg)


def _sim_config(name, seed=7, n_iterations=4, **strategy_kwargs):
    return SimConfig(
        strategy=StrategyParams(name=name, **strategy_kwargs),
        mf=MFHyperparams(n_factors=4, epochs=8, seed=0),
        split=SplitParams(cold_fraction=0.8, k_per_user=1, t_per_user=4),
        n_iterations=n_iterations,
        seed=seed,
    )


class TestResolveSingle:
    def _setup(self):
        pool = make_matrix({("u", "a"): 80.0, ("u", "b"): 20.0})
        known = make_matrix({("w", "a"): 30.0})
        known.register_item("b", ItemType.ARTIST)
        return pool, known

    def test_pool_hit_migrates_and_labels(self):
        pool, known = self._setup()
        label, moved = resolve_single("u", "a", pool, known, 50.0)
        assert label is BranchLabel.LOVER
        assert moved == [("u", "a", 80.0)]
        assert ("u", "a") not in pool
        assert known.value("u", "a") == 80.0

    def test_low_value_is_hater(self):
        pool, known = self._setup()
        label, _ = resolve_single("u", "b", pool, known, 50.0)
        assert label is BranchLabel.HATER

    def test_miss_is_unknown_and_moves_nothing(self):
        pool, known = self._setup()
        before = known.n_ratings
        label, moved = resolve_single("u", "zzz_unlisted", pool, known, 50.0)
        assert label is BranchLabel.UNKNOWN
        assert moved == []
        assert known.n_ratings == before

    def test_test_set_never_consulted(self):
        # an item only present in some other matrix is simply a miss
        pool, known = self._setup()
        test = make_matrix({("u", "t"): 99.0})
        label, moved = resolve_single("u", "t", pool, known, 50.0)
        assert label is BranchLabel.UNKNOWN
        assert test.value("u", "t") == 99.0

    def test_repeat_query_rejected(self):
        pool, known = self._setup()
        asked = {SingleItem("a"): BranchLabel.LOVER}
        with pytest.raises(ProtocolError):
            resolve_single("u", "a", pool, known, 50.0, asked=asked)


class TestResolvePair:
    def _setup(self):
        raw_pool = make_matrix({("u", "x"): 80.0, ("u", "y"): 20.0})
        raw_known = make_matrix({("w", "x"): 90.0})
        raw_known.register_item("y", ItemType.ARTIST)
        return semi_binarize(raw_pool), semi_binarize(raw_known)

    def test_both_in_pool_migrate(self):
        pool, known = self._setup()
        label, moved = resolve_pair("u", ItemPair("x", "y"), pool, known)
        assert label is BranchLabel.PREFER_FIRST
        assert len(moved) == 2
        assert known.value("u", "x") == 1.0 and known.value("u", "y") == 0.01

    def test_known_value_read_not_moved(self):
        pool, known = self._setup()
        label, moved = resolve_pair("w", ItemPair("x", "y"), pool, known)
        assert label is BranchLabel.PREFER_FIRST
        assert moved == []

    def test_both_absent_indifferent(self):
        pool, known = self._setup()
        label, moved = resolve_pair("u", ItemPair("nope1", "nope2"), pool, known)
        assert label is BranchLabel.INDIFFERENT
        assert moved == []

    def test_requires_semi_binary(self):
        pool = make_matrix({("u", "x"): 80.0, ("u", "y"): 20.0})
        known = make_matrix({("w", "x"): 90.0})
        with pytest.raises(ValueError):
            resolve_pair("u", ItemPair("x", "y"), pool, known)

    def test_repeat_pair_rejected(self):
        pool, known = self._setup()
        pair = ItemPair("x", "y")
        with pytest.raises(ProtocolError):
            resolve_pair("u", pair, pool, known, asked={pair: BranchLabel.PREFER_FIRST})


class TestRunSimulation:
    def test_record_count_and_monotone_known(self):
        records = run_simulation(_small_dataset(), _sim_config("tree_hybrid"))
        assert len(records) == 5
        assert records[0].iteration == 0
        sizes = [r.known_size for r in records]
        assert sizes == sorted(sizes)

    def test_partition_invariants_every_iteration(self):
        dataset = _small_dataset()
        cfg = _sim_config("tree_hybrid")
        seen = []

        def audit(snap):
            k = snap.state.known.key_set()
            x = snap.state.pool.key_set()
            t = snap.state.test.key_set()
            assert k.isdisjoint(x) and k.isdisjoint(t) and x.isdisjoint(t)
            seen.append((len(k), len(x), len(t)))

        run_simulation(dataset, cfg, on_iteration=audit)
        assert len(seen) == 5
        total = seen[0][0] + seen[0][1]
        for nk, nx, nt in seen:
            assert nk + nx == total
            assert nt == seen[0][2]

    def test_bit_reproducible(self):
        dataset = _small_dataset()
        a = run_simulation(dataset, _sim_config("tree_single"))
        b = run_simulation(dataset, _sim_config("tree_single"))
        assert a == b

    def test_no_repeated_query_per_user(self):
        log = []

        def capture(snap):
            log[:] = snap.query_log

        run_simulation(_small_dataset(), _sim_config("popularity"), on_iteration=capture)
        per_user = {}
        for _, user, query in log:
            assert query not in per_user.setdefault(user, set())
            per_user[user].add(query)

    def test_oracle_strategy_answers_every_query(self):
        dataset = _small_dataset()
        cfg = _sim_config("random")

        class PoolOracle:
            def __init__(self, partition):
                self.partition = partition

            def begin_iteration(self, known):
                pass

            def next_query(self, session):
                row = self.partition.pool.user_items(session.user)
                for item in sorted(row):
                    q = SingleItem(item)
                    if q not in session.asked:
                        return q
                return None

        records = run_simulation(
            dataset, cfg, strategy_factory=lambda c, p: PoolOracle(p)
        )
        for r in records[1:]:
            assert r.queries_answered == r.queries_issued
            if r.queries_issued:
                assert r.queries_answered > 0

    def test_random_exhaustion_stabilizes(self):
        # tiny pool: once emptied, later iterations answer nothing
        dataset = _small_dataset()
        cfg = _sim_config("random", n_iterations=6)

        class TinyPoolOracle:
            def __init__(self, partition):
                self.partition = partition
                self.budget = {u: 2 for u in partition.cold_users}

            def begin_iteration(self, known):
                pass

            def next_query(self, session):
                if self.budget[session.user] <= 0:
                    return None
                self.budget[session.user] -= 1
                row = self.partition.pool.user_items(session.user)
                for item in sorted(row):
                    q = SingleItem(item)
                    if q not in session.asked:
                        return q
                return None

        records = run_simulation(dataset, cfg, strategy_factory=lambda c, p: TinyPoolOracle(p))
        tail = records[3:]
        assert all(r.queries_answered == 0 for r in tail)
        rmses = {r.rmse for r in tail}
        assert len(rmses) == 1  # nothing changes once elicitation stops

    def test_pairwise_run_is_semi_binary_end_to_end(self):
        records = run_simulation(_small_dataset(), _sim_config("pairwise_tree_2"))
        assert all(0.0 <= r.rmse <= 1.0 for r in records)
        assert sum(r.queries_answered for r in records) > 0
        for r in records[1:]:
            assert r.queries_answered <= 2 * r.queries_issued

    def test_rejects_semi_binary_input_matrix(self):
        with pytest.raises(ValueError):
            run_simulation(semi_binarize(_small_dataset()), _sim_config("tree_single"))

    def test_unknown_strategy_name_rejected(self):
        with pytest.raises(ValueError, match="valid names"):
            StrategyParams(name="clairvoyant")

    def test_pairwise_requires_semi_binary(self):
        with pytest.raises(ValueError):
            SimConfig(
                strategy=StrategyParams(name="pairwise_tree_1"),
                semi_binary=False,
            )

    def test_n_iterations_validated(self):
        with pytest.raises(ValueError):
            _sim_config("tree_single", n_iterations=0)


class TestLeakage:
    def test_scaling_test_values_changes_only_rmse(self):
        dataset = _small_dataset(seed=11)
        cfg = _sim_config("tree_hybrid", n_iterations=3)

        def run_with_scaled_test(scale):
            partition = prepare_partition(dataset, cfg.split, cfg.seed)
            if scale != 1.0:
                scaled = partition.test.copy()
                for u, i, v in list(scaled.iter_entries()):
                    scaled.remove(u, i)
                    scaled.add(u, i, v * scale)
                partition.test = scaled
            logs = []
            models = []

            def capture(snap):
                logs[:] = list(snap.query_log)
                models.append(
                    (snap.model.user_factors.copy(), snap.model.item_bias.copy())
                )

            from coldstart.simulate import run_elicitation

            records = run_elicitation(partition, cfg, on_iteration=capture)
            return records, logs, models

        base_records, base_log, base_models = run_with_scaled_test(1.0)
        scaled_records, scaled_log, scaled_models = run_with_scaled_test(0.5)
        assert base_log == scaled_log
        for (pa, ba), (pb, bb) in zip(base_models, scaled_models):
            assert np.array_equal(pa, pb)
            assert np.array_equal(ba, bb)
        assert all(
            a.rmse != b.rmse for a, b in zip(base_records, scaled_records)
        )
        assert [r.known_size for r in base_records] == [
            r.known_size for r in scaled_records
        ]


class TestRunComparison:
    def test_identical_configs_identical_curves(self):
        dataset = _small_dataset()
        a = _sim_config("tree_single")
        b = _sim_config("tree_single")
        b.strategy.label = "tree_single_again"
        result = run_comparison(dataset, [a, b])
        assert result.curves["tree_single"] == result.curves["tree_single_again"]

    def test_mismatched_split_rejected(self):
        dataset = _small_dataset()
        a = _sim_config("tree_single", seed=7)
        b = _sim_config("random", seed=8)
        with pytest.raises(ValueError, match="share split parameters and seed"):
            run_comparison(dataset, [a, b])

    def test_duplicate_labels_rejected(self):
        dataset = _small_dataset()
        with pytest.raises(ValueError, match="distinct labels"):
            run_comparison(dataset, [_sim_config("tree_single"), _sim_config("tree_single")])

    def test_mixed_scales_flagged(self):
        dataset = _small_dataset()
        raw_cfg = _sim_config("tree_hybrid")
        semi_cfg = _sim_config("pairwise_tree_1")
        result = run_comparison(dataset, [raw_cfg, semi_cfg])
        assert result.scales["tree_hybrid"] == Scale.RAW_0_100.value
        assert result.scales["pairwise_tree_1"] == Scale.SEMI_BINARY.value

    def test_csv_shape(self):
        dataset = _small_dataset()
        result = run_comparison(dataset, [_sim_config("popularity", n_iterations=2)])
        lines = list(result.csv_lines())
        assert lines[0] == "strategy,iteration,rmse,known_size,queries_issued,queries_answered"
        assert len(lines) == 1 + 3
        assert lines[1].startswith("popularity,0,")


class TestPartitionPreparation:
    def test_partitions_identical_across_scales(self):
        dataset = _small_dataset(seed=21)
        split = SplitParams(cold_fraction=0.8, k_per_user=1, t_per_user=4)
        raw = prepare_partition(dataset, split, seed=5)
        semi = prepare_partition(semi_binarize(dataset), split, seed=5)
        assert raw.known.key_set() == semi.known.key_set()
        assert raw.pool.key_set() == semi.pool.key_set()
        assert raw.test.key_set() == semi.test.key_set()
        assert raw.cold_users == semi.cold_users

    def test_warm_logs_folded_into_known(self):
        dataset = _small_dataset(seed=22)
        split = SplitParams(cold_fraction=0.8, k_per_user=1, t_per_user=4)
        part = prepare_partition(dataset, split, seed=5)
        for u in part.warm_users:
            assert dict(part.known.user_items(u)) == dict(dataset.user_items(u))
        for u in part.cold_users:
            assert len(part.known.user_items(u)) == 1
            assert len(part.test.user_items(u)) == 4
