import json
import statistics
import numpy as np
import pytest
from numpy.testing import assert_array_equal

from ungsl.gnn import TrainConfig
from ungsl.graph import from_undirected, is_symmetric, undirected_edges
from ungsl.gsl import GslConfig
from ungsl.harness.experiments import (
    RunSpec, ablation_symmetrize, execute, linear_r_squared, prune_counts, prune_in_neighbors,
    replay, robustness, run, same_outcome, sweep,
)
from ungsl.harness.noise import NoiseSpec, inject_noise
from ungsl.harness.records import (
    ExperimentRecord, RunLog, format_summary, mean_std, summarize,
)
from ungsl.harness.sbm import SbmConfig, edge_homophily, generate_sbm

TINY = RunSpec(dataset=SbmConfig(n=60, K=3, p_in=0.15, p_out=0.02, d=8, signal=1.5),
               gsl=GslConfig(k=3, encoder_hidden=8),
               train=TrainConfig(epochs=8, hidden=8))


class TestSbm:
    @pytest.mark.parametrize("p_in,p_out", [(0.03, 0.0067), (0.06, 0.005)])
    def test_homophily_near_target(self, p_in, p_out):
        cfg = SbmConfig(n=800, K=4, p_in=p_in, p_out=p_out, seed=0)
        assert abs(edge_homophily(generate_sbm(cfg)) - cfg.homophily) < 0.05

    def test_deterministic_and_symmetric(self):
        a = generate_sbm(SbmConfig(n=100, seed=4))
        b = generate_sbm(SbmConfig(n=100, seed=4))
        assert_array_equal(a.adjacency.indices, b.adjacency.indices)
        assert_array_equal(a.features, b.features)
        assert is_symmetric(a.adjacency)

    def test_split_fractions_per_class(self):
        g = generate_sbm(SbmConfig(n=400, K=4))
        for k in range(4):
            assert (g.labels[g.masks.train] == k).sum() == 10

    def test_invalid(self):
        with pytest.raises(ValueError):
            SbmConfig(p_in=0.01, p_out=0.02)


class TestNoise:
    @pytest.fixture
    def g(self):
        return generate_sbm(SbmConfig(n=120, K=3, p_in=0.1, p_out=0.01, d=6, seed=2))

    def test_edge_add_count_and_superset(self, g):
        m = len(undirected_edges(g.adjacency)[0])
        noisy = inject_noise(g, NoiseSpec("edge_add", 0.4, 1))
        assert len(undirected_edges(noisy.adjacency)[0]) == m + int(np.floor(0.4 * m))
        assert np.all(noisy.adjacency.to_dense()[g.adjacency.to_dense() > 0] > 0)
        assert is_symmetric(noisy.adjacency)

    def test_edge_delete_count(self, g):
        m = len(undirected_edges(g.adjacency)[0])
        noisy = inject_noise(g, NoiseSpec("edge_delete", 0.25, 1))
        assert len(undirected_edges(noisy.adjacency)[0]) == m - int(np.floor(0.25 * m))

    def test_feature_mask_count(self, g):
        noisy = inject_noise(g, NoiseSpec("feature_mask", 0.1, 0))
        changed = (noisy.features != g.features).sum()
        assert changed == int(np.floor(0.1 * g.features.size))

    def test_label_flip_only_train(self, g):
        noisy = inject_noise(g, NoiseSpec("label_flip", 0.5, 0))
        flipped = noisy.labels != g.labels
        assert flipped.sum() == int(np.floor(0.5 * g.masks.train.sum()))
        assert not np.any(flipped & ~g.masks.train)

    def test_zero_level_identity(self, g):
        assert inject_noise(g, NoiseSpec("edge_add", 0.0)) is g

    def test_too_many_edges(self):
        g = generate_sbm(SbmConfig(n=4, K=2, p_in=1.0, p_out=1.0, d=2))
        with pytest.raises(ValueError):
            inject_noise(g, NoiseSpec("edge_add", 1.0))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            NoiseSpec("edge_swap", 0.1)


class TestPruning:
    def test_counts_leave_one_neighbor(self):
        assert_array_equal(prune_counts([0, 1, 3, 10], 0.5), [0, 0, 1, 5])
        assert_array_equal(prune_counts([2], 0.99), [1])

    def test_drops_highest_scores_with_column_ties(self):
        adj = from_undirected(5, [0, 0, 0, 0], [1, 2, 3, 4])
        scores = np.array([0.0, 0.9, 0.5, 0.9, 0.1])
        pruned = prune_in_neighbors(adj, scores, 0.5).to_dense()
        assert_array_equal(np.flatnonzero(pruned[0]), [2, 4])
        # leaves keep their single neighbor
        assert_array_equal(pruned[1:, 0], 1.0)

    def test_random_keeps_support_subset(self):
        adj = generate_sbm(SbmConfig(n=60, K=3, p_in=0.2, d=4)).adjacency
        pruned = prune_in_neighbors(adj, np.zeros(60), 0.3, rng=np.random.default_rng(0))
        assert np.all((pruned.to_dense() > 0) <= (adj.to_dense() > 0))
        assert pruned.nnz < adj.nnz

    def test_ratio_validated(self):
        with pytest.raises(ValueError):
            prune_in_neighbors(from_undirected(2, [0], [1]), np.zeros(2), 1.0)


class TestRecords:
    def test_fingerprint_ignores_key_order_and_seed(self):
        a = ExperimentRecord("pipeline", {"x": 1, "y": [1, 2]}, 0, {})
        b = ExperimentRecord("pipeline", {"y": [1, 2], "x": 1}, 5, {})
        assert a.fingerprint == b.fingerprint
        assert len(a.fingerprint) == 16

    def test_bad_fingerprint_rejected(self):
        with pytest.raises(ValueError):
            ExperimentRecord("base", {}, 0, {}, fingerprint="0" * 16)

    def test_log_roundtrip(self, tmp_path):
        log = RunLog(tmp_path / "runs.jsonl")
        rec = ExperimentRecord("base", {"a": 1}, 3, {"base": {"test_acc": 0.5}})
        log.append(rec)
        log.append(rec)
        back = log.read()
        assert len(back) == 2 and back[0] == rec

    def test_summary_matches_statistics(self):
        accs = [0.7, 0.75, 0.72, 0.9]
        recs = [ExperimentRecord("pipeline", {"a": 1}, s,
                                 {"base": {"test_acc": a - 0.1}, "enhanced": {"test_acc": a}})
                for s, a in enumerate(accs)]
        (s,) = summarize(recs)
        assert s.enhanced[0] == pytest.approx(statistics.mean(accs))
        assert s.enhanced[1] == pytest.approx(statistics.stdev(accs))
        assert s.delta == pytest.approx(0.1)
        assert "±" in format_summary([s])

    def test_mean_std_single(self):
        assert mean_std([0.4]) == (0.4, 0.0)
        with pytest.raises(ValueError):
            mean_std([])


class TestRuns:
    def test_replay_reproduces(self):
        rec, _, _ = run(TINY, seed=2)
        again = replay(ExperimentRecord.from_dict(json.loads(rec.to_json())))
        assert same_outcome(rec, again)
        assert rec.metrics["psi_evals_per_epoch"] > 0

    def test_base_only(self):
        rec, result, _ = run(TINY.with_(ungsl_on=False), seed=0)
        assert rec.kind == "base" and result is None
        assert "enhanced" not in rec.metrics

    def test_parallel_matches_serial(self):
        groups = [[TINY], [TINY.with_(ungsl_on=False)]]
        a = execute(groups, [0, 1], jobs=1)
        b = execute(groups, [0, 1], jobs=2)
        assert all(same_outcome(x, y) for x, y in zip(a, b))

    def test_robustness_shapes(self):
        out, records = robustness(TINY, [0.0, 0.2], [0, 1], learners=("metric_knn",))
        assert set(out) == {("metric_knn", 0.0), ("metric_knn", 0.2)}
        assert len(records) == 4

    def test_sweep_shares_base_run(self):
        series, _ = sweep(TINY, "beta", [0.2, 0.8], [0])
        assert series[0][1] == series[1][1]

    def test_symmetrize_ablation(self):
        comp, records = ablation_symmetrize(TINY, [0])
        assert comp.label_a == "asymmetric" and len(records) == 2

    def test_unknown_sweep_parameter(self):
        with pytest.raises(ValueError):
            sweep(TINY, "k", [1], [0])


def test_linear_r_squared():
    x = np.arange(5.0)
    assert linear_r_squared(x, 2 * x + 1) == pytest.approx(1.0)
