import numpy as np
import pytest
from numpy.testing import assert_array_equal

from ungsl.gnn import TrainConfig
from ungsl.graph import asymmetric_pairs
from ungsl.gsl import GslConfig, StructureLearner
from ungsl.plugin import StageError, attach, pipeline
from ungsl.reweight import UnGslConfig
from ungsl.uncertainty import UncertaintyVector

from conftest import small_graph

GSL = GslConfig(method="metric_knn", k=3, encoder_hidden=8)
TRAIN = TrainConfig(epochs=15, hidden=8, seed=1)


@pytest.fixture
def g():
    return small_graph(n=24, K=3, d=6, seed=2)


class TestAttach:
    def test_adds_thresholds_to_optimizer(self, g):
        l = StructureLearner(GSL, g, TRAIN)
        n_before = len(l.params)
        attach(l, UncertaintyVector.from_u(np.zeros(g.n)))
        assert len(l.params) == n_before + 1
        assert l.params[-1].lr == UnGslConfig().eps_lr

    def test_twice_rejected(self, g):
        l = StructureLearner(GSL, g, TRAIN)
        attach(l, UncertaintyVector.from_u(np.zeros(g.n)))
        with pytest.raises(RuntimeError):
            attach(l, UncertaintyVector.from_u(np.zeros(g.n)))

    def test_length_mismatch(self, g):
        with pytest.raises(ValueError):
            attach(StructureLearner(GSL, g, TRAIN), UncertaintyVector.from_u(np.zeros(3)))

    def test_fixed_thresholds_not_learnable(self, g):
        l = StructureLearner(GSL, g, TRAIN)
        n_before = len(l.params)
        attach(l, UncertaintyVector.from_u(np.zeros(g.n)), fixed_fraction=0.3)
        assert len(l.params) == n_before

    def test_reweighting_counts_evaluations(self, g):
        l = StructureLearner(GSL, g, TRAIN)
        attach(l, UncertaintyVector.from_u(np.full(g.n, 0.5)))
        build = l.build()
        assert build.psi_evals == build.S.num_offdiag()
        assert_array_equal(build.S_final.indices, build.S.indices)


class TestPipeline:
    def test_detached_retrain_reproduces_pretrain(self, g):
        res = pipeline(g, GSL, UnGslConfig(), TRAIN, attach_ungsl=False)
        assert res.enhanced.losses == res.base.losses
        assert res.enhanced.test_acc == res.base.test_acc
        assert res.thresholds is None

    def test_unit_constant_branch_is_identity(self, g):
        # beta = 1 with every threshold above every confidence leaves S unchanged
        cfg = UnGslConfig(beta=1.0, eps_init_low=2.0, eps_init_high=2.0)
        res = pipeline(g, GSL, cfg, TRAIN)
        assert res.enhanced.losses == res.base.losses
        assert_array_equal(res.thresholds, 2.0)

    def test_enhanced_run(self, g):
        res = pipeline(g, GSL, UnGslConfig(), TRAIN)
        assert len(res.uncertainty) == g.n
        assert res.thresholds.shape == (g.n,)
        assert set(res.timings) == {"pretrain", "uncertainty", "retrain"}
        assert np.all(res.structure.rows != res.structure.indices)

    def test_reuses_base_learner(self, g):
        first = pipeline(g, GSL, UnGslConfig(), TRAIN)
        second = pipeline(g, GSL, UnGslConfig(), TRAIN, base_learner=first.base_learner)
        assert second.enhanced.losses == first.enhanced.losses

    def test_symmetrized_export(self, g):
        res = pipeline(g, GSL, UnGslConfig(), TRAIN, symmetrize=True)
        assert asymmetric_pairs(res.structure) == 0

    def test_contrastive_source(self, g):
        res = pipeline(g, GSL, UnGslConfig(), TRAIN, uncertainty_source="contrastive")
        assert res.uncertainty.source == "contrastive"

    def test_stage_error_labels_failure(self, g):
        with pytest.raises(StageError) as err:
            pipeline(g, GSL, UnGslConfig(), TRAIN, uncertainty_source="oracle")
        assert err.value.stage == "uncertainty"
        assert isinstance(err.value.__cause__, ValueError)
