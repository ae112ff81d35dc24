"""Attaching uncertainty-aware reweighting to a structure learner.

The pipeline trains a base learner, freezes per-node uncertainty from its
predictions, retrains a freshly initialized learner with reweighting active
and exports the refined structure.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .gsl import StructureLearner
from .reweight import ThresholdVector, UnGslConfig, fixed_thresholds, reweight
from .seeding import stream
from .uncertainty import contrastive_pretrain_uncertainty, pretrain_uncertainty


class UnGslState:
    """Thresholds, frozen uncertainty and ablation switches for one learner."""

    def __init__(self, uncertainty, cfg, n, rng, fixed_fraction=None, symmetrize=False):
        if len(uncertainty) != n:
            raise ValueError("uncertainty vector length differs from node count")
        self.uncertainty = uncertainty
        self.cfg = cfg
        self.eps = ThresholdVector(n, rng, cfg)
        self.fixed_fraction = fixed_fraction
        self.symmetrize = symmetrize
        self.last = None

    @property
    def learnable(self):
        return self.fixed_fraction is None

    def thresholds_for(self, S):
        if self.learnable:
            return self.eps.values
        return fixed_thresholds(S, self.uncertainty.c, self.fixed_fraction)

    def refine(self, S):
        self.last = reweight(S, self.uncertainty, self.thresholds_for(S), self.cfg)
        return self.last


def attach(learner, uncertainty, cfg=None, rng=None, fixed_fraction=None, symmetrize=False):
    """Make ``learner`` generate ``reweight(S)`` instead of ``S``.

    The thresholds join the learner's optimizer with their own learning rate
    (``cfg.eps_lr``); loss and schedule are untouched. Returns the learner.
    """
    cfg = UnGslConfig() if cfg is None else cfg
    rng = stream(learner.train_cfg.seed, "ungsl/eps") if rng is None else rng
    state = UnGslState(uncertainty, cfg, learner.graph.n, rng, fixed_fraction, symmetrize)
    learner.attach_state(state)
    return learner


@dataclass
class PipelineResult:
    base: object
    enhanced: object
    structure: object
    uncertainty: object
    thresholds: np.ndarray | None
    timings: dict = field(default_factory=dict)
    base_learner: object = field(default=None, repr=False)
    learner: object = field(default=None, repr=False)


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")
        self.stage = stage
        self.__cause__ = cause


def pipeline(graph, gsl_cfg, ungsl_cfg, train_cfg, *, attach_ungsl=True, uncertainty_source="entropy",
             fixed_fraction=None, symmetrize=False, base_learner=None, temperature=0.2):
    """Pretrain, estimate uncertainty, retrain with reweighting, export.

    All randomness derives from ``train_cfg.seed``. The retrain stage starts
    from the same fresh initialization as the pretrain stage, so with
    ``attach_ungsl=False`` it reproduces the pretrain report exactly.
    ``base_learner`` may supply an already-fitted stage-1 learner for the
    same configuration to skip retraining it.
    """
    timings = {}
    stage = "pretrain"
    try:
        t0 = time.perf_counter()
        if base_learner is None:
            base_learner = StructureLearner(gsl_cfg, graph, train_cfg)
            base_learner.fit()
        base_report = base_learner.report
        timings["pretrain"] = time.perf_counter() - t0

        stage = "uncertainty"
        t0 = time.perf_counter()
        if uncertainty_source == "entropy":
            u = pretrain_uncertainty(base_learner, graph)
        elif uncertainty_source == "contrastive":
            u = contrastive_pretrain_uncertainty(base_learner, graph,
                                                 stream(train_cfg.seed, "ungsl/augment"), temperature)
        else:
            raise ValueError(f"unknown uncertainty source {uncertainty_source!r}")
        timings["uncertainty"] = time.perf_counter() - t0

        stage = "retrain"
        t0 = time.perf_counter()
        learner = StructureLearner(gsl_cfg, graph, train_cfg)
        if attach_ungsl:
            attach(learner, u, ungsl_cfg, fixed_fraction=fixed_fraction, symmetrize=symmetrize)
        enhanced = learner.fit()
        timings["retrain"] = time.perf_counter() - t0

        stage = "export"
        structure = learner.export_structure()
    except Exception as exc:  # every stage failure is reported with its label
        raise StageError(stage, exc) from exc
    eps = learner.ungsl.eps.values.copy() if learner.ungsl is not None and learner.ungsl.learnable else None
    return PipelineResult(base_report, enhanced, structure, u, eps, timings, base_learner, learner)
