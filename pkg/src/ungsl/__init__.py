"""Uncertainty-aware graph structure learning.

Sparse graph primitives, a from-scratch GCN with hand-written gradients,
two embedding-based structure learners, confidence-thresholded edge
reweighting that plugs into either learner, numerical checks of the entropy
bound behind the method, and an experiment harness.

The hot kernels come from a compiled extension when available and fall back
to numpy/scipy otherwise; see :mod:`ungsl._backend`.
"""
from ._backend import NAME as BACKEND
from .gnn import TrainConfig, TrainReport
from .graph import Graph, SparseMatrix, SplitMasks, WeightedAdjacency, normalize
from .gsl import GslConfig, StructureLearner
from .plugin import PipelineResult, StageError, attach, pipeline
from .reweight import UnGslConfig, psi, reweight
from .uncertainty import UncertaintyVector, entropy

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Graph", "SparseMatrix", "SplitMasks", "WeightedAdjacency", "normalize",
    "TrainConfig", "TrainReport", "GslConfig", "StructureLearner", "UnGslConfig", "psi",
    "reweight", "UncertaintyVector", "entropy", "attach", "pipeline", "PipelineResult",
    "StageError",
]
