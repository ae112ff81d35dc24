"""Embedding-based graph structure learners.

Both learners encode the input graph with a one-layer linear GCN,
``E = A_sym X W_enc``, score node pairs from ``E``, keep the top-k scores per
row, symmetrize the kept entries and combine them with the observed graph:

* ``similarity_residual`` (GRCN-like): ``S = A + knn(sigmoid(E E^T))``
* ``metric_knn`` (IDGL-like): ``S = alpha * knn(cos(E)) + (1 - alpha) * A``

``S`` carries no self-loops. The downstream GCN consumes
``D^-1 (S + I)``. An attached UnGSL state rescales ``S`` before that
normalization.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .gnn import GcnModel, TrainConfig, cross_entropy, fit, gcn_backward, gcn_forward
from .graph import (
    SparseMatrix, WeightedAdjacency, normalize, normalize_backward, normalize_with_cache,
    sddmm, sparse_sum, spmm, spmm_t, symmetrize_backward, symmetrize_with_map,
)
from .numerics import ParamTensor, glorot, sigmoid
from .reweight import reweight_backward
from .seeding import stream

METHODS = ("similarity_residual", "metric_knn")
REGULARIZERS = ("l1_sparsity", "smoothness")


@dataclass
class GslConfig:
    method: str = "metric_knn"
    k: int = 10
    alpha: float = 0.5
    lam: float = 0.0
    regularizers: tuple = ()
    encoder_hidden: int = 64
    similarity: str | None = None
    encoder_lr: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown GSL method {self.method!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.alpha <= 1.0 or self.lam < 0:
            raise ValueError("alpha must lie in [0, 1] and lambda must be >= 0")
        self.regularizers = tuple(self.regularizers)
        for r in self.regularizers:
            if r not in REGULARIZERS:
                raise ValueError(f"unknown regularizer {r!r}")
        if self.similarity is None:
            self.similarity = "inner_product" if self.method == "similarity_residual" else "cosine"
        if self.similarity not in ("inner_product", "cosine"):
            raise ValueError(f"unknown similarity {self.similarity!r}")


def regularize(S, X, which):
    """Structure penalty and its gradient on the stored entries of ``S``.

    ``l1_sparsity`` is ``sum |S_ij|``; ``smoothness`` is
    ``1/2 sum_ij S_ij ||x_i - x_j||^2`` (equal to ``tr(X^T L X)`` for
    symmetric ``S``).
    """
    penalty = 0.0
    grad = np.zeros(S.nnz)
    if "l1_sparsity" in which:
        penalty += float(np.abs(S.data).sum())
        grad += np.sign(S.data)
    if "smoothness" in which:
        sq = pair_sq_dist(S, X)
        penalty += 0.5 * float(S.data @ sq)
        grad += 0.5 * sq
    return penalty, grad


def pair_sq_dist(S, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    norms = np.einsum("ij,ij->i", X, X)
    return np.maximum(norms[S.rows] + norms[S.indices] - 2.0 * sddmm(S, X, X), 0.0)


@dataclass
class StructureBuild:
    """One forward pass of structure generation with its backward caches."""

    S: WeightedAdjacency
    S_final: WeightedAdjacency
    adj_norm: WeightedAdjacency
    norm_cache: tuple
    knn: dict | None = None
    pos_knn: np.ndarray | None = None
    refined: object = None
    sym_maps: tuple | None = None
    psi_evals: int = 0
    extra: dict = field(default_factory=dict)


class _Inputs:
    def __init__(self, graph):
        self.graph = graph
        self.A = graph.adjacency
        self.enc_adj = normalize(graph.adjacency, "symmetric", True)
        self.AX = spmm(self.enc_adj, graph.features)


class StructureLearner:
    """Encoder, downstream GCN and the current learned structure.

    Initialization draws the GCN weights from the ``gnn/init`` stream and the
    encoder from ``gsl/encoder``; with ``alpha = 0`` and ``lam = 0`` training
    therefore matches a plain GCN on ``D^-1 (A + I)`` step for step.
    """

    def __init__(self, config, graph, train_cfg):
        self.config = config
        self.train_cfg = train_cfg
        self.graph = graph
        n = graph.n
        if config.k >= n:
            raise ValueError(f"k={config.k} must be smaller than the node count {n}")
        d = graph.features.shape[1]
        self.gcn = GcnModel(d, train_cfg.hidden, graph.n_classes, train_cfg.dropout,
                            stream(train_cfg.seed, "gnn/init"), train_cfg.weight_decay)
        self.W_enc = ParamTensor("gsl.W_enc", glorot(stream(train_cfg.seed, "gsl/encoder"),
                                                     d, config.encoder_hidden),
                                 lr=config.encoder_lr, weight_decay=train_cfg.weight_decay)
        self.ungsl = None
        self.is_fitted = False
        self.best_structure = None
        self.report = None
        self._inputs = {}
        self._cached = None
        self.psi_evals = []

    # ---------------------------------------------------------------- helpers
    def _inputs_for(self, graph):
        key = id(graph)
        if key not in self._inputs:
            self._inputs[key] = _Inputs(graph)
        return self._inputs[key]

    @property
    def params(self):
        ps = self.gcn.params + [self.W_enc]
        if self.ungsl is not None and self.ungsl.learnable:
            ps.append(self.ungsl.eps.param)
        return ps

    def attach_state(self, state):
        if self.ungsl is not None:
            raise RuntimeError("UnGSL is already attached to this learner")
        self.ungsl = state

    # ---------------------------------------------------------------- forward
    def _knn(self, inp):
        """Top-k similarity entries from the current encoder."""
        cfg = self.config
        E = inp.AX @ self.W_enc.value
        if cfg.similarity == "cosine":
            norms = np.linalg.norm(E, axis=1, keepdims=True)
            norms = np.where(norms > 0, norms, 1.0)
            En = E / norms
        else:
            norms, En = None, E
        scores = En @ En.T
        top = _backend.kernels.row_topk(np.ascontiguousarray(scores), cfg.k, True)
        top.sort(axis=1)
        n = scores.shape[0]
        rows = np.repeat(np.arange(n), cfg.k)
        cols = top.reshape(-1)
        raw = scores[rows, cols]
        if cfg.method == "similarity_residual":
            w = sigmoid(raw)
            dw = w * (1.0 - w)
            keep = np.ones(len(w), dtype=bool)
        else:
            keep = raw > 0
            w = raw
            dw = np.ones_like(raw)
        rows, cols, w, dw = rows[keep], cols[keep], w[keep], dw[keep]
        indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n))])
        T = WeightedAdjacency(indptr, cols, w, (n, n), check=False)
        return {"E": E, "En": En, "norms": norms, "T": T, "dw": dw}

    def build(self, graph=None, training=True):
        """Generate the structure for ``graph`` (default: the training graph)."""
        inp = self._inputs_for(self.graph if graph is None else graph)
        cfg = self.config
        n = inp.A.n
        if cfg.method == "metric_knn":
            coef_knn, coef_a = cfg.alpha, 1.0 - cfg.alpha
        else:
            coef_knn, coef_a = 1.0, 1.0
        knn = None
        terms = [(coef_a, inp.A)]
        if coef_knn != 0:
            knn = self._knn(inp)
            K, pa, pm = symmetrize_with_map(knn["T"])
            knn["sym"] = (pa, pm)
            terms.append((coef_knn, K))
        S, positions = sparse_sum(terms, n)
        pos_knn = positions[1] if knn is not None else None
        S_final, refined, sym_maps, evals = S, None, None, 0
        if self.ungsl is not None:
            refined = self.ungsl.refine(S)
            S_final = refined.S_hat
            evals = refined.n_psi_evals
            if self.ungsl.symmetrize:
                S_sym, spa, spm = symmetrize_with_map(S_final)
                S_final = WeightedAdjacency.from_sparse(S_sym, check=False)
                sym_maps = (spa, spm)
        adj_norm, ncache = normalize_with_cache(S_final, "row", True)
        return StructureBuild(S, S_final, adj_norm, ncache, knn, pos_knn, refined, sym_maps, evals)

    # --------------------------------------------------------------- backward
    def structure_backward(self, build, grad_norm, grad_final=None):
        """Push dL/d(normalized adjacency) back to the encoder and thresholds."""
        g = normalize_backward(build.norm_cache, build.adj_norm, grad_norm)
        if grad_final is not None:
            g = g + grad_final
        if build.sym_maps is not None:
            g = symmetrize_backward(g, *build.sym_maps)
        if build.refined is not None:
            d_eps, g = reweight_backward(build.refined, g)
            if self.ungsl.learnable:
                self.ungsl.eps.param.grad += d_eps
        if build.knn is None:
            return
        cfg = self.config
        coef = cfg.alpha if cfg.method == "metric_knn" else 1.0
        gK = coef * g[build.pos_knn]
        knn = build.knn
        gT = symmetrize_backward(gK, *knn["sym"]) * knn["dw"]
        T = knn["T"]
        G = SparseMatrix(T.indptr, T.indices, gT, T.shape, check=False)
        En = knn["En"]
        dEn = spmm(G, En) + spmm_t(G, En)
        if cfg.similarity == "cosine":
            radial = np.einsum("ij,ij->i", En, dEn)[:, None]
            dE = (dEn - En * radial) / knn["norms"]
        else:
            dE = dEn
        inp = self._inputs_for(self.graph)
        self.W_enc.grad += inp.AX.T @ dE

    # --------------------------------------------------------------- training
    def loss_and_grads(self, build, rng, training=True):
        """Task loss plus regularizer for one build; fills all gradients."""
        g = self.graph
        logits, cache = gcn_forward(self.gcn, build.adj_norm, g.features, training=training, rng=rng)
        loss, dlogits = cross_entropy(logits, g.labels, g.masks.train)
        need_adj = build.knn is not None or (self.ungsl is not None and self.ungsl.learnable) \
            or (self.config.lam > 0 and self.config.regularizers)
        grad_adj = gcn_backward(self.gcn, cache, dlogits, adj_grad=need_adj)
        grad_final = None
        if self.config.lam > 0 and self.config.regularizers:
            pen, grad_reg = regularize(build.S_final, g.features, self.config.regularizers)
            loss += self.config.lam * pen
            grad_final = self.config.lam * grad_reg
        if need_adj:
            self.structure_backward(build, grad_adj, grad_final)
        return loss

    def fit(self):
        """Joint training; returns the TrainReport of the best-validation epoch."""
        g = self.graph
        if g.masks is None or g.labels is None:
            raise ValueError("supervised training needs labels and masks")
        cfg = self.train_cfg
        drop_rng = stream(cfg.seed, "gnn/dropout")
        self._cached = None

        def step():
            build = self._cached if self._cached is not None else self.build()
            self._cached = None
            self.psi_evals.append(build.psi_evals)
            return self.loss_and_grads(build, drop_rng)

        def evaluate():
            self._cached = self.build()
            return gcn_forward(self.gcn, self._cached.adj_norm, g.features)[0]

        def on_best(epoch):
            self.best_structure = self._cached.S_final

        self.report = fit(step, evaluate, self.params, cfg, labels=g.labels, masks=g.masks,
                          on_best=on_best)
        self._cached = None
        self.is_fitted = True
        return self.report

    # -------------------------------------------------------------- inference
    def predict_logits(self, graph=None):
        build = self.build(graph, training=False)
        g = self.graph if graph is None else graph
        return gcn_forward(self.gcn, build.adj_norm, g.features)[0]

    def embed(self, graph=None):
        """Hidden GCN representations (evaluation mode)."""
        build = self.build(graph, training=False)
        g = self.graph if graph is None else graph
        _, cache = gcn_forward(self.gcn, build.adj_norm, g.features)
        return cache.Z1

    def export_structure(self):
        """Learned structure at the best-validation epoch (no self-loops)."""
        if not self.is_fitted or self.best_structure is None:
            raise RuntimeError("learner has not been trained")
        return self.best_structure


def build_structure(learner, graph=None):
    """Current structure ``S`` (before any UnGSL refinement)."""
    return learner.build(graph).S


def train_gsl(learner, graph=None, cfg=None):
    """Train ``learner`` on its graph; ``graph``/``cfg`` must match if given."""
    if graph is not None and graph is not learner.graph:
        raise ValueError("learner was constructed for a different graph")
    if cfg is not None and cfg != learner.train_cfg:
        raise ValueError("learner was constructed with a different TrainConfig")
    return learner.fit()


def export_structure(learner):
    return learner.export_structure()


__all__ = [
    "GslConfig", "StructureLearner", "StructureBuild", "regularize", "build_structure",
    "train_gsl", "export_structure", "TrainConfig",
]

