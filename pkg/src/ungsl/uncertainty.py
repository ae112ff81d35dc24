"""Per-node uncertainty: entropy of class probabilities or a contrastive proxy.

Confidence is ``exp(-u)``; logarithms are natural throughout.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .graph import from_undirected, undirected_edges
from .numerics import softmax_rows


@dataclass(frozen=True)
class UncertaintyVector:
    u: np.ndarray
    c: np.ndarray
    source: str = "entropy"

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64).copy()
        c = np.asarray(self.c, dtype=np.float64).copy()
        if np.any(u < 0) or not np.all(np.isfinite(u)):
            raise ValueError("uncertainty must be finite and nonnegative")
        u.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "c", c)

    @classmethod
    def from_u(cls, u, source="entropy"):
        u = np.asarray(u, dtype=np.float64)
        return cls(u, np.exp(-u), source)

    def __len__(self):
        return len(self.u)

    def permuted(self, perm):
        return UncertaintyVector(self.u[perm], self.c[perm], self.source)


def check_probs(p, tol=1e-6):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError("probabilities must be an n x K matrix")
    if np.any(p < -tol) or np.any(np.abs(p.sum(axis=1) - 1.0) > tol):
        raise ValueError("rows must be nonnegative and sum to 1")
    return p


def entropy_rows(p):
    """``-sum_k p_k ln p_k`` per row with ``0 ln 0 = 0``."""
    p = np.clip(np.asarray(p, dtype=np.float64), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return np.maximum(-terms.sum(axis=1), 0.0)


def entropy(p):
    """Entropy of each probability row, as an UncertaintyVector."""
    return UncertaintyVector.from_u(entropy_rows(check_probs(p)), "entropy")


def linearized_probs(O):
    """Probabilities with the exponential dropped: ``(O_i + 1) / sum_k (O_ik + 1)``.

    Requires every ``|O_ij| < 1``.
    """
    O = np.asarray(O, dtype=np.float64)
    if np.any(np.abs(O) >= 1):
        raise ValueError("linearized probabilities need max |O_ij| < 1")
    shifted = O + 1.0
    return shifted / shifted.sum(axis=1, keepdims=True)


def pretrain_uncertainty(learner, graph):
    """Entropy of the fitted learner's softmax predictions, frozen.

    ``learner`` is anything with ``is_fitted`` and ``predict_logits(graph)``.
    """
    if not getattr(learner, "is_fitted", False):
        raise RuntimeError("model must be trained before estimating uncertainty")
    probs = softmax_rows(learner.predict_logits(graph))
    return entropy(probs)


def _unit_rows(Z):
    Z = np.asarray(Z, dtype=np.float64)
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm embedding row: cosine similarity undefined")
    return Z / norms


def _contrastive_term(A, B, t):
    """``-log softmax`` of the positive pair along each row of ``A B^T / t``."""
    sim = (A @ B.T) / t
    top = sim.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(sim - top).sum(axis=1))
    return lse - np.diag(sim)


def contrastive_uncertainty(Z, Z_aug, t=0.2):
    """Symmetric node-level contrastive loss between two views, per node."""
    if t <= 0:
        raise ValueError("temperature must be positive")
    Z = np.asarray(Z, dtype=np.float64)
    Z_aug = np.asarray(Z_aug, dtype=np.float64)
    if Z.shape != Z_aug.shape:
        raise ValueError("embedding views must share a shape")
    a, b = _unit_rows(Z), _unit_rows(Z_aug)
    u = 0.5 * (_contrastive_term(a, b, t) + _contrastive_term(b, a, t))
    return UncertaintyVector.from_u(np.maximum(u, 0.0), "contrastive")


def augment(graph, rng, edge_drop=0.2, feature_mask=0.2):
    """Augmented view: drop undirected edges and mask feature columns."""
    i, j = undirected_edges(graph.adjacency)
    keep = rng.random(len(i)) >= edge_drop
    adj = from_undirected(graph.n, i[keep], j[keep])
    cols = rng.random(graph.features.shape[1]) >= feature_mask
    return graph.replace(adjacency=adj, features=graph.features * cols)


def contrastive_pretrain_uncertainty(learner, graph, rng, t=0.2):
    """Contrastive proxy from the fitted learner's hidden embeddings on two views."""
    if not getattr(learner, "is_fitted", False):
        raise RuntimeError("model must be trained before estimating uncertainty")
    z = learner.embed(graph)
    z_aug = learner.embed(augment(graph, rng))
    return contrastive_uncertainty(z, z_aug, t)


def write_uncertainty_csv(path, uv, eps=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = ["node_id", "entropy", "confidence"] + (["epsilon"] if eps is not None else [])
        w.writerow(header)
        for i in range(len(uv)):
            row = [i, repr(float(uv.u[i])), repr(float(uv.c[i]))]
            if eps is not None:
                row.append(repr(float(eps[i])))
            w.writerow(row)


def read_uncertainty_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    u = np.array([float(r["entropy"]) for r in rows])
    c = np.array([float(r["confidence"]) for r in rows])
    return UncertaintyVector(u, c)


__all__ = [
    "UncertaintyVector", "entropy", "entropy_rows", "linearized_probs",
    "pretrain_uncertainty", "contrastive_uncertainty", "augment",
    "contrastive_pretrain_uncertainty", "write_uncertainty_csv", "read_uncertainty_csv",
]

