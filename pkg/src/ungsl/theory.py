"""Numerical checks of the entropy lower bound for one linear aggregation step.

For ``O = D^-1 (A + I) X W`` with every ``|O'_jk| < 1`` (``O' = X W``) and
probabilities taken without the softmax exponential, the entropy of node
``i`` after aggregation is bounded below by a convex combination of its
neighbors' pre-aggregation entropies::

    u_i >= sum_j eta_j u'_j,
    eta_j = A_ij sum_k (O'_jk + 1) / sum_j' A_ij' sum_k (O'_j'k + 1)

The proof rests on the log-sum inequality, checked here by
:func:`log_sum_oracle`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .gnn import TrainConfig, accuracy, cross_entropy, fit
from .graph import from_undirected, normalize, spmm
from .numerics import ParamTensor, glorot, softmax_rows
from .seeding import stream
from .uncertainty import entropy_rows, linearized_probs


@dataclass(frozen=True)
class EtaCoefficients:
    neighbors: np.ndarray
    eta: np.ndarray


def compute_eta(row_weights, O_prime, neighbors=None):
    """Bound weights for one target node.

    Parameters
    ----------
    row_weights : array_like
        ``A_ij`` for each neighbor ``j`` (self-loop included), from a
        row-normalized adjacency.
    O_prime : array_like
        Pre-aggregation logits of those neighbors, one row each.
    """
    a = np.asarray(row_weights, dtype=np.float64)
    O = np.atleast_2d(np.asarray(O_prime, dtype=np.float64))
    if np.any(np.abs(O) >= 1):
        raise ValueError("logits must satisfy max |O'| < 1")
    if np.any(a < 0) or len(a) != len(O):
        raise ValueError("need one nonnegative weight per neighbor row")
    mass = a * (O + 1.0).sum(axis=1)
    nb = np.arange(len(a)) if neighbors is None else np.asarray(neighbors)
    return EtaCoefficients(nb, mass / mass.sum())


@dataclass
class Prop1Report:
    u: np.ndarray
    bound: np.ndarray
    slack: np.ndarray
    eta_sum: np.ndarray
    eta_min: float
    eta_max: float
    scale: float
    eta_outside_open: int = 0
    isolated: int = 0

    @property
    def min_slack(self):
        return float(self.slack.min())

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "u_i", "bound", "slack"])
            for i in range(len(self.u)):
                w.writerow([i, repr(float(self.u[i])), repr(float(self.bound[i])), repr(float(self.slack[i]))])


def rescale_logits(O_prime, margin=0.99):
    """Scale into the open unit ball: ``O' * margin / (max|O'| + 1e-6)``."""
    O_prime = np.asarray(O_prime, dtype=np.float64)
    scale = margin / (np.abs(O_prime).max(initial=0.0) + 1e-6)
    return O_prime * scale, scale


def check_prop1(adjacency, X, W):
    """Per-node entropy after aggregation, its lower bound and the slack."""
    A_hat = normalize(adjacency, "row", True)
    O_prime, scale = rescale_logits(np.asarray(X, dtype=np.float64) @ np.asarray(W, dtype=np.float64))
    if np.any(np.abs(O_prime) >= 1):
        raise ValueError("logit rescaling failed to enforce max |O'| < 1")
    u_prime = entropy_rows(linearized_probs(O_prime))
    u = entropy_rows(linearized_probs(spmm(A_hat, O_prime)))
    rows, cols = A_hat.rows, A_hat.indices
    mass = A_hat.data * (O_prime[cols] + 1.0).sum(axis=1)
    denom = np.bincount(rows, weights=mass, minlength=A_hat.n)
    eta = mass / denom[rows]
    bound = np.bincount(rows, weights=eta * u_prime[cols], minlength=A_hat.n)
    eta_sum = np.bincount(rows, weights=eta, minlength=A_hat.n)
    # a node whose only neighbor is itself has eta = 1 by construction
    shared = np.diff(A_hat.indptr)[rows] > 1
    outside = int(np.sum(shared & ((eta <= 0) | (eta >= 1))))
    isolated = int(np.sum(np.diff(A_hat.indptr) == 1))
    return Prop1Report(u, bound, u - bound, eta_sum, float(eta.min()), float(eta.max()), scale,
                       outside, isolated)


def random_instance(rng, max_n=50, max_K=8, max_d=8):
    """Random undirected graph, features and classifier for bound checks."""
    n = int(rng.integers(1, max_n + 1))
    K = int(rng.integers(2, max_K + 1))
    d = int(rng.integers(1, max_d + 1))
    p = rng.uniform(0.0, 0.5)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    adj = from_undirected(n, iu[keep], ju[keep], rng.uniform(0.1, 2.0, keep.sum()))
    X = rng.standard_normal((n, d)) * rng.uniform(0.1, 5.0)
    W = rng.standard_normal((d, K))
    return adj, X, W


def verify_prop1(instances=1000, seed=0):
    """Run the bound on random instances; returns (min slack, eta stats, count)."""
    rng = stream(seed, "theory/prop1")
    min_slack = np.inf
    worst_sum = 0.0
    eta_lo, eta_hi = np.inf, -np.inf
    outside = isolated = 0
    for _ in range(instances):
        rep = check_prop1(*random_instance(rng))
        min_slack = min(min_slack, rep.min_slack)
        outside += rep.eta_outside_open
        isolated += rep.isolated
        worst_sum = max(worst_sum, float(np.abs(rep.eta_sum - 1.0).max()))
        eta_lo, eta_hi = min(eta_lo, rep.eta_min), max(eta_hi, rep.eta_max)
    return {"min_slack": float(min_slack), "max_eta_sum_error": worst_sum,
            "eta_min": float(eta_lo), "eta_max": float(eta_hi), "eta_outside_open": outside,
            "isolated_nodes": isolated, "instances": instances}


@dataclass(frozen=True)
class LogSumResult:
    lhs: float
    rhs: float
    holds: bool


def log_sum_oracle(a, b):
    """``sum a_i ln(a_i / b_i) >= (sum a) ln(sum a / sum b)`` for ``a >= 0``, ``b > 0``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be vectors of one length")
    if np.any(a < 0) or np.any(b <= 0) or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("need finite a >= 0 and b > 0")
    pos = a > 0
    lhs = float(np.sum(a[pos] * np.log(a[pos] / b[pos])))
    sa, sb = a.sum(), b.sum()
    rhs = float(sa * np.log(sa / sb)) if sa > 0 else 0.0
    return LogSumResult(lhs, rhs, lhs >= rhs - 1e-12 * max(1.0, abs(rhs)))


def verify_log_sum(trials=10_000, seed=0, max_dim=16):
    rng = stream(seed, "theory/logsum")
    failures = 0
    for _ in range(trials):
        k = int(rng.integers(1, max_dim + 1))
        a = rng.exponential(size=k) * (rng.random(k) > 0.2)
        b = rng.exponential(size=k) + 1e-3
        failures += not log_sum_oracle(a, b).holds
    return failures


# --------------------------------------------------------- entropy correlation

class OneLayerModel:
    """``logits = D^-1 (A + I) X W``: one propagation step and a linear classifier."""

    def __init__(self, graph, seed=0):
        self.graph = graph
        self.A_hat = normalize(graph.adjacency, "row", True)
        self.AX = spmm(self.A_hat, graph.features)
        rng = stream(seed, "theory/one_layer")
        self.W = ParamTensor("one_layer.W", glorot(rng, graph.features.shape[1], graph.n_classes))
        self.is_fitted = False

    def logits(self):
        return self.AX @ self.W.value

    def feature_logits(self):
        return self.graph.features @ self.W.value

    def fit(self, cfg=None):
        cfg = TrainConfig(epochs=200, lr=0.01, weight_decay=5e-4, patience=200) if cfg is None else cfg
        self.W.weight_decay = cfg.weight_decay
        g = self.graph

        def step():
            loss, d = cross_entropy(self.logits(), g.labels, g.masks.train)
            self.W.grad += self.AX.T @ d
            return loss

        self.report = fit(step, self.logits, [self.W], cfg, labels=g.labels, masks=g.masks)
        self.is_fitted = True
        return self

    def accuracy(self, mask):
        return accuracy(self.logits(), self.graph.labels, mask)


@dataclass
class CorrelationReport:
    u: np.ndarray
    neighbor_entropy: np.ndarray
    r: float
    degenerate: bool

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "u_i", "neighbor_avg_entropy"])
            for i in range(len(self.u)):
                w.writerow([i, repr(float(self.u[i])), repr(float(self.neighbor_entropy[i]))])


def pearson(x, y):
    """Pearson r, or ``None`` when either side has zero variance."""
    x = np.asarray(x, dtype=np.float64) - np.mean(x)
    y = np.asarray(y, dtype=np.float64) - np.mean(y)
    sx, sy = np.sqrt(x @ x), np.sqrt(y @ y)
    if sx == 0 or sy == 0:
        return None
    return float(np.clip((x @ y) / (sx * sy), -1.0, 1.0))


def correlation_from_pairs(u, neighbor_entropy):
    if len(u) < 3:
        raise ValueError("correlation needs at least 3 nodes")
    r = pearson(u, neighbor_entropy)
    return CorrelationReport(np.asarray(u), np.asarray(neighbor_entropy),
                             float("nan") if r is None else r, r is None)


def entropy_correlation(graph, model):
    """Entropy after aggregation versus the propagated entropy of raw-feature predictions."""
    if not getattr(model, "is_fitted", False):
        raise RuntimeError("entropy correlation needs a trained model")
    if graph.n < 3:
        raise ValueError("correlation needs at least 3 nodes")
    u = entropy_rows(softmax_rows(model.logits()))
    u_prime = entropy_rows(softmax_rows(model.feature_logits()))
    nbr = spmm(model.A_hat, u_prime[:, None])[:, 0]
    return correlation_from_pairs(u, nbr)


__all__ = [
    "EtaCoefficients", "compute_eta", "Prop1Report", "check_prop1", "rescale_logits",
    "random_instance", "verify_prop1", "LogSumResult", "log_sum_oracle", "verify_log_sum",
    "OneLayerModel", "CorrelationReport", "entropy_correlation", "pearson",
    "correlation_from_pairs",
]

