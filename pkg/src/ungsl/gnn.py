"""Two-layer GCN and SGC with hand-derived backward passes, plus training."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .graph import sddmm, spmm, spmm_t
from .numerics import AdamState, ParamTensor, adam_step, glorot, log_softmax_rows, softmax_rows
from .seeding import stream


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, what="loss"):
        super().__init__(f"non-finite {what} at epoch {epoch}")
        self.epoch = epoch


class GcnModel:
    """``logits = A relu(A X W1) W2`` with dropout on the hidden layer."""

    def __init__(self, d, hidden, n_classes, dropout=0.5, rng=None, weight_decay=0.0):
        rng = np.random.default_rng(0) if rng is None else rng
        self.W1 = ParamTensor("gcn.W1", glorot(rng, d, hidden), weight_decay=weight_decay)
        self.W2 = ParamTensor("gcn.W2", glorot(rng, hidden, n_classes), weight_decay=weight_decay)
        self.dropout = dropout

    @property
    def params(self):
        return [self.W1, self.W2]

    @property
    def n_classes(self):
        return self.W2.value.shape[1]

    def state(self):
        return [p.value.copy() for p in self.params]

    def load(self, state):
        for p, v in zip(self.params, state):
            p.value[...] = v


class SgcModel:
    """``logits = A^k X W``."""

    def __init__(self, d, n_classes, k=2, rng=None, weight_decay=0.0):
        if k < 1:
            raise ValueError("propagation depth must be >= 1")
        rng = np.random.default_rng(0) if rng is None else rng
        self.k = k
        self.W = ParamTensor("sgc.W", glorot(rng, d, n_classes), weight_decay=weight_decay)

    @property
    def params(self):
        return [self.W]

    @property
    def n_classes(self):
        return self.W.value.shape[1]

    def state(self):
        return [self.W.value.copy()]

    def load(self, state):
        self.W.value[...] = state[0]


@dataclass
class GcnCache:
    adj: object
    X: np.ndarray
    P1: np.ndarray
    H1: np.ndarray
    mask: np.ndarray | None
    Z1: np.ndarray
    P2: np.ndarray
    weights: tuple


def gcn_forward(model, adj_norm, X, training=False, rng=None):
    """Return ``(logits, cache)``; dropout needs ``rng`` in training mode."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != model.W1.value.shape[0]:
        raise ValueError(f"feature dim {X.shape[1]} != model input dim {model.W1.value.shape[0]}")
    P1 = spmm(adj_norm, X)
    H1 = P1 @ model.W1.value
    Z1 = np.maximum(H1, 0.0)
    mask = None
    if training and model.dropout > 0:
        keep = 1.0 - model.dropout
        mask = (rng.random(Z1.shape) < keep) / keep
        Z1 = Z1 * mask
    P2 = spmm(adj_norm, Z1)
    logits = P2 @ model.W2.value
    cache = GcnCache(adj_norm, X, P1, H1, mask, Z1, P2,
                     (model.W1.value.copy(), model.W2.value.copy()))
    return logits, cache


def gcn_backward(model, cache, dlogits, adj_grad=False):
    """Accumulate weight gradients into ``model``; optionally return dL/dA.

    The adjacency gradient is aligned with ``cache.adj.data`` (stored
    entries only).
    """
    W1, W2 = model.W1.value, model.W2.value
    if not (np.array_equal(W1, cache.weights[0]) and np.array_equal(W2, cache.weights[1])):
        raise RuntimeError("stale forward cache: weights changed since the forward pass")
    adj = cache.adj
    model.W2.grad += cache.P2.T @ dlogits
    dP2 = dlogits @ W2.T
    dZ1 = spmm_t(adj, dP2)
    if cache.mask is not None:
        dZ1 = dZ1 * cache.mask
    dH1 = dZ1 * (cache.H1 > 0)
    model.W1.grad += cache.P1.T @ dH1
    if not adj_grad:
        return None
    dP1 = dH1 @ W1.T
    return sddmm(adj, dP2, cache.Z1) + sddmm(adj, dP1, cache.X)


def cross_entropy(logits, labels, mask):
    """Mean negative log-likelihood over ``mask``; returns ``(loss, dlogits)``."""
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise ValueError("empty mask")
    n, K = logits.shape
    y = np.asarray(labels)[idx]
    if np.any((y < 0) | (y >= K)):
        raise ValueError("label out of range")
    logp = log_softmax_rows(logits[idx])
    loss = -logp[np.arange(len(idx)), y].mean()
    d = np.zeros_like(logits)
    p = np.exp(logp)
    p[np.arange(len(idx)), y] -= 1.0
    d[idx] = p / len(idx)
    return float(loss), d


def accuracy(logits, labels, mask):
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return 0.0
    return float(np.mean(np.argmax(logits[idx], axis=1) == np.asarray(labels)[idx]))


def sgc_forward(model, adj_norm, X):
    P = np.asarray(X, dtype=np.float64)
    if P.shape[1] != model.W.value.shape[0]:
        raise ValueError("feature dim mismatch")
    for _ in range(model.k):
        P = spmm(adj_norm, P)
    return P @ model.W.value, P


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    patience: int = 100
    hidden: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.patience < 1:
            raise ValueError("epochs and patience must be >= 1")


@dataclass
class TrainReport:
    best_val_acc: float
    test_acc: float
    best_epoch: int
    losses: list
    seconds: float = field(default=0.0, compare=False)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {"best_val_acc": self.best_val_acc, "test_acc": self.test_acc,
                "best_epoch": self.best_epoch, "losses": list(self.losses),
                "seconds": self.seconds, **({"extra": self.extra} if self.extra else {})}


def fit(step, evaluate, params, cfg, lr=None, labels=None, masks=None, on_best=None):
    """Shared epoch loop: Adam steps with best-validation early stopping.

    ``step()`` fills gradients and returns the training loss; ``evaluate()``
    returns logits in evaluation mode. ``on_best(epoch)`` runs whenever the
    validation accuracy strictly improves.
    """
    state = AdamState(params, lr=cfg.lr if lr is None else lr)
    losses = []
    best_val, best_test, best_epoch = -1.0, 0.0, -1
    best_params = None
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        state.zero_grad()
        loss = step()
        if not np.isfinite(loss):
            raise DivergenceError(epoch)
        losses.append(loss)
        adam_step(params, state)
        logits = evaluate()
        val = accuracy(logits, labels, masks.val)
        if val > best_val:
            best_val, best_epoch = val, epoch
            best_test = accuracy(logits, labels, masks.test)
            best_params = [p.value.copy() for p in params]
            if on_best is not None:
                on_best(epoch)
        elif epoch - best_epoch >= cfg.patience:
            break
    for p, v in zip(params, best_params):
        p.value[...] = v
    return TrainReport(best_val, best_test, best_epoch, losses, time.perf_counter() - t0)


def train(model, graph, adj_norm, cfg):
    """Train ``model`` on a fixed normalized adjacency.

    Returns ``(report, model)``; the model holds the best-validation weights.
    """
    if graph.masks is None or graph.labels is None:
        raise ValueError("training needs labels and split masks")
    X = graph.features
    drop_rng = stream(cfg.seed, "gnn/dropout")

    if isinstance(model, SgcModel):
        _, P = sgc_forward(model, adj_norm, X)

        def step():
            logits = P @ model.W.value
            loss, d = cross_entropy(logits, graph.labels, graph.masks.train)
            model.W.grad += P.T @ d
            return loss

        def evaluate():
            return P @ model.W.value
    else:
        def step():
            logits, cache = gcn_forward(model, adj_norm, X, training=True, rng=drop_rng)
            loss, d = cross_entropy(logits, graph.labels, graph.masks.train)
            gcn_backward(model, cache, d)
            return loss

        def evaluate():
            return gcn_forward(model, adj_norm, X)[0]

    report = fit(step, evaluate, model.params, cfg, labels=graph.labels, masks=graph.masks)
    return report, model


def make_model(backbone, d, n_classes, cfg, rng=None, k=2):
    rng = stream(cfg.seed, "gnn/init") if rng is None else rng
    if backbone == "gcn":
        return GcnModel(d, cfg.hidden, n_classes, cfg.dropout, rng, cfg.weight_decay)
    if backbone == "sgc":
        return SgcModel(d, n_classes, k, rng, cfg.weight_decay)
    raise ValueError(f"unknown backbone {backbone!r}")


def train_gcn(graph, adj_norm, cfg, backbone="gcn"):
    """Fresh model from the config seed, trained on ``adj_norm``."""
    model = make_model(backbone, graph.features.shape[1], graph.n_classes, cfg)
    return train(model, graph, adj_norm, cfg)


def predict_proba(model, adj_norm, X):
    if isinstance(model, SgcModel):
        return softmax_rows(sgc_forward(model, adj_norm, X)[0])
    return softmax_rows(gcn_forward(model, adj_norm, X)[0])


__all__ = [
    "GcnModel", "SgcModel", "TrainConfig", "TrainReport", "DivergenceError",
    "gcn_forward", "gcn_backward", "cross_entropy", "accuracy", "sgc_forward",
    "train", "train_gcn", "make_model", "fit", "predict_proba",
]

