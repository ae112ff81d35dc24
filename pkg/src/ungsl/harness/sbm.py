"""Stochastic block model graphs with Gaussian class-prototype features."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..graph import Graph, SplitMasks, from_undirected
from ..seeding import stream


@dataclass(frozen=True)
class SbmConfig:
    n: int = 500
    K: int = 4
    p_in: float = 0.05
    p_out: float = 0.005
    d: int = 32
    signal: float = 1.0
    seed: int = 0
    train_frac: float = 0.1
    val_frac: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out <= p_in <= 1")
        if self.n < self.K or self.K < 1:
            raise ValueError("need at least one node per class")
        expected_deg = self.p_in * (self.n / self.K - 1) + self.p_out * self.n * (self.K - 1) / self.K
        if expected_deg <= 0:
            raise ValueError("parameters imply expected degree 0")

    @property
    def homophily(self):
        return self.p_in / (self.p_in + (self.K - 1) * self.p_out)

    def to_dict(self):
        return asdict(self)


def _block_pairs(rng, a, b, p, same):
    """Sample each unordered pair between node sets a and b with probability p."""
    na, nb = len(a), len(b)
    total = na * (na - 1) // 2 if same else na * nb
    if total == 0 or p == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    m = rng.binomial(total, p)
    lin = np.sort(rng.choice(total, size=m, replace=False))
    if same:
        r, c = np.triu_indices(na, 1)
        return a[r[lin]], a[c[lin]]
    return a[lin // nb], b[lin % nb]


def stratified_split(labels, rng, train_frac=0.1, val_frac=0.1):
    n = len(labels)
    train, val, test = [], [], []
    for k in np.unique(labels):
        ids = rng.permutation(np.flatnonzero(labels == k))
        n_tr = max(1, int(np.floor(train_frac * len(ids))))
        n_va = max(1, int(np.floor(val_frac * len(ids))))
        train.append(ids[:n_tr])
        val.append(ids[n_tr:n_tr + n_va])
        test.append(ids[n_tr + n_va:])
    return SplitMasks.from_indices(n, np.concatenate(train), np.concatenate(val), np.concatenate(test))


def generate_sbm(cfg):
    """Sample a graph; every random draw comes from ``cfg.seed``-derived streams."""
    rng = stream(cfg.seed, "sbm/labels")
    labels = rng.permutation(np.arange(cfg.n) % cfg.K)
    members = [np.flatnonzero(labels == k) for k in range(cfg.K)]
    erng = stream(cfg.seed, "sbm/edges")
    src, dst = [], []
    for a in range(cfg.K):
        for b in range(a, cfg.K):
            i, j = _block_pairs(erng, members[a], members[b], cfg.p_in if a == b else cfg.p_out, a == b)
            src.append(i)
            dst.append(j)
    adj = from_undirected(cfg.n, np.concatenate(src), np.concatenate(dst))
    frng = stream(cfg.seed, "sbm/features")
    protos = frng.standard_normal((cfg.K, cfg.d))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    X = cfg.signal * protos[labels] + frng.standard_normal((cfg.n, cfg.d))
    masks = stratified_split(labels, stream(cfg.seed, "sbm/split"), cfg.train_frac, cfg.val_frac)
    return Graph(adj, X, labels, masks, n_classes=cfg.K)


def edge_homophily(graph):
    adj = graph.adjacency
    off = adj.offdiag_mask()
    y = graph.labels
    if not np.any(off):
        return float("nan")
    return float(np.mean(y[adj.rows[off]] == y[adj.indices[off]]))
