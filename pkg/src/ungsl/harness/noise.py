"""Structural, feature and label noise with floor-rounded counts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph import from_undirected, undirected_edges
from ..seeding import stream

KINDS = ("edge_add", "edge_delete", "feature_mask", "label_flip")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.level <= 1.0:
            raise ValueError("noise level must lie in [0, 1]")


def _count(level, total):
    return int(np.floor(level * total + 1e-9))


def inject_noise(graph, spec):
    """Return a perturbed copy of ``graph``; level 0 returns it unchanged."""
    if spec.level == 0:
        return graph
    rng = stream(spec.seed, f"noise/{spec.kind}")
    if spec.kind in ("edge_add", "edge_delete"):
        i, j = undirected_edges(graph.adjacency)
        m = len(i)
        count = _count(spec.level, m)
        if spec.kind == "edge_delete":
            keep = np.ones(m, dtype=bool)
            keep[rng.choice(m, size=count, replace=False)] = False
            return graph.replace(adjacency=from_undirected(graph.n, i[keep], j[keep]))
        n = graph.n
        free = n * (n - 1) // 2 - m
        if count > free:
            raise ValueError(f"cannot add {count} edges: only {free} non-edges exist")
        existing = set((i * n + j).tolist())
        new = set()
        while len(new) < count:
            need = count - len(new)
            a = rng.integers(0, n, size=2 * need + 16)
            b = rng.integers(0, n, size=2 * need + 16)
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            for key in (lo * n + hi)[lo != hi].tolist():
                if key not in existing and key not in new:
                    new.add(key)
                    if len(new) == count:
                        break
        keys = np.array(sorted(new), dtype=np.int64)
        ai, aj = np.divmod(keys, n)
        return graph.replace(adjacency=from_undirected(n, np.concatenate([i, ai]), np.concatenate([j, aj])))
    if spec.kind == "feature_mask":
        X = graph.features.copy()
        flat = X.reshape(-1)
        flat[rng.choice(flat.size, size=_count(spec.level, flat.size), replace=False)] = 0.0
        return graph.replace(features=X)
    # label_flip: training labels only, each moved to a different class
    y = graph.labels.copy()
    train = np.flatnonzero(graph.masks.train)
    pick = rng.choice(train, size=_count(spec.level, len(train)), replace=False)
    K = graph.n_classes
    shift = rng.integers(1, K, size=len(pick))
    y[pick] = (y[pick] + shift) % K
    return graph.replace(labels=y)
