import numpy as np
import pytest

from ungsl import _backend
from ungsl.graph import Graph, SplitMasks, from_undirected

BACKENDS = ["python"]
try:
    from ungsl import _ckernels  # noqa: F401

    BACKENDS.insert(0, "cython")
except ImportError:
    pass


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the test once per available kernel backend."""
    previous = _backend.NAME
    _backend.use(request.param)
    yield request.param
    _backend.use(previous)


def path_graph(n):
    i = np.arange(n - 1)
    return from_undirected(n, i, i + 1)


def small_graph(n=12, K=3, d=5, p=0.35, seed=0):
    """Random connected-ish labelled graph with a 1/3 split per part."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    i = np.concatenate([iu[keep], np.arange(n - 1)])
    j = np.concatenate([ju[keep], np.arange(1, n)])
    pairs = np.unique(np.stack([i, j], 1), axis=0)
    adj = from_undirected(n, pairs[:, 0], pairs[:, 1])
    labels = np.arange(n) % K
    X = rng.standard_normal((n, d)) + np.eye(K, d)[labels]
    perm = rng.permutation(n)
    third = n // 3
    masks = SplitMasks.from_indices(n, perm[:third], perm[third:2 * third], perm[2 * third:])
    return Graph(adj, X, labels, masks, n_classes=K)


@pytest.fixture
def graph():
    return small_graph()
