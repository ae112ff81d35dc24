"""Confidence-thresholded asymmetric edge reweighting.

Each stored off-diagonal entry ``S[i, j]`` (edge from ``j`` into ``i``) is
multiplied by ``psi(c_j - eps_i)`` where ``c_j = exp(-u_j)`` is the frozen
confidence of the source and ``eps_i`` the learnable threshold of the
receiver::

    psi(x) = tau * sigmoid(x)   if x >= 0
             beta               otherwise

Self-loops are left unscaled. Only stored entries are touched, so the
refined matrix never gains edges and one call costs O(n + m).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .numerics import ParamTensor, sigmoid


@dataclass
class UnGslConfig:
    tau: float = 2.0
    beta: float = 0.5
    eps_lr: float = 0.01
    eps_init_low: float = 0.0
    eps_init_high: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


def psi(x, cfg):
    """Return ``(psi(x), dpsi/dx)``; the smooth branch owns ``x == 0``."""
    x = float(x)
    if x >= 0:
        s = float(sigmoid(x))
        return cfg.tau * s, cfg.tau * s * (1.0 - s)
    return cfg.beta, 0.0


class ThresholdVector:
    """Per-node learnable thresholds, initialized uniformly in ``[low, high]``."""

    def __init__(self, n, rng, cfg=None, values=None):
        cfg = UnGslConfig() if cfg is None else cfg
        if values is None:
            values = rng.uniform(cfg.eps_init_low, cfg.eps_init_high, size=n)
        self.param = ParamTensor("ungsl.eps", np.asarray(values, dtype=np.float64), lr=cfg.eps_lr)
        if self.param.value.shape != (n,):
            raise ValueError("threshold vector must have one entry per node")

    @property
    def values(self):
        return self.param.value

    @property
    def grad(self):
        return self.param.grad

    def __len__(self):
        return len(self.param.value)


@dataclass
class RefinedAdjacency:
    """Output of :func:`reweight` plus what its backward pass needs."""

    S_hat: object
    base: object
    confidence: np.ndarray
    eps: np.ndarray
    multiplier: np.ndarray
    slope: np.ndarray
    n_psi_evals: int
    cfg: UnGslConfig = field(repr=False, default=None)


def reweight(S, uncertainty, eps, cfg):
    """Scale every off-diagonal stored entry of ``S`` by ``psi(c_j - eps_i)``.

    Parameters
    ----------
    S : WeightedAdjacency
    uncertainty : UncertaintyVector
    eps : ThresholdVector or array_like
    cfg : UnGslConfig

    Returns
    -------
    RefinedAdjacency
    """
    n = S.shape[0]
    eps_arr = np.ascontiguousarray(eps.values if isinstance(eps, ThresholdVector) else eps,
                                   dtype=np.float64)
    conf = np.ascontiguousarray(uncertainty.c, dtype=np.float64)
    if S.shape[1] != n or len(conf) != n or len(eps_arr) != n:
        raise ValueError(f"size mismatch: S {S.shape}, confidence {len(conf)}, thresholds {len(eps_arr)}")
    data, mult, slope, count = _backend.kernels.reweight(
        S.indptr, S.indices, S.data, conf, eps_arr, float(cfg.tau), float(cfg.beta))
    S_hat = S.with_data(data)
    return RefinedAdjacency(S_hat, S, conf, eps_arr.copy(), mult, slope, int(count), cfg)


def reweight_backward(refined, grad_hat, S_hat=None):
    """Gradients of a loss with respect to the thresholds and the base weights.

    ``grad_hat`` is aligned with ``refined.S_hat.data``. Returns
    ``(d_eps, d_S)``; edges on the constant branch contribute nothing to
    ``d_eps``.
    """
    if S_hat is not None and S_hat is not refined.S_hat:
        raise ValueError("gradient provenance does not match this refinement")
    grad_hat = np.asarray(grad_hat, dtype=np.float64)
    if grad_hat.shape != refined.S_hat.data.shape:
        raise ValueError("gradient is not aligned with the refined adjacency")
    base = refined.base
    d_S = grad_hat * refined.multiplier
    # d psi(c_j - eps_i) / d eps_i = -psi'
    contrib = -grad_hat * base.data * refined.slope
    d_eps = np.bincount(base.rows, weights=contrib, minlength=base.shape[0])
    return d_eps, d_S


def fixed_thresholds(S, confidence, fraction):
    """Non-learnable thresholds putting ``floor(fraction * deg_i)`` least-confident
    in-neighbors of each node on the constant branch.

    Nodes with none selected get threshold 0 (every neighbor on the smooth
    branch); nodes with all selected get 2.0, above any confidence.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    n = S.shape[0]
    off = S.offdiag_mask()
    rows = S.rows[off]
    c = np.asarray(confidence)[S.indices[off]]
    deg = np.bincount(rows, minlength=n)
    q = np.floor(fraction * deg + 1e-12).astype(np.int64)
    eps = np.zeros(n)
    eps[(q == deg) & (deg > 0)] = 2.0
    mid = (q > 0) & (q < deg)
    if np.any(mid):
        order = np.lexsort((c, rows))
        sorted_c = c[order]
        start = np.concatenate([[0], np.cumsum(deg)[:-1]])
        idx = np.flatnonzero(mid)
        eps[idx] = sorted_c[start[idx] + q[idx]]
    return eps
