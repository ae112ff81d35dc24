"""Elementwise functions, trainable parameters, Adam and gradient checking."""
from __future__ import annotations

import numpy as np


def sigmoid(x):
    """Logistic function, stable for large ``|x|`` (scalar or array)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    z = np.exp(x[~pos])
    out[~pos] = z / (1.0 + z)
    return out if out.ndim else float(out)


def softmax_rows(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class ParamTensor:
    """A named array with a same-shaped gradient buffer."""

    __slots__ = ("name", "value", "grad", "lr", "weight_decay")

    def __init__(self, name, value, lr=None, weight_decay=0.0):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.lr = lr
        self.weight_decay = weight_decay

    def zero_grad(self):
        self.grad[...] = 0.0

    def copy(self):
        p = ParamTensor(self.name, self.value.copy(), self.lr, self.weight_decay)
        p.grad = self.grad.copy()
        return p

    def __repr__(self):
        return f"ParamTensor({self.name!r}, shape={self.value.shape})"


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.param_name = name


class AdamState:
    """Adam moments for a fixed list of parameters.

    Each parameter may carry its own ``lr`` (falls back to ``lr``) and an
    L2 ``weight_decay`` that is added to its gradient before the update.
    """

    def __init__(self, params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.value) for p in self.params}
        self.v = {p.name: np.zeros_like(p.value) for p in self.params}
        if len(self.m) != len(self.params):
            raise ValueError("parameter names must be unique")

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def adam_step(params, state):
    """One bias-corrected Adam update in place; returns ``params``.

    A non-finite gradient aborts the step before anything is modified.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradient(p.name)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p in params:
        g = p.grad + p.weight_decay * p.value if p.weight_decay else p.grad
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        lr = state.lr if p.lr is None else p.lr
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def finite_diff_check(loss_fn, params, h=1e-5, coords=None, floor=1e-7):
    """Max relative error between analytic and central-difference gradients.

    Parameters
    ----------
    loss_fn : callable
        ``loss_fn()`` evaluates the loss at the current parameter values
        and fills each ``param.grad`` with the analytic gradient.
    params : list of ParamTensor
    coords : int, optional
        Check at most this many coordinates per parameter (chosen evenly).
    floor : float
        Lower bound on the error denominator. Central differences of an
        O(1) loss at ``h = 1e-5`` carry roughly ``1e-11`` of rounding error,
        so smaller gradients cannot be resolved to a useful relative
        precision and are effectively compared in absolute terms.
    """
    base = loss_fn()
    if not np.isfinite(base):
        raise FloatingPointError("loss is not finite")
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.value.reshape(-1)
        idx = np.arange(flat.size)
        if coords is not None and flat.size > coords:
            idx = np.linspace(0, flat.size - 1, coords).astype(int)
        for k in idx:
            orig = flat[k]
            flat[k] = orig + h
            fp = loss_fn()
            flat[k] = orig - h
            fm = loss_fn()
            flat[k] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError("loss is not finite")
            numeric = (fp - fm) / (2 * h)
            a = g.reshape(-1)[k]
            err = abs(a - numeric) / max(floor, abs(a), abs(numeric))
            worst = max(worst, err)
    loss_fn()  # leave grads consistent with the restored values
    return worst
