"""
Adam with bias correction. Weight decay is the classic L2 term added to the gradient
before the moment updates; `decoupled=True` switches to the decoupled (AdamW) form.
"""
import copy

import numpy as np

from ..utils.exceptions import DimensionError


class AdamState:
    """First and second moment estimates of every parameter plus the step counter."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.step = 0
        self.m = {}
        self.v = {}
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def copy(self):
        return copy.deepcopy(self)


def adam_step(params, grads, state, lr, weight_decay=0.0, decoupled=False):
    """Performs one Adam update.

    :param params: Parameter arrays by name
    :type params: dict[str, numpy.ndarray]
    :param grads: Gradients by name, missing names count as zero gradients
    :type grads: dict[str, numpy.ndarray]
    :param state: Optimizer state, updated in place
    :type state: AdamState
    :param lr: Learning rate (>= 0)
    :type lr: float
    :param weight_decay: L2 coefficient, defaults to 0
    :type weight_decay: float, optional
    :param decoupled: Apply decay to the parameters directly instead of the gradient, defaults to False
    :type decoupled: bool, optional
    :return: New parameter arrays and the state
    :rtype: (dict[str, numpy.ndarray], AdamState)
    """
    assert lr >= 0, "Learning rate must be non-negative."
    for name, p in params.items():
        if name in grads and grads[name].shape != p.shape:
            raise DimensionError(f"Gradient of `{name}` has the wrong shape", grads[name].shape, p.shape)
        for moments in (state.m, state.v):
            if name in moments and moments[name].shape != p.shape:
                raise DimensionError(f"Adam moment of `{name}` has the wrong shape", moments[name].shape, p.shape)

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step

    updated = {}
    for name, p in params.items():
        g = grads.get(name)
        g = np.zeros_like(p) if g is None else g
        if weight_decay and not decoupled:
            g = g + weight_decay * p
        m = b1 * state.m.get(name, np.zeros_like(p)) + (1.0 - b1) * g
        v = b2 * state.v.get(name, np.zeros_like(p)) + (1.0 - b2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        step = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if weight_decay and decoupled:
            step = step + lr * weight_decay * p
        updated[name] = p - step
    return updated, state
