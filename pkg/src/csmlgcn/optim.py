from __future__ import annotations

import numpy as np

TINY = 1e-250
FLUSH_EVERY = 100


class Adam:
    """Adam with bias correction, updating a dict of arrays in place.

    Both moments live in one flat buffer (``m`` and ``v`` expose per-key
    views), so a step costs a handful of vector ops instead of a dozen per
    parameter array.  The key set is fixed by the first step.
    """

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.t = 0
        self._slices = None

    def _init_state(self, params):
        self._slices, start = {}, 0
        for k, p in params.items():
            self._slices[k] = (start, start + p.size, p.shape)
            start += p.size
        self._m, self._v = np.zeros(start), np.zeros(start)
        for k, (a, b, shape) in self._slices.items():
            self.m[k] = self._m[a:b].reshape(shape)
            self.v[k] = self._v[a:b].reshape(shape)

    def _delta(self, g, m, v, step, eps):
        b1, b2 = self.beta1, self.beta2
        m *= b1
        m += (1.0 - b1) * g
        sq = g * g
        sq *= 1.0 - b2
        v *= b2
        v += sq
        if self.t % FLUSH_EVERY == 0:
            # a moment that only decays reaches the subnormal range after a few
            # thousand steps, where arithmetic is ~10x slower; its update is nil
            m[np.abs(m) < TINY] = 0.0
            v[v < TINY] = 0.0
        denom = np.sqrt(v)
        denom += eps
        np.divide(m, denom, out=denom)
        denom *= step
        return denom

    def step(self, params: dict, grads: dict) -> None:
        if self._slices is None:
            self._init_state({k: params[k] for k in grads})
        elif not set(grads) <= set(self._slices):
            raise ValueError("Adam: parameters cannot be added after the first step")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        root_c2 = np.sqrt(1.0 - self.beta2 ** self.t)
        # bias corrections folded into the step size and epsilon
        step, eps = self.lr * root_c2 / c1, self.eps * root_c2
        present = [k for k in self._slices if grads.get(k) is not None]
        if len(present) == len(self._slices):
            g = np.concatenate([np.ravel(grads[k]) for k in present])
            delta = self._delta(g, self._m, self._v, step, eps)
            for k, (a, b, shape) in self._slices.items():
                params[k] -= delta[a:b].reshape(shape)
        else:
            # parameters without a gradient keep their moments untouched
            for k in present:
                a, b, shape = self._slices[k]
                params[k] -= self._delta(np.ravel(grads[k]), self._m[a:b], self._v[a:b],
                                         step, eps).reshape(shape)


class SGD:
    def __init__(self, lr=0.01):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for k, g in grads.items():
            if g is not None:
                params[k] -= self.lr * g


def adam_step(params: dict, grads: dict, state: Adam) -> Adam:
    """Functional wrapper: apply one step of ``state`` and return it."""
    state.step(params, grads)
    return state
