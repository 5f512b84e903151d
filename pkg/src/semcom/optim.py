"""Adam optimizer over tape Parameters."""

from __future__ import annotations

import numpy as np

from .tape import Parameter


class Adam:
    """Adaptive-moment optimizer (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params: list[Parameter] = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {p: np.zeros_like(p.data) for p in self.params}
        self._v = {p: np.zeros_like(p.data) for p in self.params}
        self._buf = {p: np.empty_like(p.data) for p in self.params}

    def step(self, grads):
        """Apply one update using ``grads`` (a Var -> ndarray map)."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        # m_hat/(sqrt(v_hat)+eps) == alpha*m/(sqrt(v)+eps'), avoiding
        # the per-parameter bias-corrected temporaries
        alpha = self.lr * np.sqrt(bias2) / bias1
        eps_prime = self.eps * np.sqrt(bias2)
        for p in self.params:
            g = grads.get(p)
            if g is None:
                continue
            m = self._m[p]
            v = self._v[p]
            buf = self._buf[p]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            np.multiply(g, g, out=buf)
            buf *= (1.0 - b2)
            v += buf
            np.sqrt(v, out=buf)
            buf += eps_prime
            np.divide(m, buf, out=buf)
            buf *= alpha
            p.data -= buf
