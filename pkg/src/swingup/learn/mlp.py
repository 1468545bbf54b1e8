"""Dense tanh networks with hand-written reverse mode."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MlpParams:
    """Weights are stored (in, out) so a batch forward is ``x @ W + b``."""

    weights: list
    biases: list

    def __post_init__(self):
        self.weights = [np.asarray(W, dtype=float) for W in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {i}: weight {W.shape} and bias {b.shape} do not match")
            if i and W.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i} input {W.shape[0]} != previous output {self.weights[i - 1].shape[1]}")

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def copy(self):
        return MlpParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def tensors(self, prefix):
        out = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.W{i}"] = W
            out[f"{prefix}.b{i}"] = b
        return out


def orthogonal(rng, n_in, n_out, gain):
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return np.ascontiguousarray(gain * q[:n_in, :n_out])


def init_mlp(rng, sizes, out_gain=1.0):
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        last = i == len(sizes) - 2
        weights.append(orthogonal(rng, sizes[i], sizes[i + 1], out_gain if last else np.sqrt(2.0)))
        biases.append(np.zeros(sizes[i + 1]))
    return MlpParams(weights, biases)


def mlp_forward(net, x):
    """Returns (output, cache). Hidden layers use tanh, the last layer is linear."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.weights[0].shape[0]:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {net.weights[0].shape[0]}")
    acts = [x]
    h = x
    n = len(net.weights)
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ W + b
        if i < n - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def mlp_backward(net, acts, dout):
    """Gradients of a scalar loss w.r.t. weights and biases given d(loss)/d(output)."""
    n = len(net.weights)
    dW = [None] * n
    db = [None] * n
    g = dout
    for i in reversed(range(n)):
        if i < n - 1:
            g = g * (1.0 - acts[i + 1] ** 2)
        dW[i] = acts[i].T @ g
        db[i] = g.sum(axis=0)
        if i:
            g = g @ net.weights[i].T
    return dW, db
