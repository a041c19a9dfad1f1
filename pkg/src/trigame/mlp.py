"""Small dense networks with hand-written backpropagation."""
from __future__ import annotations

import numpy as np

HIDDEN = ("tanh", "relu", "identity")
OUTPUT = ("identity", "sigmoid", "softmax")


def sigmoid(z):
    # split by sign so neither branch overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class Mlp:
    """Fully connected network ``sizes[0] -> ... -> sizes[-1]``.

    Parameters are kept as a list ``[W0, b0, W1, b1, ...]`` with ``W_i`` of
    shape (fan_in, fan_out). ``velocity`` holds the last parameter change and
    drives heavy-ball momentum in training; it starts at zero.
    """

    def __init__(self, sizes, hidden="tanh", output="identity", rng=None, params=None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"need at least two positive layer sizes, got {sizes}")
        if hidden not in HIDDEN or output not in OUTPUT:
            raise ValueError(f"unknown activation {hidden!r}/{output!r}")
        self.sizes, self.hidden, self.output = sizes, hidden, output
        if params is None:
            rng = np.random.default_rng() if rng is None else rng
            params = []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                params.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
                params.append(np.zeros(fan_out))
        self.params = [np.array(p, dtype=float) for p in params]
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if self.params[2 * i].shape != (fan_in, fan_out) or self.params[2 * i + 1].shape != (fan_out,):
                raise ValueError(f"layer {i} parameters do not match sizes {sizes}")
        if len(self.params) != 2 * (len(sizes) - 1):
            raise ValueError("wrong number of parameter arrays")
        if not all(np.all(np.isfinite(p)) for p in self.params):
            raise ValueError("parameters must be finite")
        self.velocity = [np.zeros_like(p) for p in self.params]

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def copy(self):
        net = Mlp(self.sizes, self.hidden, self.output, params=[p.copy() for p in self.params])
        net.velocity = [v.copy() for v in self.velocity]
        return net

    def _act(self, z):
        if self.hidden == "tanh":
            return np.tanh(z)
        if self.hidden == "relu":
            return np.maximum(z, 0.0)
        return z

    def _act_grad(self, z, a):
        if self.hidden == "tanh":
            return 1.0 - a * a
        if self.hidden == "relu":
            return (z > 0).astype(float)
        return np.ones_like(z)

    def forward(self, x):
        """Return ``(output, cache)``; ``cache`` feeds :meth:`backward`."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ValueError(f"input must have shape (n, {self.sizes[0]}), got {x.shape}")
        acts, pre = [x], []
        a = x
        for i in range(self.n_layers):
            z = a @ self.params[2 * i] + self.params[2 * i + 1]
            pre.append(z)
            a = self._act(z) if i < self.n_layers - 1 else z
            acts.append(a)
        z = pre[-1]
        if self.output == "sigmoid":
            out = sigmoid(z)
        elif self.output == "softmax":
            out = softmax(z)
        else:
            out = z
        return out, (acts, pre, out)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out):
        """Backpropagate ``dL/d(output)``.

        Returns ``(param_grads, grad_input)`` with ``param_grads`` aligned
        with ``self.params``.
        """
        acts, pre, out = cache
        g = np.asarray(grad_out, dtype=float)
        if self.output == "sigmoid":
            g = g * out * (1.0 - out)
        elif self.output == "softmax":
            g = out * (g - np.sum(g * out, axis=-1, keepdims=True))
        grads = [None] * len(self.params)
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                g = g * self._act_grad(pre[i], acts[i + 1])
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
        return grads, g

    def flat(self):
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, vec):
        vec = np.array(vec, dtype=float)
        out, k = [], 0
        for p in self.params:
            out.append(vec[k:k + p.size].reshape(p.shape))
            k += p.size
        if k != vec.size:
            raise ValueError(f"expected {k} values, got {vec.size}")
        self.params = out

    def to_dict(self):
        return {"sizes": list(self.sizes), "hidden": self.hidden, "output": self.output,
                "shapes": [list(p.shape) for p in self.params],
                "weights": [float(x) for x in self.flat()]}

    @classmethod
    def from_dict(cls, doc):
        net = cls(doc["sizes"], doc["hidden"], doc["output"], rng=np.random.default_rng(0))
        net.set_flat(doc["weights"])
        return net

    def __eq__(self, other):
        if not isinstance(other, Mlp):
            return NotImplemented
        return (self.sizes, self.hidden, self.output) == (other.sizes, other.hidden, other.output) \
            and all(np.array_equal(a, b) for a, b in zip(self.params, other.params))
