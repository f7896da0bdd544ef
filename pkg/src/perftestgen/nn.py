"""Small dense network engine: layers, activations, BCE loss, backprop and Adam.

Everything works on float64 numpy arrays with an explicit batch axis.
Single vectors are accepted by :func:`dense_forward` for convenience.
"""
from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np

BCE_EPS = 1e-7


class ShapeError(ValueError):
    """Raised when array shapes do not line up; never broadcast silently."""

    def __init__(self, what: str, expected, actual):
        super().__init__(f"{what}: expected shape {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class UsageError(RuntimeError):
    pass


def _sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# activation name -> (f(x), f'(x) expressed through y = f(x))
ACTIVATIONS = {
    "relu": (lambda x: np.maximum(x, 0.0), lambda y: (y > 0.0).astype(np.float64)),
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "sigmoid": (_sigmoid, lambda y: y * (1.0 - y)),
    "identity": (lambda x: x, lambda y: np.ones_like(y)),
}


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class Dense:
    """Fully connected layer ``y = act(x @ W.T + b)`` with ``W`` of shape (out, in)."""

    def __init__(self, n_in: int, n_out: int, activation: str = "identity",
                 rng: np.random.Generator | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = glorot_uniform(rng, n_out, n_in)
        self.bias = np.zeros(n_out)
        self.activation = activation
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)
        self._x = None
        self._y = None

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError("dense input", ("batch", self.n_in), x.shape)
        fn, _ = ACTIVATIONS[self.activation]
        y = fn(x @ self.weights.T + self.bias)
        self._x, self._y = x, y
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Backprop ``dL/dy``; stores parameter grads and returns ``dL/dx``."""
        if self._x is None:
            raise UsageError("backward called before forward")
        if grad_out.shape != self._y.shape:
            raise ShapeError("dense grad", self._y.shape, grad_out.shape)
        _, dfn = ACTIVATIONS[self.activation]
        grad_pre = grad_out * dfn(self._y)
        return self.backward_preactivation(grad_pre)

    def backward_preactivation(self, grad_pre: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise UsageError("backward called before forward")
        self.grad_weights = grad_pre.T @ self._x
        self.grad_bias = grad_pre.sum(axis=0)
        return grad_pre @ self.weights


class Embedding:
    """Lookup table mapping integer labels to dense vectors."""

    def __init__(self, num_labels: int, dim: int = 10, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.table = rng.standard_normal((num_labels, dim))
        self.grad_table = np.zeros_like(self.table)
        self._idx = None

    @property
    def num_labels(self) -> int:
        return self.table.shape[0]

    def forward(self, labels) -> np.ndarray:
        idx = np.asarray(labels)
        if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
            raise ShapeError("embedding index", ("batch",), idx.shape)
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_labels):
            raise IndexError(f"label out of range [0, {self.num_labels})")
        self._idx = idx
        return self.table[idx]

    def backward(self, grad_out: np.ndarray) -> None:
        if self._idx is None:
            raise UsageError("backward called before forward")
        g = np.zeros_like(self.table)
        np.add.at(g, self._idx, grad_out)
        self.grad_table = g


def dense_forward(layer: Dense, x) -> np.ndarray:
    """Forward one vector or a batch through ``layer``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != layer.n_in:
            raise ShapeError("dense input", (layer.n_in,), x.shape)
        return layer.forward(x[None, :])[0]
    return layer.forward(x)


def bce_loss(pred, target) -> np.ndarray | float:
    """Binary cross-entropy; predictions are clamped to [eps, 1 - eps]."""
    p = np.clip(np.asarray(pred, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    t = np.asarray(target, dtype=np.float64)
    loss = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    return float(loss) if loss.ndim == 0 else loss


class ConditionalMLP:
    """Label-conditioned MLP.

    The embedded label is concatenated to the feature vector, then fed
    through two ReLU hidden layers and an output layer.  Used for both the
    generator (tanh head) and the discriminator (sigmoid head).
    """

    def __init__(self, n_features: int, num_labels: int, n_out: int, out_activation: str,
                 rng: np.random.Generator, hidden: int = 128, embed_dim: int = 10):
        self.n_features = n_features
        self.embedding = Embedding(num_labels, embed_dim, rng)
        self.layers = [
            Dense(n_features + embed_dim, hidden, "relu", rng),
            Dense(hidden, hidden, "relu", rng),
            Dense(hidden, n_out, out_activation, rng),
        ]

    @property
    def num_labels(self) -> int:
        return self.embedding.num_labels

    def forward(self, features: np.ndarray, labels) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise ShapeError("features", ("batch", self.n_features), features.shape)
        emb = self.embedding.forward(labels)
        if emb.shape[0] != features.shape[0]:
            raise ShapeError("labels", (features.shape[0],), (emb.shape[0],))
        h = np.concatenate([features, emb], axis=1)
        for layer in self.layers:
            h = layer.forward(h)
        return h

    def backward(self, grad_out: np.ndarray, *, preactivation: bool = False) -> np.ndarray:
        """Backprop from the output (or the output pre-activation); returns dL/dfeatures."""
        last, *rest = self.layers[::-1]
        g = last.backward_preactivation(grad_out) if preactivation else last.backward(grad_out)
        for layer in rest:
            g = layer.backward(g)
        self.embedding.backward(g[:, self.n_features:])
        return g[:, :self.n_features]

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        params = OrderedDict(embedding=self.embedding.table)
        for i, layer in enumerate(self.layers):
            params[f"dense{i}/weights"] = layer.weights
            params[f"dense{i}/bias"] = layer.bias
        return params

    def gradients(self) -> "OrderedDict[str, np.ndarray]":
        grads = OrderedDict(embedding=self.embedding.grad_table)
        for i, layer in enumerate(self.layers):
            grads[f"dense{i}/weights"] = layer.grad_weights
            grads[f"dense{i}/bias"] = layer.grad_bias
        return grads


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, learning_rate: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.first_moment: dict[str, np.ndarray] = {}
        self.second_moment: dict[str, np.ndarray] = {}
        self.step_count = 0

    def step(self, params: dict, grads: dict) -> None:
        if params.keys() != grads.keys():
            raise ShapeError("adam parameter names", sorted(params), sorted(grads))
        for name, p in params.items():
            if grads[name].shape != p.shape:
                raise ShapeError(f"adam gradient {name!r}", p.shape, grads[name].shape)
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in params.items():
            g = grads[name]
            m = self.first_moment.get(name)
            if m is None:
                m = self.first_moment[name] = np.zeros_like(p)
                self.second_moment[name] = np.zeros_like(p)
            v = self.second_moment[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.epsilon)


def adam_step(state: Adam, params: dict, grads: dict) -> dict:
    state.step(params, grads)
    return params
