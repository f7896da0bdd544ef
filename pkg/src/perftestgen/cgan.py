"""Conditional GAN over encoded test vectors.

The generator maps a uniformly sampled encoded test plus a requirement
label to a candidate test; the discriminator scores (test, label) pairs
as executed-real versus synthetic.  The combined step trains the
generator through a frozen discriminator.
"""
from __future__ import annotations

import numpy as np

from .codec import InputSpace, encode_indices
from .nn import Adam, ConditionalMLP, ShapeError, bce_loss


class Generator(ConditionalMLP):
    def __init__(self, n_features: int, num_labels: int, rng: np.random.Generator,
                 hidden: int = 128, embed_dim: int = 10):
        super().__init__(n_features, num_labels, n_features, "tanh", rng, hidden, embed_dim)


class Discriminator(ConditionalMLP):
    def __init__(self, n_features: int, num_labels: int, rng: np.random.Generator,
                 hidden: int = 128, embed_dim: int = 10):
        super().__init__(n_features, num_labels, 1, "sigmoid", rng, hidden, embed_dim)


class CGANModel:
    """Generator, discriminator, their optimizers and the shared RNG stream.

    ``learning_rate`` drives both optimizers unless ``gen_learning_rate``
    gives the generator its own.
    """

    def __init__(self, space: InputSpace, num_labels: int = 2, seed: int = 0,
                 learning_rate: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                 hidden: int = 128, embed_dim: int = 10, gen_learning_rate: float | None = None):
        self.space = space
        self.num_labels = num_labels
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        n = space.n_features
        self.gen = Generator(n, num_labels, self.rng, hidden, embed_dim)
        self.disc = Discriminator(n, num_labels, self.rng, hidden, embed_dim)
        self.gen_optimizer = Adam(gen_learning_rate or learning_rate, beta1, beta2)
        self.disc_optimizer = Adam(learning_rate, beta1, beta2)
        self.steps = 0

    # -- generation ----------------------------------------------------------
    def synthesize(self, count: int, labels=None, rng: np.random.Generator | None = None):
        """Return ``(features, labels)`` for ``count`` generated candidates.

        Labels are drawn uniformly unless given (scalar or per-candidate).
        """
        rng = rng if rng is not None else self.rng
        n = self.space.n_features
        if count <= 0:
            return np.empty((0, n)), np.empty(0, dtype=np.int64)
        z = encode_indices(self.space, self.space.sample_indices(rng, count))
        if labels is None:
            labels = rng.integers(0, self.num_labels, size=count)
        labels = np.broadcast_to(np.asarray(labels, dtype=np.int64), (count,)).copy()
        return self.gen.forward(z, labels), labels

    def classify(self, features, labels) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        if features.shape[1] != self.space.n_features:
            raise ShapeError("features", ("batch", self.space.n_features), features.shape)
        return self.disc.forward(features, labels)[:, 0]

    # -- training ------------------------------------------------------------
    def train_disc_batch(self, real_x, real_y, fake_x=None, fake_y=None) -> float:
        """One discriminator step: real rows target 1, fake rows target 0.

        When no fakes are passed, as many as there are real rows are
        synthesized.
        """
        real_x = np.asarray(real_x, dtype=np.float64)
        real_y = np.asarray(real_y, dtype=np.int64)
        if fake_x is None:
            fake_x, fake_y = self.synthesize(len(real_x))
        if len(real_x) + len(fake_x) == 0:
            raise ValueError("empty discriminator batch")
        x = np.concatenate([real_x.reshape(-1, self.space.n_features), fake_x])
        y = np.concatenate([real_y, np.asarray(fake_y, dtype=np.int64)])
        target = np.concatenate([np.ones(len(real_x)), np.zeros(len(fake_x))])
        p = self.disc.forward(x, y)[:, 0]
        loss = float(np.mean(bce_loss(p, target)))
        # sigmoid + BCE: dL/dlogit = p - t
        self.disc.backward(((p - target) / len(target))[:, None], preactivation=True)
        self.disc_optimizer.step(self.disc.parameters(), self.disc.gradients())
        return loss

    def train_gen_batch(self, batch_size: int) -> float:
        """One generator step through the frozen discriminator (target 1)."""
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        x, y = self.synthesize(batch_size)
        p = self.disc.forward(x, y)[:, 0]
        loss = float(np.mean(bce_loss(p, np.ones(batch_size))))
        grad_x = self.disc.backward(((p - 1.0) / batch_size)[:, None], preactivation=True)
        self.gen.backward(grad_x)
        self.gen_optimizer.step(self.gen.parameters(), self.gen.gradients())
        return loss

    def train_step(self, real_x, real_y) -> tuple[float, float]:
        """Discriminator batch on ``real`` + equal fakes, then one generator batch."""
        d_loss = self.train_disc_batch(real_x, real_y)
        g_loss = self.train_gen_batch(2 * len(real_x))
        self.steps += 1
        return d_loss, g_loss

    # -- state ---------------------------------------------------------------
    def parameter_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, net in (("gen", self.gen), ("disc", self.disc)):
            for name, arr in net.parameters().items():
                out[f"{prefix}/{name}"] = arr
        return out
