"""Desk-scale feature provider: a softmax classifier on clustered data.

The trainer is a plain multinomial logistic model on synthetic Gaussian
clusters, optionally under a covariate-drift schedule. Its logit vectors
serve as the evolving sample embeddings and its prediction-error norms as the
raw importance scores, so the full selection/check/update loop runs against
genuine training dynamics rather than mocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .scoring import el2n_from_probs

MEAN_SEPARATION = 3.0


def make_dataset(n: int, d: int, c: int, cluster_spread: float, seed: int):
    """Gaussian clusters with seeded random class means; labels round-robin."""
    if c < 2:
        raise DomainError(f"need at least 2 classes, got {c}")
    if n < c:
        raise DomainError(f"need n >= c, got n={n}, c={c}")
    if d < 2:
        raise DomainError(f"need d >= 2, got {d}")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(c, d)) * MEAN_SEPARATION
    labels = np.arange(n, dtype=np.int64) % c
    data = means[labels] + cluster_spread * rng.normal(size=(n, d))
    return data, labels


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class SimState:
    """Trainer state; also the feature provider for selection and checking."""

    data: np.ndarray                 # (n, d) current inputs (drift mutates them)
    labels: np.ndarray               # (n,)
    weights: np.ndarray              # (c, d), zeros before any training
    learning_rate: float
    seed: int
    step: int = 0
    drift: float | np.ndarray | None = None   # per-step covariate shift magnitude
    freeze_at: int | None = None              # stop weight updates from this step on
    drift_dirs: np.ndarray = field(default=None, repr=False)

    @classmethod
    def create(cls, n: int, dim: int, classes: int, cluster_spread: float = 1.0,
               learning_rate: float = 0.1, seed: int = 0,
               drift: float | np.ndarray | None = None,
               freeze_at: int | None = None) -> "SimState":
        if learning_rate < 0.0:
            raise DomainError(f"learning_rate must be >= 0, got {learning_rate}")
        data, labels = make_dataset(n, dim, classes, cluster_spread, seed)
        dirs = np.random.default_rng(seed + 1).normal(size=(classes, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return cls(
            data=data,
            labels=labels,
            weights=np.zeros((classes, dim)),
            learning_rate=learning_rate,
            seed=seed,
            drift=drift,
            freeze_at=freeze_at,
            drift_dirs=dirs,
        )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def classes(self) -> int:
        return self.weights.shape[0]

    def _drift_magnitude(self) -> float:
        if self.drift is None:
            return 0.0
        if np.ndim(self.drift) == 0:
            return float(self.drift)
        sched = np.asarray(self.drift)
        return float(sched[self.step]) if self.step < sched.shape[0] else 0.0

    def train_step(self, batch) -> float:
        """One mini-batch cross-entropy gradient step; returns the batch loss.

        An active drift schedule shifts every sample along its class direction
        before the gradient is computed.
        """
        ids = np.asarray(sorted(set(int(b) for b in batch)), dtype=np.int64)
        if ids.size == 0:
            raise DomainError("batch must be nonempty")
        m = self._drift_magnitude()
        if m != 0.0:
            self.data += m * self.drift_dirs[self.labels]
        x = self.data[ids]
        y = self.labels[ids]
        probs = softmax(x @ self.weights.T)
        loss = float(-np.mean(np.log(np.maximum(probs[np.arange(ids.size), y], 1e-300))))
        if self.freeze_at is None or self.step < self.freeze_at:
            grad_logits = probs
            grad_logits[np.arange(ids.size), y] -= 1.0
            grad = grad_logits.T @ x / ids.size
            self.weights -= self.learning_rate * grad
        self.step += 1
        return loss

    def extract_features(self, ids) -> tuple[np.ndarray, np.ndarray]:
        """Logit-vector embeddings and EL2N scores for the given samples."""
        ids = np.asarray([int(i) for i in ids], dtype=np.int64)
        if np.any(ids < 0) or np.any(ids >= self.n):
            raise DomainError("sample id out of range")
        logits = self.data[ids] @ self.weights.T
        probs = softmax(logits)
        scores = el2n_from_probs(probs, self.labels[ids])
        return logits, scores

    def full_loss(self) -> float:
        probs = softmax(self.data @ self.weights.T)
        picked = probs[np.arange(self.n), self.labels]
        return float(-np.mean(np.log(np.maximum(picked, 1e-300))))

    def accuracy(self) -> float:
        pred = (self.data @ self.weights.T).argmax(axis=1)
        return float(np.mean(pred == self.labels))


def train_step(state: SimState, batch) -> float:
    return state.train_step(batch)


def extract_features(state: SimState, ids) -> tuple[np.ndarray, np.ndarray]:
    return state.extract_features(ids)
