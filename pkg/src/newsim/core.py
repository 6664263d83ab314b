"""Deterministic numeric substrate: vector math, seeded RNG streams, sampling, PCA."""

from __future__ import annotations

import hashlib

import numpy as np


class DegenerateInputError(ValueError):
    """Raised when an operation receives an input it is undefined for (e.g. a zero vector)."""


class RngStream:
    """A named, reproducible random substream derived from one master seed.

    Identical (seed, stream_id, call sequence) yields identical outputs.
    Distinct stream ids map to statistically independent substreams, so any
    single subsystem of the simulation can be replayed in isolation.
    """

    def __init__(self, seed, stream_id):
        seed = int(seed)
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        if not stream_id:
            raise ValueError("stream_id must be a non-empty string")
        self.seed = seed
        self.stream_id = str(stream_id)
        key = int.from_bytes(
            hashlib.sha256(self.stream_id.encode("utf-8")).digest()[:8], "big"
        )
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(key,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"

    @property
    def generator(self):
        return self._gen

    # thin delegates so callers never touch numpy's global state
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def binomial(self, n, p, size=None):
        return self._gen.binomial(n, p, size)

    def choice(self, a, size=None, replace=True, p=None):
        return self._gen.choice(a, size=size, replace=replace, p=p)

    def permutation(self, x):
        return self._gen.permutation(x)

    def shuffle(self, x):
        self._gen.shuffle(x)

    def get_state(self):
        """Serializable bit-generator state (plain dict of ints/strings)."""
        return self._gen.bit_generator.state

    def set_state(self, state):
        self._gen.bit_generator.state = state


def cosine(a, b):
    """Cosine similarity dot(a,b) / (|a| * |b|), clipped into [-1, 1].

    Raises DegenerateInputError on a zero-norm input.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine undefined for zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def cosine_rows(matrix, v):
    """Cosine of every row of `matrix` against vector `v` (vectorized helper).

    Zero-norm rows get similarity 0 instead of raising; callers that must
    reject them should check beforehand.
    """
    matrix = np.asarray(matrix, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise DegenerateInputError("cosine undefined for zero-norm vector")
    norms = np.linalg.norm(matrix, axis=1)
    out = np.zeros(len(matrix))
    ok = norms > 0
    out[ok] = matrix[ok] @ v / (norms[ok] * nv)
    return np.clip(out, -1.0, 1.0)


def softmax(values):
    """Numerically stabilized softmax; output is nonnegative and sums to 1."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("softmax of empty input")
    if not np.all(np.isfinite(values)):
        raise ValueError("softmax requires finite inputs")
    shifted = values - values.max()
    e = np.exp(shifted)
    return e / e.sum()


def sample_clipped_gaussian(mean, std, lo, hi, rng):
    """Draw Normal(mean, std^2) and clamp into [lo, hi]."""
    if std < 0:
        raise ValueError("std must be non-negative")
    if lo > hi:
        raise ValueError("lo must not exceed hi")
    x = mean if std == 0 else rng.normal(mean, std)
    return float(min(max(x, lo), hi))


def sample_gaussian_vector(mean, scale, rng):
    """Isotropic Gaussian draw around `mean`; `scale` is the per-coordinate std."""
    mean = np.asarray(mean, dtype=float)
    if scale < 0:
        raise ValueError("scale must be non-negative")
    if scale == 0:
        return mean.copy()
    return mean + rng.normal(0.0, scale, size=mean.shape)


def pca_project(points, k):
    """Project mean-centered points onto the top-k principal components.

    Returns (coords, explained) where coords is (n, k) and explained is the
    fraction of total variance captured by each component. The sign of each
    component is fixed so its largest-magnitude loading is positive, which
    makes the projection deterministic.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ValueError("points must be a 2-d array")
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 points")
    if not 1 <= k <= min(n, d):
        raise ValueError(f"k must be in [1, {min(n, d)}], got {k}")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    comps = eigvecs[:, order]
    for c in range(k):
        lead = np.argmax(np.abs(comps[:, c]))
        if comps[lead, c] < 0:
            comps[:, c] = -comps[:, c]
    total = eigvals.sum()
    explained = eigvals[order] / total if total > 0 else np.zeros(k)
    return centered @ comps, explained
