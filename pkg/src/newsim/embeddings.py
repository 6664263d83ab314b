"""Embedding tables: load token vectors, pool news vectors, explain vectors as nearest words."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DegenerateInputError, cosine_rows


class EmbeddingFormatError(ValueError):
    """Malformed embedding or wordbase file."""


@dataclass
class EmbeddingTable:
    """Immutable token -> vector table with a fixed dimension."""

    tokens: list
    vectors: np.ndarray  # (W, d)
    index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.index:
            self.index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def vector(self, token):
        return self.vectors[self.index[token]]


@dataclass
class Wordbase:
    """Subset of an embedding table flagged as usable for textual explanation."""

    tokens: list
    vectors: np.ndarray

    def __len__(self):
        return len(self.tokens)


def load_embedding_table(path):
    """Parse a whitespace-separated embedding file.

    Format: optional first line "<count> <dim>", then one "<token> <f1> ... <fd>"
    line per token. Rejects duplicate tokens and inconsistent dimensions.
    """
    tokens = []
    rows = []
    seen = set()
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # header line, ignored
                except ValueError:
                    pass
            token, values = parts[0], parts[1:]
            if not values:
                raise EmbeddingFormatError(f"{path}:{lineno}: no vector values")
            try:
                vec = [float(v) for v in values]
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: {exc}") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: dimension {len(vec)} != expected {dim}"
                )
            if token in seen:
                raise EmbeddingFormatError(f"{path}:{lineno}: duplicate token {token!r}")
            seen.add(token)
            tokens.append(token)
            rows.append(vec)
    if not tokens:
        raise EmbeddingFormatError(f"{path}: no embedding rows")
    return EmbeddingTable(tokens=tokens, vectors=np.asarray(rows, dtype=float))


def load_wordbase(path, table):
    """Load a one-token-per-line wordbase; every token must exist in `table`."""
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            token = line.strip()
            if not token:
                continue
            if token not in table:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: token {token!r} not in embedding table"
                )
            tokens.append(token)
    if not tokens:
        raise EmbeddingFormatError(f"{path}: empty wordbase")
    vectors = np.stack([table.vector(t) for t in tokens])
    return Wordbase(tokens=tokens, vectors=vectors)


def encode_news(tokens, table):
    """Mean of the in-vocabulary token vectors.

    Returns (vector, oov_count); raises if no token is in vocabulary.
    """
    hits = [table.vector(t) for t in tokens if t in table]
    oov = len(tokens) - len(hits)
    if not hits:
        raise DegenerateInputError("no in-vocabulary tokens to encode")
    return np.mean(hits, axis=0), oov


def nearest_words(v, k, wb):
    """The k wordbase tokens most cosine-similar to v, ties broken lexicographically."""
    if k > len(wb):
        raise ValueError(f"k={k} exceeds wordbase size {len(wb)}")
    sims = cosine_rows(wb.vectors, v)
    order = sorted(range(len(wb)), key=lambda i: (-sims[i], wb.tokens[i]))
    return [(wb.tokens[i], float(sims[i])) for i in order[:k]]
