"""Word-vector store for object categories.

Vectors load from word2vec-style text: one entry per line, a token
followed by D whitespace-separated reals. Multi-word category names
("traffic light") resolve to the mean of their token vectors. The pair
vector for (subject, object) is the 2D-long concatenation feeding the
language module.
"""

from __future__ import annotations

import numpy as np


class EmbeddingFormatError(ValueError):
    """Malformed embedding text; message names the offending line."""


class EmbeddingStore:
    """Immutable token -> vector map with a fixed dimension."""

    def __init__(self, dimension: int, vectors: dict[str, np.ndarray],
                 duplicate_count: int = 0):
        if dimension <= 0:
            raise ValueError(f"embedding dimension must be positive, got {dimension}")
        self.dimension = dimension
        self.duplicate_count = duplicate_count
        self._vectors = {}
        for token, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (dimension,):
                raise ValueError(
                    f"vector for {token!r} has shape {arr.shape}, "
                    f"expected ({dimension},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite vector for {token!r}")
            arr = arr.copy()
            arr.flags.writeable = False
            self._vectors[token] = arr

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def tokens(self) -> list[str]:
        return list(self._vectors)

    def lookup(self, category_name: str) -> np.ndarray:
        """Vector for a category name.

        Single tokens return the stored vector; multi-word names return
        the componentwise mean of their token vectors. Raises KeyError
        listing any token with no entry.
        """
        parts = category_name.split()
        if not parts:
            raise KeyError("empty category name")
        missing = [t for t in parts if t not in self._vectors]
        if missing:
            raise KeyError(
                f"no embedding for token(s) {', '.join(repr(t) for t in missing)} "
                f"in category {category_name!r}")
        if len(parts) == 1:
            return self._vectors[parts[0]]
        return np.mean([self._vectors[t] for t in parts], axis=0)

    def pair_vector(self, subject_name: str, object_name: str) -> np.ndarray:
        """Concatenation [subject vector, object vector], length 2D."""
        return np.concatenate([self.lookup(subject_name), self.lookup(object_name)])

    def nearest_neighbors(self, category_name: str, k: int) -> list[tuple[str, float]]:
        """Top-k stored tokens by cosine similarity to a category.

        The query token itself is excluded. Ties break by token name so
        the ranking is deterministic. k <= 0 returns an empty list.
        """
        if k <= 0:
            return []
        query = self.lookup(category_name)
        scored = [
            (token, cosine_similarity(query, vec))
            for token, vec in self._vectors.items()
            if token != category_name
        ]
        scored.sort(key=lambda item: (-item[1], item[0]))
        return scored[:k]


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two vectors; 0.0 if either is zero."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def load_embeddings(stream, dimension: int) -> EmbeddingStore:
    """Parse word2vec-style text into an EmbeddingStore.

    ``stream`` is an iterable of lines. A leading "count dimension"
    header line (as written by word2vec's text export) is skipped when
    its dimension matches. A duplicated token keeps the last entry and
    bumps ``duplicate_count``. Any line with the wrong number of values
    raises :class:`EmbeddingFormatError` naming the line.
    """
    vectors: dict[str, np.ndarray] = {}
    duplicates = 0
    for lineno, line in enumerate(stream, 1):
        parts = line.split()
        if not parts:
            continue
        if lineno == 1 and len(parts) == 2:
            try:
                count, dim = int(parts[0]), int(parts[1])
            except ValueError:
                pass
            else:
                if dim == dimension and count >= 0:
                    continue
        token = parts[0]
        if len(parts) - 1 != dimension:
            raise EmbeddingFormatError(
                f"line {lineno}: expected {dimension} values for {token!r}, "
                f"got {len(parts) - 1}")
        try:
            vec = np.array(parts[1:], dtype=np.float64)
        except ValueError:
            raise EmbeddingFormatError(
                f"line {lineno}: non-numeric value for {token!r}") from None
        if token in vectors:
            duplicates += 1
        vectors[token] = vec
    return EmbeddingStore(dimension, vectors, duplicate_count=duplicates)
