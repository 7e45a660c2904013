"""GloVe-format word vectors, vocabulary, and trainable embedding rows.

The table keeps one matrix tensor for all rows parsed from the vector
file, plus a lazily grown set of per-token rows for out-of-vocabulary
words.  OOV rows are drawn once from N(0, 0.02^2), seeded by
(oov_seed, token), so the same token always maps to the same row within
one table and across runs with the same seed.  All rows are trainable.
"""

from __future__ import annotations

import hashlib
import string

import numpy as np

from . import tensorcore as tc
from .errors import ContractError, ParseError

OOV_STD = 0.02

_PUNCT = set(string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase, split punctuation into standalone tokens, then whitespace-split."""
    out = []
    for ch in text.lower():
        if ch in _PUNCT:
            out.append(f" {ch} ")
        else:
            out.append(ch)
    return "".join(out).split()


class EmbeddingTable:
    """Word -> trainable vector of a fixed dimension."""

    def __init__(self, dim: int, oov_seed: int = 0):
        if dim < 1:
            raise ContractError(f"embedding dim must be positive, got {dim}")
        self.dim = dim
        self.oov_seed = oov_seed
        self.index: dict[str, int] = {}
        self.matrix = tc.Tensor(np.zeros((0, dim)), requires_grad=True,
                                name="embedding.matrix")
        self.oov_rows: dict[str, tc.Tensor] = {}

    @classmethod
    def from_rows(cls, rows: dict[str, np.ndarray], dim: int, oov_seed: int = 0):
        table = cls(dim, oov_seed)
        mat = np.zeros((len(rows), dim))
        for i, (token, vec) in enumerate(rows.items()):
            table.index[token] = i
            mat[i] = vec
        table.matrix = tc.Tensor(mat, requires_grad=True, name="embedding.matrix")
        return table

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __len__(self) -> int:
        return len(self.index) + len(self.oov_rows)

    def _oov_row(self, token: str) -> tc.Tensor:
        row = self.oov_rows.get(token)
        if row is None:
            digest = hashlib.sha256(
                f"{self.oov_seed}\x00{token}".encode("utf-8")
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            row = tc.Tensor(rng.normal(0.0, OOV_STD, size=(1, self.dim)),
                            requires_grad=True, name=f"embedding.oov.{token}")
            self.oov_rows[token] = row
        return row

    def restore_oov_row(self, token: str, values: np.ndarray):
        """Install an OOV row from a checkpoint, replacing the seeded draw."""
        self.oov_rows[token] = tc.Tensor(values.reshape(1, self.dim),
                                         requires_grad=True,
                                         name=f"embedding.oov.{token}")

    def trainable(self) -> dict[str, tc.Tensor]:
        named = {"embedding.matrix": self.matrix}
        for token in sorted(self.oov_rows):
            named[f"embedding.oov.{token}"] = self.oov_rows[token]
        return named


def load_glove(path, dim: int = 200, oov_seed: int = 0) -> EmbeddingTable:
    """Parse a whitespace-separated vector file: token then `dim` numbers per line."""
    rows: dict[str, np.ndarray] = {}
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read vector file {path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ParseError(
                    f"{path}:{lineno}: expected {dim} values after token, "
                    f"got {len(values)}"
                )
            try:
                rows[token] = np.array([float(v) for v in values])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from exc
    return EmbeddingTable.from_rows(rows, dim, oov_seed)


def embed_segment(tokens, table: EmbeddingTable) -> tc.Tensor:
    """Stack per-token rows into an (n, dim) tensor; OOV rows drawn on demand."""
    tokens = list(tokens)
    if not tokens:
        raise ContractError("a segment must contain at least one token")
    pieces = []
    for token in tokens:
        idx = table.index.get(token)
        if idx is not None:
            pieces.append(tc.lookup_rows(table.matrix, [idx]))
        else:
            pieces.append(tc.lookup_rows(table._oov_row(token), [0]))
    if len(pieces) == 1:
        return pieces[0]
    return tc.concat(pieces, axis=0)


class Vocab:
    """Token -> dense index plus corpus frequencies and pretrained coverage."""

    def __init__(self, index: dict[str, int], counts: dict[str, int],
                 coverage: float):
        self.index = index
        self.counts = counts
        self.coverage = coverage

    def __len__(self):
        return len(self.index)

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for token, idx in sorted(self.index.items(), key=lambda kv: kv[1]):
                fh.write(f"{token}\t{idx}\t{self.counts[token]}\n")


def build_vocab(segments, table: EmbeddingTable) -> Vocab:
    """Scan tokenized corpus segments; coverage is the fraction of token
    *types* present in the pretrained table."""
    counts: dict[str, int] = {}
    order: list[str] = []
    for seg in segments:
        for token in tokenize(seg):
            if token not in counts:
                counts[token] = 0
                order.append(token)
            counts[token] += 1
    index = {token: i for i, token in enumerate(order)}
    if order:
        known = sum(1 for token in order if token in table)
        coverage = known / len(order)
    else:
        coverage = 0.0
    return Vocab(index, counts, coverage)
