"""Token vocabularies and embedding tables.

Word and code tokens live in disjoint vocabularies with separate embedding
matrices. Three specials occupy fixed ids: PAD (0, zero row, never updated),
UNK (1, catches every out-of-vocabulary token), CODEBLOCK (2, the mask token
for code blocks in text-only models). Embeddings load from a plain-text
vector file when available and are randomly initialized otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tokenize import TokenStream

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
CODEBLOCK_TOKEN = "<codeblock>"

PAD_ID = 0
UNK_ID = 1
CODEBLOCK_ID = 2

_SPECIALS = (PAD_TOKEN, UNK_TOKEN, CODEBLOCK_TOKEN)


class EmptyCorpus(ValueError):
    """No tokens were observed when building a vocabulary."""


class DimensionMismatch(ValueError):
    """An embedding-file row does not have the declared dimension."""


@dataclass
class Vocabulary:
    token_to_id: dict[str, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def lookup_all(self, tokens) -> list[int]:
        get = self.token_to_id.get
        return [get(t, UNK_ID) for t in tokens]

    def to_json(self) -> str:
        return json.dumps(self.token_to_id, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        return cls(dict(json.loads(text)))


def build_vocab(streams, min_count: int = 1) -> Vocabulary:
    """Build a vocabulary over token streams.

    Tokens with corpus frequency >= min_count are kept, ordered by
    (-frequency, token) so identical corpora always produce identical id
    assignments. Specials occupy ids 0..2.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    seen_any = False
    for stream in streams:
        tokens = stream.tokens if isinstance(stream, TokenStream) else stream
        for tok in tokens:
            seen_any = True
            counts[tok] = counts.get(tok, 0) + 1
    if not seen_any:
        raise EmptyCorpus("no tokens in corpus")
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count and tok not in _SPECIALS),
        key=lambda tok: (-counts[tok], tok),
    )
    token_to_id = {tok: i for i, tok in enumerate(_SPECIALS)}
    for tok in kept:
        token_to_id[tok] = len(token_to_id)
    return Vocabulary(token_to_id)


@dataclass
class EmbeddingMatrix:
    table: np.ndarray  # size x d, float64
    d: int


def load_embeddings(
    path, vocab: Vocabulary, d: int, seed: int, scale: float = 0.05
) -> EmbeddingMatrix:
    """Build the embedding table for a vocabulary.

    Rows found in the vector file (whitespace-separated "token v1 .. vd")
    are used as-is; missing tokens draw uniform(-scale, scale) from the
    seed. ``path=None`` random-initializes everything. The PAD row is
    always zero.
    """
    vectors: dict[str, np.ndarray] = {}
    if path is not None:
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                parts = line.rstrip("\n").split()
                if not parts:
                    continue
                token, values = parts[0], parts[1:]
                if len(values) != d:
                    raise DimensionMismatch(
                        f"{path}:{line_no}: expected {d} values, got {len(values)}"
                    )
                vectors[token] = np.array(values, dtype=np.float64)

    rng = np.random.default_rng(seed)
    table = np.zeros((vocab.size, d), dtype=np.float64)
    for token, idx in vocab.token_to_id.items():
        if idx == PAD_ID:
            continue
        row = vectors.get(token)
        table[idx] = row if row is not None else rng.uniform(-scale, scale, d)
    return EmbeddingMatrix(table, d)
