"""Per-token input vectors for the tagger.

Three pieces: a trainable word-embedding table (optionally initialized from
GloVe-format text files), a character-level bidirectional language model
whose hidden states provide contextual string embeddings, and a stacker that
concatenates any number of embedders into one vector per token. Word-level
dropout zeroes whole token vectors during training.

The character LM is pre-trained on raw text with a next-character
cross-entropy objective and then frozen while the tagger trains, so the same
surface word can still embed differently in different contexts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Token, Vocabulary
from .encoder import (
    LSTMCellParams,
    init_lstm_cell,
    lstm_backward,
    lstm_run_cached,
)
from .errors import ConfigurationError, ShapeError

UNK_CHAR = "<unk>"


class GloveFormatError(ValueError):
    """A pretrained-vector file line cannot be parsed."""


@dataclass
class EmbeddingTable:
    """A |V| x d lookup table; row i is the vector for token id i."""

    matrix: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise ShapeError(f"embedding matrix must be 2-D, got {self.matrix.shape}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]


def init_embedding_table(vocab_size: int, dim: int, rng: np.random.Generator,
                         trainable: bool = True) -> EmbeddingTable:
    """Seeded uniform(-0.5/d, +0.5/d) rows, the same rule used for OOV words."""
    bound = 0.5 / dim
    return EmbeddingTable(rng.uniform(-bound, bound, (vocab_size, dim)),
                          trainable=trainable)


def _text_of(token) -> str:
    return token.text if isinstance(token, Token) else token


def lookup(table: EmbeddingTable, vocab: Vocabulary, token) -> np.ndarray:
    """Row for the token's id; unknown tokens fall back to the unk row."""
    if table.vocab_size != len(vocab):
        raise ShapeError(
            f"table has {table.vocab_size} rows, vocabulary has {len(vocab)}"
        )
    return table.matrix[vocab.id_of(_text_of(token))]


def load_pretrained(path, vocab: Vocabulary, dim: int,
                    rng: np.random.Generator
                    ) -> tuple[EmbeddingTable, float]:
    """Load GloVe-format text vectors for the vocabulary.

    Rows for words present in the file are copied verbatim (first occurrence
    wins); all other rows come from the seeded uniform(-0.5/d, +0.5/d)
    initializer. Returns the table and the fraction of non-unk vocabulary
    ids covered by the file.
    """
    table = init_embedding_table(len(vocab), dim, rng)
    file_dim = None
    covered: set[int] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            fields = raw.rstrip("\n").split(" ")
            word, values = fields[0], fields[1:]
            if file_dim is None:
                file_dim = len(values)
                if file_dim != dim:
                    raise ConfigurationError(
                        f"{path}: file has {file_dim} floats per line, "
                        f"configured dimension is {dim}"
                    )
            if not word or len(values) != file_dim:
                raise GloveFormatError(
                    f"{path}:{lineno}: expected 'word' plus {file_dim} floats"
                )
            token_id = _exact_id(vocab, word)
            if token_id is None or token_id in covered:
                continue
            try:
                table.matrix[token_id] = [float(v) for v in values]
            except ValueError:
                raise GloveFormatError(
                    f"{path}:{lineno}: non-numeric vector component"
                ) from None
            covered.add(token_id)
    in_vocab = len(vocab) - 1  # excluding unk
    coverage = len(covered) / in_vocab if in_vocab else 0.0
    return table, coverage


def _exact_id(vocab: Vocabulary, word: str):
    if vocab.case_folding:
        word = word.lower()
    token_id = vocab.token_to_id.get(word)
    return None if token_id in (None, vocab.unk_id) else token_id


@dataclass
class CharLM:
    """Character-level bidirectional LM used for contextual embeddings.

    Both direction cells share dimensions; the softmax head maps hidden
    states to character logits and is only exercised during pre-training.
    """

    id_to_char: tuple[str, ...]  # index 0 is the unknown character
    char_embeddings: np.ndarray  # (C, char_dim)
    forward_cell: LSTMCellParams
    backward_cell: LSTMCellParams
    softmax_W: np.ndarray  # (hidden, C)
    softmax_b: np.ndarray  # (C,)

    def __post_init__(self):
        self.char_to_id = {ch: i for i, ch in enumerate(self.id_to_char)}
        if self.forward_cell.hidden_dim != self.backward_cell.hidden_dim:
            raise ShapeError("LM direction cells disagree on hidden size")
        if self.softmax_W.shape != (self.hidden_dim, len(self.id_to_char)):
            raise ShapeError(
                f"softmax weights {self.softmax_W.shape} do not match "
                f"(hidden={self.hidden_dim}, chars={len(self.id_to_char)})"
            )

    @property
    def char_dim(self) -> int:
        return self.char_embeddings.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.forward_cell.hidden_dim

    @property
    def embedding_dim(self) -> int:
        return 2 * self.hidden_dim

    def char_ids(self, text: str) -> np.ndarray:
        return np.array([self.char_to_id.get(ch, 0) for ch in text], dtype=np.intp)

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"char_embeddings": self.char_embeddings}
        for prefix, cell in (("fwd", self.forward_cell),
                             ("bwd", self.backward_cell)):
            for name, arr in cell.tensors().items():
                out[f"{prefix}_{name}"] = arr
        out["softmax_W"] = self.softmax_W
        out["softmax_b"] = self.softmax_b
        return out


def build_char_lm(text: str, char_dim: int, hidden_dim: int,
                  rng: np.random.Generator) -> CharLM:
    """Character vocabulary from the text (plus the space separator), fresh params."""
    charset = sorted(set(text) | {" "})
    id_to_char = (UNK_CHAR, *charset)
    bound = np.sqrt(1.0 / hidden_dim)
    return CharLM(
        id_to_char=id_to_char,
        char_embeddings=rng.uniform(-np.sqrt(1.0 / char_dim),
                                    np.sqrt(1.0 / char_dim),
                                    (len(id_to_char), char_dim)),
        forward_cell=init_lstm_cell(char_dim, hidden_dim, rng),
        backward_cell=init_lstm_cell(char_dim, hidden_dim, rng),
        softmax_W=rng.uniform(-bound, bound, (hidden_dim, len(id_to_char))),
        softmax_b=np.zeros(len(id_to_char)),
    )


def char_lm_forward(lm: CharLM, text: str, direction: str) -> np.ndarray:
    """Hidden-state sequence of one directional LSTM over the characters.

    The backward direction processes the reversed text and re-aligns its
    states to the original positions. Shape (len(text), hidden).
    """
    if direction not in ("fwd", "bwd"):
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    if not text:
        raise ValueError("char_lm_forward needs a non-empty character sequence")
    ids = lm.char_ids(text)
    if direction == "fwd":
        h, _ = lstm_run_cached(lm.forward_cell, lm.char_embeddings[ids])
        return h
    h, _ = lstm_run_cached(lm.backward_cell, lm.char_embeddings[ids[::-1]])
    return h[::-1]


def contextual_embed(lm: CharLM, sentence: Sequence) -> np.ndarray:
    """Contextual string embedding for each token, shape (n, 2 * hidden).

    The sentence is rendered as one character stream with single spaces
    between tokens; each token embeds as the forward LM state at its last
    character concatenated with the backward LM state at its first.
    """
    texts = [_text_of(t) for t in sentence]
    if not texts:
        raise ValueError("contextual_embed needs a non-empty sentence")
    stream = " ".join(texts)
    h_fwd = char_lm_forward(lm, stream, "fwd")
    h_bwd = char_lm_forward(lm, stream, "bwd")
    out = np.empty((len(texts), lm.embedding_dim))
    pos = 0
    for k, text in enumerate(texts):
        first, last = pos, pos + len(text) - 1
        out[k] = np.concatenate([h_fwd[last], h_bwd[first]])
        pos += len(text) + 1
    return out


def char_lm_loss(lm: CharLM, text: str) -> float:
    """Average next-character log-loss over both reading directions."""
    total, count = 0.0, 0
    for sample in _lm_samples(text):
        for cell, ids in (
            (lm.forward_cell, lm.char_ids(sample)),
            (lm.backward_cell, lm.char_ids(sample)[::-1]),
        ):
            h, _ = lstm_run_cached(cell, lm.char_embeddings[ids[:-1]])
            logits = h @ lm.softmax_W + lm.softmax_b
            total += _cross_entropy_sum(logits, ids[1:])
            count += len(ids) - 1
    if count == 0:
        raise ValueError("LM corpus has no sample with at least two characters")
    return total / count


def pretrain_char_lm(lm: CharLM, text: str, epochs: int, lr: float,
                     rng: np.random.Generator) -> list[float]:
    """SGD pre-training on next-character prediction; returns per-epoch loss.

    Mutates the LM parameters in place. Samples (lines of the text) are
    shuffled each epoch with the supplied generator; each sample updates
    both direction cells, the shared character embeddings, and the shared
    softmax head.
    """
    samples = _lm_samples(text)
    if not samples:
        raise ValueError("LM corpus has no sample with at least two characters")
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(samples))
        total, count = 0.0, 0
        for idx in order:
            ids = lm.char_ids(samples[idx])
            for cell, seq in ((lm.forward_cell, ids),
                              (lm.backward_cell, ids[::-1])):
                total += _lm_sgd_step(lm, cell, seq, lr)
                count += len(seq) - 1
        history.append(total / count)
    return history


def _lm_samples(text: str) -> list[str]:
    return [line for line in text.splitlines() if len(line) >= 2]


def _cross_entropy_sum(logits: np.ndarray, targets: np.ndarray) -> float:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(targets)), targets].sum())


def _lm_sgd_step(lm: CharLM, cell: LSTMCellParams, ids: np.ndarray,
                 lr: float) -> float:
    inputs = lm.char_embeddings[ids[:-1]]
    targets = ids[1:]
    h, cache = lstm_run_cached(cell, inputs)
    logits = h @ lm.softmax_W + lm.softmax_b
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    loss = _cross_entropy_sum(logits, targets)

    n = len(targets)
    d_logits = probs
    d_logits[np.arange(n), targets] -= 1.0
    d_logits /= n
    d_softmax_W = h.T @ d_logits
    d_softmax_b = d_logits.sum(axis=0)
    d_h = d_logits @ lm.softmax_W.T
    cell_grads, d_inputs = lstm_backward(cell, cache, d_h)

    lm.softmax_W -= lr * d_softmax_W
    lm.softmax_b -= lr * d_softmax_b
    for name, grad in cell_grads.items():
        arr = getattr(cell, name)
        arr -= lr * grad
    np.add.at(lm.char_embeddings, ids[:-1], -lr * d_inputs)
    return loss


class WordEmbedder:
    """Embeds tokens through a vocabulary-indexed table."""

    def __init__(self, table: EmbeddingTable, vocab: Vocabulary):
        if table.vocab_size != len(vocab):
            raise ShapeError(
                f"table has {table.vocab_size} rows, vocabulary has {len(vocab)}"
            )
        self.table = table
        self.vocab = vocab

    @property
    def dim(self) -> int:
        return self.table.dim

    def embed(self, sentence: Sequence) -> np.ndarray:
        ids = [self.vocab.id_of(_text_of(t)) for t in sentence]
        return self.table.matrix[ids]

    def token_ids(self, sentence: Sequence) -> np.ndarray:
        return np.array([self.vocab.id_of(_text_of(t)) for t in sentence],
                        dtype=np.intp)


class CharLMEmbedder:
    """Embeds tokens with frozen contextual string embeddings."""

    def __init__(self, lm: CharLM):
        self.lm = lm

    @property
    def dim(self) -> int:
        return self.lm.embedding_dim

    def embed(self, sentence: Sequence) -> np.ndarray:
        return contextual_embed(self.lm, sentence)


@dataclass
class StackedEmbedder:
    """Concatenates the outputs of several embedders, in declared order."""

    parts: tuple

    def __post_init__(self):
        self.parts = tuple(self.parts)
        if not self.parts:
            raise ValueError("stacked embedder needs at least one part")

    @property
    def total_dim(self) -> int:
        return sum(part.dim for part in self.parts)

    def embed(self, sentence: Sequence) -> np.ndarray:
        outputs = []
        for part in self.parts:
            vecs = part.embed(sentence)
            if vecs.shape != (len(sentence), part.dim):
                raise ShapeError(
                    f"embedder {type(part).__name__} produced {vecs.shape}, "
                    f"declared ({len(sentence)}, {part.dim})"
                )
            outputs.append(vecs)
        return np.concatenate(outputs, axis=1)


def stack(embedder: StackedEmbedder, sentence: Sequence) -> np.ndarray:
    """Per-token concatenation of every part's output, shape (n, total_dim)."""
    return embedder.embed(sentence)


def dropout_mask(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean keep-mask: False marks a token whose whole vector is dropped."""
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"dropout probability must be in [0, 1], got {p}")
    return rng.random(n) >= p


def word_dropout(vectors: np.ndarray, p: float, rng: np.random.Generator,
                 training: bool = True, elementwise: bool = False) -> np.ndarray:
    """Replace each token's entire vector by zeros with probability p.

    Identity in inference mode. Deterministic for a fixed generator state.
    ``elementwise=True`` switches to dropping individual components instead
    of whole token vectors (off by default; the whole-vector form is what
    the training loop uses).
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"dropout probability must be in [0, 1], got {p}")
    if not training:
        return vectors.copy()
    if elementwise:
        return vectors * (rng.random(vectors.shape) >= p)
    keep = dropout_mask(len(vectors), p, rng)
    return vectors * keep[:, None]
