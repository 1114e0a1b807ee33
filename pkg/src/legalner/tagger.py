"""The end-to-end tagging model.

Stacked token embeddings feed a Bi-LSTM whose projected outputs are the
emission scores of a linear-chain CRF. The word table, encoder, projection,
and transition matrix are trainable; a character LM, when attached, stays
frozen and only contributes (contextual) input features.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import EntitySpan, TagSet, Vocabulary, bio_to_spans
from .crf import (
    TransitionMatrix,
    constrain_transitions,
    nll_gradients,
    viterbi_decode,
)
from .embeddings import (
    CharLM,
    CharLMEmbedder,
    EmbeddingTable,
    StackedEmbedder,
    WordEmbedder,
    contextual_embed,
    dropout_mask,
    init_embedding_table,
)
from .encoder import (
    BiLSTMEncoder,
    EncoderCache,
    bilstm_backward,
    bilstm_run_cached,
    init_encoder,
    project_backward,
    project_emissions,
)
from .errors import ShapeError


@dataclass
class SentenceCache:
    token_ids: np.ndarray
    keep_mask: np.ndarray | None
    encoder_cache: EncoderCache
    emissions: np.ndarray


@dataclass
class SequenceTagger:
    tagset: TagSet
    vocab: Vocabulary
    word_table: EmbeddingTable
    encoder: BiLSTMEncoder
    transitions: TransitionMatrix
    char_lm: CharLM | None = None
    word_dropout: float = 0.0

    def __post_init__(self):
        expected = self.word_table.dim + (
            self.char_lm.embedding_dim if self.char_lm else 0
        )
        if self.encoder.input_dim != expected:
            raise ShapeError(
                f"encoder input width {self.encoder.input_dim} != stacked "
                f"embedding width {expected}"
            )
        if self.encoder.n_tags != self.tagset.n_tags:
            raise ShapeError(
                f"projection emits {self.encoder.n_tags} tags, tag set has "
                f"{self.tagset.n_tags}"
            )
        if self.transitions.n_tags != self.tagset.n_tags:
            raise ShapeError("transition matrix does not match the tag set")

    def embedder(self) -> StackedEmbedder:
        parts = [WordEmbedder(self.word_table, self.vocab)]
        if self.char_lm is not None:
            parts.append(CharLMEmbedder(self.char_lm))
        return StackedEmbedder(tuple(parts))

    def char_vectors(self, tokens: Sequence[str]) -> np.ndarray | None:
        """Frozen contextual embeddings for a sentence; cacheable across epochs."""
        if self.char_lm is None:
            return None
        return contextual_embed(self.char_lm, tokens)

    def _embed(self, tokens, char_vec):
        ids = np.array([self.vocab.id_of(t) for t in tokens], dtype=np.intp)
        vectors = self.word_table.matrix[ids]
        if self.char_lm is not None:
            if char_vec is None:
                char_vec = contextual_embed(self.char_lm, tokens)
            vectors = np.concatenate([vectors, char_vec], axis=1)
        return ids, vectors

    def forward_sentence(self, tokens: Sequence[str], training: bool = False,
                         rng: np.random.Generator | None = None,
                         char_vec: np.ndarray | None = None
                         ) -> tuple[np.ndarray, SentenceCache]:
        """Emission scores (T, n_tags) plus the cache the backward pass needs."""
        if not tokens:
            raise ShapeError("cannot encode an empty sentence")
        ids, vectors = self._embed(tokens, char_vec)
        keep = None
        if training and self.word_dropout > 0.0:
            if rng is None:
                raise ValueError("training-mode forward needs a random generator")
            keep = dropout_mask(len(tokens), self.word_dropout, rng)
            vectors = vectors * keep[:, None]
        hidden, enc_cache = bilstm_run_cached(self.encoder, list(vectors))
        emissions = project_emissions(self.encoder, hidden)
        return emissions, SentenceCache(ids, keep, enc_cache, emissions)

    def sentence_loss_and_grads(self, tokens: Sequence[str],
                                gold_ids: Sequence[int],
                                training: bool = False,
                                rng: np.random.Generator | None = None,
                                char_vec: np.ndarray | None = None
                                ) -> tuple[float, dict[str, np.ndarray]]:
        """Per-sentence NLL and gradients for every trainable tensor."""
        emissions, cache = self.forward_sentence(tokens, training, rng, char_vec)
        loss, d_emissions, d_trans = nll_gradients(
            emissions, self.transitions, gold_ids
        )
        proj_grads, d_hidden = project_backward(
            self.encoder, cache.encoder_cache.hidden, d_emissions
        )
        cell_grads, d_inputs = bilstm_backward(
            self.encoder, cache.encoder_cache, d_hidden
        )
        if cache.keep_mask is not None:
            d_inputs = d_inputs * cache.keep_mask[:, None]

        grads = {f"enc_{k}": v for k, v in cell_grads.items()}
        grads["enc_proj_W"] = proj_grads["proj_W"]
        grads["enc_proj_b"] = proj_grads["proj_b"]
        grads["transitions"] = d_trans
        if self.word_table.trainable:
            d_word = np.zeros_like(self.word_table.matrix)
            np.add.at(d_word, cache.token_ids,
                      d_inputs[:, :self.word_table.dim])
            grads["word_embeddings"] = d_word
        return loss, grads

    def decode(self, tokens: Sequence[str], constrained: bool = True,
               char_vec: np.ndarray | None = None) -> list[int]:
        """Viterbi tag ids for a sentence; BIO-constrained by default."""
        emissions, _ = self.forward_sentence(tokens, training=False,
                                             char_vec=char_vec)
        trans = (constrain_transitions(self.transitions, self.tagset)
                 if constrained else self.transitions)
        return viterbi_decode(emissions, trans).tags

    def predict_spans(self, tokens: Sequence[str], constrained: bool = True
                      ) -> list[EntitySpan]:
        if not tokens:
            return []
        tag_ids = self.decode(tokens, constrained=constrained)
        return bio_to_spans(tag_ids, self.tagset, strict=False)

    def named_parameters(self) -> dict[str, np.ndarray]:
        """Trainable tensors in a fixed order (gradient keys match)."""
        params: dict[str, np.ndarray] = {}
        if self.word_table.trainable:
            params["word_embeddings"] = self.word_table.matrix
        for name, arr in self.encoder.tensors().items():
            params[f"enc_{name}"] = arr
        params["transitions"] = self.transitions.scores
        return params

    def all_tensors(self) -> dict[str, np.ndarray]:
        """Every parameter tensor, trainable or frozen, for serialization."""
        tensors = {"word_embeddings": self.word_table.matrix}
        for name, arr in self.encoder.tensors().items():
            tensors[f"enc_{name}"] = arr
        tensors["transitions"] = self.transitions.scores
        if self.char_lm is not None:
            for name, arr in self.char_lm.tensors().items():
                tensors[f"charlm_{name}"] = arr
        return tensors


def build_tagger(tagset: TagSet, vocab: Vocabulary, word_dim: int,
                 hidden_dim: int, rng: np.random.Generator,
                 word_table: EmbeddingTable | None = None,
                 char_lm: CharLM | None = None,
                 word_dropout: float = 0.0,
                 forget_bias: float = 1.0) -> SequenceTagger:
    """Fresh tagger with seeded initialization.

    Pass ``word_table`` to reuse pretrained vectors; its width must match
    ``word_dim``. The transition matrix starts at zero (finite entries).
    """
    if word_table is None:
        word_table = init_embedding_table(len(vocab), word_dim, rng)
    elif word_table.dim != word_dim:
        raise ShapeError(
            f"supplied word table has dim {word_table.dim}, expected {word_dim}"
        )
    input_dim = word_dim + (char_lm.embedding_dim if char_lm else 0)
    encoder = init_encoder(input_dim, hidden_dim, tagset.n_tags, rng,
                           forget_bias=forget_bias)
    return SequenceTagger(
        tagset=tagset,
        vocab=vocab,
        word_table=word_table,
        encoder=encoder,
        transitions=TransitionMatrix.zeros(tagset.n_tags),
        char_lm=char_lm,
        word_dropout=word_dropout,
    )
