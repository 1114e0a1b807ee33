"""Training orchestration: batching, SGD, annealed early stopping, checkpoints.

One run is deterministic end to end: a single seeded generator drives
initialization, epoch shuffling, and word dropout, and the checkpoint
format (JSON metadata plus a flat little-endian float64 blob) round-trips
every parameter bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import LabeledSentence, TagSet, Vocabulary, bio_to_spans, spans_to_bio
from .crf import TransitionMatrix
from .embeddings import CharLM, EmbeddingTable
from .encoder import BiLSTMEncoder, LSTMCellParams
from .errors import ConfigurationError, TrainingDiverged
from .evaluation import classification_report, token_accuracy
from .tagger import SequenceTagger

FORMAT_VERSION = 1
MIN_LEARNING_RATE = 1e-4

META_FILE = "meta.json"
TENSORS_FILE = "tensors.bin"


@dataclass
class Hyperparameters:
    """Training knobs; the config-file schema is exactly these field names."""

    epochs: int = 50
    learning_rate: float = 0.1
    batch_size: int = 32
    optimizer: str = "sgd"
    glove_dim: int = 100
    word_dropout: float = 0.5
    lstm_hidden: int = 256
    patience: int = 3
    anneal_factor: float = 0.5
    seed: int = 1
    gradient_clip: float = 5.0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigurationError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer != "sgd":
            raise ConfigurationError(f"unsupported optimizer {self.optimizer!r}")
        if not 0.0 <= self.word_dropout <= 1.0:
            raise ConfigurationError(
                f"word_dropout must be in [0, 1], got {self.word_dropout}"
            )
        if self.lstm_hidden < 1 or self.glove_dim < 1:
            raise ConfigurationError("lstm_hidden and glove_dim must be >= 1")
        if self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 < self.anneal_factor <= 1.0:
            raise ConfigurationError(
                f"anneal_factor must be in (0, 1], got {self.anneal_factor}"
            )
        if self.gradient_clip <= 0:
            raise ConfigurationError(
                f"gradient_clip must be positive, got {self.gradient_clip}"
            )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparameters":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"unknown config key {unknown[0]!r}")
        missing = sorted(names - set(data))
        if missing:
            raise ConfigurationError(f"missing config field {missing[0]!r}")
        hp = cls(**data)
        hp.validate()
        return hp

    @classmethod
    def from_json_file(cls, path) -> "Hyperparameters":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: malformed JSON: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)


@dataclass
class TrainState:
    """Mutable per-run bookkeeping for early stopping and annealing."""

    lr: float
    epoch: int = 0
    best_score: float = -math.inf
    epochs_since_improvement: int = 0
    anneal_reset_available: bool = True
    stop: bool = False


@dataclass
class Example:
    """One training sentence: token strings plus gold tag ids.

    ``char_vec`` caches the frozen contextual embeddings so they are
    computed once per corpus rather than once per epoch.
    """

    tokens: tuple[str, ...]
    tag_ids: tuple[int, ...]
    char_vec: np.ndarray | None = None

    def __post_init__(self):
        if len(self.tokens) != len(self.tag_ids):
            raise ValueError(
                f"{len(self.tokens)} tokens vs {len(self.tag_ids)} tags"
            )
        if not self.tokens:
            raise ValueError("examples must be non-empty sentences")


def example_from_sentence(sentence: LabeledSentence, tagset: TagSet) -> Example:
    return Example(tuple(sentence.token_texts),
                   tuple(spans_to_bio(sentence, tagset)))


def examples_from_conll(rows: Sequence[tuple[Sequence[str], Sequence[str]]],
                        tagset: TagSet) -> list[Example]:
    return [
        Example(tuple(tokens), tuple(tagset.tag_id(t) for t in tags))
        for tokens, tags in rows
    ]


def compute_gradients(model: SequenceTagger, batch: Sequence[Example],
                      training: bool = False,
                      rng: np.random.Generator | None = None
                      ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean per-sentence loss and gradients over a batch, fixed accumulation order."""
    if not batch:
        raise ValueError("batch must be non-empty")
    total_loss = 0.0
    acc: dict[str, np.ndarray] | None = None
    for ex in batch:
        loss, grads = model.sentence_loss_and_grads(
            ex.tokens, ex.tag_ids, training=training, rng=rng,
            char_vec=ex.char_vec,
        )
        total_loss += loss
        if acc is None:
            acc = grads
        else:
            for name, g in grads.items():
                acc[name] += g
    scale = 1.0 / len(batch)
    return total_loss * scale, {name: g * scale for name, g in acc.items()}


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float, clip: float | None = None) -> dict[str, np.ndarray]:
    """In-place SGD update with global gradient-norm clipping, no momentum."""
    if lr <= 0:
        raise ConfigurationError(f"learning rate must be positive, got {lr}")
    total_sq = 0.0
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for {name!r}")
        total_sq += float(np.sum(g * g))
    norm = math.sqrt(total_sq)
    scale = clip / norm if clip is not None and norm > clip else 1.0
    for name, g in grads.items():
        params[name] -= lr * scale * g
    return params


def anneal_check(state: TrainState, config: Hyperparameters) -> float:
    """Anneal the learning rate once patience is exhausted.

    The first patience-hit in a non-improvement streak also resets the
    counter (one second chance at the lower rate); later hits in the same
    streak do not, so the run can still stop on the counter. Annealing below
    the floor requests a stop.
    """
    if state.epochs_since_improvement >= config.patience:
        state.lr *= config.anneal_factor
        if state.anneal_reset_available:
            state.epochs_since_improvement = 0
            state.anneal_reset_available = False
        if state.lr < MIN_LEARNING_RATE:
            state.stop = True
    return state.lr


def evaluate_tagger(model: SequenceTagger, examples: Sequence[Example]
                    ) -> tuple[float, float]:
    """(span micro-F1, token accuracy) of constrained decoding over examples."""
    pairs = []
    gold_seqs, pred_seqs = [], []
    for ex in examples:
        pred_ids = model.decode(list(ex.tokens), constrained=True,
                                char_vec=ex.char_vec)
        gold = bio_to_spans(ex.tag_ids, model.tagset, strict=False)
        pred = bio_to_spans(pred_ids, model.tagset, strict=False)
        pairs.append((gold, pred))
        gold_seqs.append(list(ex.tag_ids))
        pred_seqs.append(pred_ids)
    report = classification_report(pairs, model.tagset)
    return report.micro_f1, token_accuracy(gold_seqs, pred_seqs)


@dataclass
class Checkpoint:
    """Everything needed to restore a model and resume or audit a run."""

    model: SequenceTagger
    hyperparameters: Hyperparameters
    history: list[dict] = field(default_factory=list)
    seed: int = 0
    rng_state: dict | None = None
    format_version: int = FORMAT_VERSION

    def save(self, directory) -> None:
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        tensors = self.model.all_tensors()
        index = []
        offset = 0
        with open(path / TENSORS_FILE, "wb") as f:
            for name, arr in tensors.items():
                data = np.ascontiguousarray(arr, dtype="<f8")
                f.write(data.tobytes())
                index.append({"name": name, "shape": list(arr.shape),
                              "offset": offset})
                offset += int(data.size)
        model = self.model
        meta = {
            "format_version": self.format_version,
            "classes": list(model.tagset.classes),
            "vocab": {
                "tokens": list(model.vocab.id_to_token),
                "min_freq": model.vocab.min_freq,
                "case_folding": model.vocab.case_folding,
            },
            "char_lm": (
                {"chars": list(model.char_lm.id_to_char)}
                if model.char_lm is not None else None
            ),
            "word_trainable": model.word_table.trainable,
            "word_dropout": model.word_dropout,
            "hyperparameters": self.hyperparameters.to_dict(),
            "history": self.history,
            "seed": self.seed,
            "rng_state": self.rng_state,
            "tensors": index,
        }
        (path / META_FILE).write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, directory) -> "Checkpoint":
        path = Path(directory)
        meta = json.loads((path / META_FILE).read_text(encoding="utf-8"))
        if meta["format_version"] != FORMAT_VERSION:
            raise ConfigurationError(
                f"checkpoint format {meta['format_version']} not supported"
            )
        blob = np.fromfile(path / TENSORS_FILE, dtype="<f8")
        tensors = {}
        for entry in meta["tensors"]:
            size = int(np.prod(entry["shape"])) if entry["shape"] else 1
            chunk = blob[entry["offset"]:entry["offset"] + size]
            tensors[entry["name"]] = chunk.reshape(entry["shape"]).copy()

        tagset = TagSet(meta["classes"])
        vocab = Vocabulary(meta["vocab"]["tokens"],
                           min_freq=meta["vocab"]["min_freq"],
                           case_folding=meta["vocab"]["case_folding"])
        char_lm = None
        if meta["char_lm"] is not None:
            char_lm = CharLM(
                id_to_char=tuple(meta["char_lm"]["chars"]),
                char_embeddings=tensors["charlm_char_embeddings"],
                forward_cell=_cell_from(tensors, "charlm_fwd"),
                backward_cell=_cell_from(tensors, "charlm_bwd"),
                softmax_W=tensors["charlm_softmax_W"],
                softmax_b=tensors["charlm_softmax_b"],
            )
        encoder = BiLSTMEncoder(
            forward_cell=_cell_from(tensors, "enc_fwd"),
            backward_cell=_cell_from(tensors, "enc_bwd"),
            proj_W=tensors["enc_proj_W"],
            proj_b=tensors["enc_proj_b"],
        )
        model = SequenceTagger(
            tagset=tagset,
            vocab=vocab,
            word_table=EmbeddingTable(tensors["word_embeddings"],
                                      trainable=meta["word_trainable"]),
            encoder=encoder,
            transitions=TransitionMatrix(tensors["transitions"], tagset.n_tags),
            char_lm=char_lm,
            word_dropout=meta["word_dropout"],
        )
        return cls(
            model=model,
            hyperparameters=Hyperparameters.from_dict(meta["hyperparameters"]),
            history=meta["history"],
            seed=meta["seed"],
            rng_state=meta["rng_state"],
            format_version=meta["format_version"],
        )


def _cell_from(tensors: dict[str, np.ndarray], prefix: str) -> LSTMCellParams:
    return LSTMCellParams(**{
        name: tensors[f"{prefix}_{name}"]
        for name in ("W_i", "W_f", "W_o", "W_c", "b_i", "b_f", "b_o", "b_c")
    })


def train(config: Hyperparameters, train_set: Sequence[Example],
          dev_set: Sequence[Example], model: SequenceTagger,
          rng: np.random.Generator | None = None,
          log_fn: Callable[[dict], None] | None = None) -> Checkpoint:
    """Run the full training loop and return the best-dev-score checkpoint.

    Each epoch shuffles the training set, takes one SGD step per batch of
    mean sentence NLL, then scores dev micro-F1. Improvement snapshots the
    parameters; a patience of non-improving epochs anneals the learning
    rate (see :func:`anneal_check`) until the run stops. Without a dev set
    all ``config.epochs`` epochs run and the final parameters win.
    """
    config.validate()
    if not train_set:
        raise ValueError("training set must be non-empty")
    if rng is None:
        rng = np.random.default_rng(config.seed)

    _fill_char_vectors(model, train_set)
    _fill_char_vectors(model, dev_set)

    params = model.named_parameters()
    state = TrainState(lr=config.learning_rate)
    history: list[dict] = []
    best_tensors = {name: arr.copy() for name, arr in model.all_tensors().items()}
    best_rng_state = rng.bit_generator.state

    n = len(train_set)
    for epoch in range(1, config.epochs + 1):
        state.epoch = epoch
        perm = rng.permutation(n)
        loss_sum = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            batch = [train_set[i] for i in perm[start:start + config.batch_size]]
            try:
                loss, grads = compute_gradients(model, batch, training=True,
                                                rng=rng)
                if not math.isfinite(loss):
                    raise TrainingDiverged("non-finite loss")
                sgd_step(params, grads, state.lr, config.gradient_clip)
            except TrainingDiverged as exc:
                raise TrainingDiverged(
                    f"{exc} at epoch {epoch}, batch {b}",
                    epoch=epoch, batch=b, param_norms=_param_norms(params),
                ) from None
            loss_sum += loss * len(batch)
        train_loss = loss_sum / n

        dev_f1 = dev_acc = None
        if dev_set:
            dev_f1, dev_acc = evaluate_tagger(model, dev_set)
            if dev_f1 > state.best_score:
                state.best_score = dev_f1
                state.epochs_since_improvement = 0
                state.anneal_reset_available = True
                best_tensors = {name: arr.copy()
                                for name, arr in model.all_tensors().items()}
                best_rng_state = rng.bit_generator.state
            else:
                state.epochs_since_improvement += 1

        entry = {"epoch": epoch, "train_loss": train_loss,
                 "dev_micro_f1": dev_f1, "dev_accuracy": dev_acc,
                 "lr": state.lr}
        history.append(entry)
        if log_fn is not None:
            log_fn(dict(entry))

        if dev_set:
            anneal_check(state, config)
            if state.stop or state.epochs_since_improvement > config.patience:
                break

    if dev_set:
        _restore_tensors(model, best_tensors)
        rng_state = best_rng_state
    else:
        rng_state = rng.bit_generator.state
    return Checkpoint(model=model, hyperparameters=config, history=history,
                      seed=config.seed, rng_state=rng_state)


def _fill_char_vectors(model: SequenceTagger, examples: Sequence[Example]) -> None:
    if model.char_lm is None:
        return
    for ex in examples:
        if ex.char_vec is None:
            ex.char_vec = model.char_vectors(list(ex.tokens))


def _restore_tensors(model: SequenceTagger, tensors: dict[str, np.ndarray]) -> None:
    live = model.all_tensors()
    for name, arr in tensors.items():
        live[name][...] = arr


def _param_norms(params: dict[str, np.ndarray]) -> dict[str, float]:
    return {
        name: float(np.linalg.norm(arr[np.isfinite(arr)]))
        for name, arr in params.items()
    }
