"""Bi-LSTM-CRF sequence labeling for legal named-entity recognition.

Built from scratch on numpy: BIO data preparation, stacked word and
contextual character-LM embeddings, a bidirectional LSTM encoder, and a
linear-chain CRF trained by negative log-likelihood and decoded by Viterbi.
"""

from .corpus import (
    EntitySpan,
    LabeledSentence,
    TagSet,
    Token,
    Vocabulary,
    bio_to_spans,
    build_vocab,
    parse_annotations,
    read_conll,
    spans_to_bio,
    tokenize,
    validate_bio,
    write_conll,
)
from .crf import (
    TagPath,
    TransitionMatrix,
    constrain_transitions,
    log_partition,
    nll_loss,
    path_score,
    viterbi_decode,
)
from .embeddings import (
    CharLM,
    EmbeddingTable,
    StackedEmbedder,
    build_char_lm,
    char_lm_forward,
    contextual_embed,
    load_pretrained,
    lookup,
    pretrain_char_lm,
    word_dropout,
)
from .encoder import (
    BiLSTMEncoder,
    LSTMCellParams,
    LSTMState,
    bilstm_forward,
    lstm_cell_step,
    lstm_forward,
    project_emissions,
)
from .evaluation import Report, classification_report, match_spans, token_accuracy
from .tagger import SequenceTagger, build_tagger
from .training import (
    Checkpoint,
    Example,
    Hyperparameters,
    anneal_check,
    compute_gradients,
    sgd_step,
    train,
)

__version__ = "0.1.0"
