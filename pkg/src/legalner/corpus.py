"""Data model and file formats for span-annotated legal text.

Tokens, entity spans, BIO tag sequences, vocabularies, and the two
interchange formats: annotation JSON (character-offset spans over raw text)
and two-column CoNLL files (one ``token tag`` pair per line).

All functions here are pure over immutable inputs; the file writers take
exclusive ownership of their output path.
"""

from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

LEGAL_ENTITY_CLASSES = (
    "COURT",
    "PETITIONER",
    "RESPONDENT",
    "JUDGE",
    "LAWYER",
    "DATE",
    "ORG",
    "GPE",
    "STATUTE",
    "PROVISION",
    "PRECEDENT",
    "CASENUMBER",
    "WITNESS",
    "OTHERPERSON",
)

SECTIONS = ("PREAMBLE", "JUDGEMENT")

UNK_TOKEN = "<unk>"

_TOKEN_RE = re.compile(r"\S+")


class CorpusError(ValueError):
    """Base class for data-model and file-format errors."""


class SchemaError(CorpusError):
    """The annotation JSON is malformed or violates the document schema."""


class AnnotationError(CorpusError):
    """An annotation's content is invalid (offsets, alignment, overlap)."""


class LabelingError(CorpusError):
    """A tag or label is unknown or a tag sequence is structurally invalid."""


class ConllError(CorpusError):
    """A CoNLL file is malformed."""


class MisalignedSpanWarning(UserWarning):
    """Lenient parsing snapped an annotation outward to token boundaries."""


@dataclass(frozen=True)
class Token:
    """A surface token with character offsets into its source text."""

    text: str
    char_start: int
    char_end: int

    def __post_init__(self):
        if not self.text:
            raise CorpusError("token text must be non-empty")
        if any(ch.isspace() for ch in self.text):
            raise CorpusError(f"token text contains whitespace: {self.text!r}")
        if not self.char_start < self.char_end:
            raise CorpusError(
                f"token offsets must satisfy start < end, got "
                f"({self.char_start}, {self.char_end})"
            )


@dataclass(frozen=True)
class EntitySpan:
    """A labeled span over token indices; ``token_end`` is exclusive."""

    label: str
    token_start: int
    token_end: int

    def __post_init__(self):
        if not self.token_start < self.token_end:
            raise CorpusError(
                f"span must satisfy token_start < token_end, got "
                f"({self.token_start}, {self.token_end})"
            )


@dataclass(frozen=True)
class LabeledSentence:
    """One annotation sample: tokens plus non-overlapping entity spans."""

    tokens: tuple[Token, ...]
    spans: tuple[EntitySpan, ...]
    doc_id: str = ""
    section: str = "JUDGEMENT"

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "spans", tuple(self.spans))
        if self.section not in SECTIONS:
            raise CorpusError(f"unknown section {self.section!r}")
        prev_end = 0
        for span in self.spans:
            if span.token_start < prev_end:
                raise CorpusError(
                    f"spans overlap or are unsorted at token {span.token_start}"
                )
            if span.token_end > len(self.tokens):
                raise CorpusError(
                    f"span ({span.token_start}, {span.token_end}) exceeds "
                    f"sentence length {len(self.tokens)}"
                )
            prev_end = span.token_end

    @property
    def token_texts(self) -> list[str]:
        return [t.text for t in self.tokens]


class TagSet:
    """Entity classes expanded to BIO tags, plus CRF start/stop bookkeeping.

    Tag index 0 is always ``O``; each class contributes ``B-<class>`` and
    ``I-<class>`` in class order, so indices are stable for a given class
    list. ``start_id`` and ``stop_id`` are reserved indices used only by the
    CRF transition matrix and never appear in files.
    """

    def __init__(self, classes: Sequence[str] = LEGAL_ENTITY_CLASSES):
        classes = tuple(classes)
        if not classes:
            raise LabelingError("tag set needs at least one entity class")
        if len(set(classes)) != len(classes):
            raise LabelingError("duplicate entity class names")
        self.classes = classes
        tags = ["O"]
        for cls in classes:
            tags.append(f"B-{cls}")
            tags.append(f"I-{cls}")
        self.tags = tuple(tags)
        self._tag_to_id = {tag: i for i, tag in enumerate(self.tags)}

    @classmethod
    def default(cls) -> "TagSet":
        """The 14 legal entity classes (29 BIO tags)."""
        return cls(LEGAL_ENTITY_CLASSES)

    @property
    def n_tags(self) -> int:
        return len(self.tags)

    @property
    def start_id(self) -> int:
        return len(self.tags)

    @property
    def stop_id(self) -> int:
        return len(self.tags) + 1

    def tag_id(self, name: str) -> int:
        try:
            return self._tag_to_id[name]
        except KeyError:
            raise LabelingError(f"unknown tag {name!r}") from None

    def has_tag(self, name: str) -> bool:
        return name in self._tag_to_id

    def has_class(self, label: str) -> bool:
        return label in self.classes

    def __eq__(self, other):
        return isinstance(other, TagSet) and self.classes == other.classes

    def __repr__(self):
        return f"TagSet({len(self.classes)} classes, {self.n_tags} tags)"


class Vocabulary:
    """Dense token-id mapping with a reserved unknown id 0.

    Ids are assigned deterministically (frequency descending, then
    lexicographic) so identical corpora always produce identical tables.
    """

    def __init__(self, tokens: Sequence[str], min_freq: int = 1,
                 case_folding: bool = False):
        tokens = list(tokens)
        if not tokens or tokens[0] != UNK_TOKEN:
            tokens = [UNK_TOKEN] + tokens
        self.id_to_token = tuple(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        self.min_freq = min_freq
        self.case_folding = case_folding
        self.unk_id = 0

    def id_of(self, text: str) -> int:
        if self.case_folding:
            text = text.lower()
        return self.token_to_id.get(text, self.unk_id)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, text: str) -> bool:
        if self.case_folding:
            text = text.lower()
        return text in self.token_to_id

    def __eq__(self, other):
        return (
            isinstance(other, Vocabulary)
            and self.id_to_token == other.id_to_token
            and self.min_freq == other.min_freq
            and self.case_folding == other.case_folding
        )


@dataclass(frozen=True)
class BioViolation:
    """One structural defect in a BIO tag sequence."""

    index: int
    tag: str
    message: str


def tokenize(text: str) -> list[Token]:
    """Split on whitespace into offset-carrying tokens.

    Tokens are maximal runs of non-whitespace characters; punctuation stays
    attached. ``text[tok.char_start:tok.char_end] == tok.text`` always holds.
    """
    return [
        Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)
    ]


def spans_to_bio(sentence: LabeledSentence, tagset: TagSet) -> list[int]:
    """Encode entity spans as a BIO2 tag-id sequence (one id per token).

    Every span starts with ``B-``, continuation tokens get ``I-``, everything
    else ``O``; adjacent same-class spans therefore stay distinguishable.
    """
    tags = [0] * len(sentence.tokens)
    for i, span in enumerate(sentence.spans):
        if not tagset.has_class(span.label):
            raise LabelingError(f"span {i}: unknown entity class {span.label!r}")
        tags[span.token_start] = tagset.tag_id(f"B-{span.label}")
        inside = tagset.tag_id(f"I-{span.label}")
        for t in range(span.token_start + 1, span.token_end):
            tags[t] = inside
    return tags


def bio_to_spans(tags: Sequence[int], tagset: TagSet,
                 strict: bool = True) -> list[EntitySpan]:
    """Decode a BIO tag-id sequence back into entity spans.

    Exact inverse of :func:`spans_to_bio` on valid input. In strict mode an
    orphan ``I-`` tag (not preceded by a same-class ``B-``/``I-``) raises; in
    repair mode it opens a new span.
    """
    spans: list[EntitySpan] = []
    i = 0
    while i < len(tags):
        name = _tag_name(tags[i], tagset, i)
        if name == "O":
            i += 1
            continue
        kind, label = name.split("-", 1)
        if kind == "I" and strict:
            raise LabelingError(f"orphan {name} at position {i}")
        j = i + 1
        inside = f"I-{label}"
        while j < len(tags) and _tag_name(tags[j], tagset, j) == inside:
            j += 1
        spans.append(EntitySpan(label, i, j))
        i = j
    return spans


def validate_bio(tags: Sequence[int], tagset: TagSet) -> list[BioViolation]:
    """Check BIO structure; an empty report means the sequence is round-trip safe.

    Flags every ``I-c`` not preceded by ``B-c`` or ``I-c`` of the same class.
    """
    violations = []
    prev_label = None  # entity class continued from the previous position
    for i, tid in enumerate(tags):
        name = _tag_name(tid, tagset, i)
        if name == "O":
            prev_label = None
            continue
        kind, label = name.split("-", 1)
        if kind == "I" and label != prev_label:
            reason = (
                "orphan I tag" if prev_label is None
                else f"class switch from {prev_label} without B"
            )
            violations.append(BioViolation(i, name, reason))
        prev_label = label
    return violations


def _tag_name(tag_id: int, tagset: TagSet, position: int) -> str:
    if not 0 <= tag_id < tagset.n_tags:
        raise LabelingError(
            f"tag id {tag_id} at position {position} outside tag set "
            f"of size {tagset.n_tags}"
        )
    return tagset.tags[tag_id]


def parse_annotations(document: str, mode: str = "strict") -> list[LabeledSentence]:
    """Parse annotation JSON into labeled sentences.

    The document is a JSON array of objects ``{"id", "text", "meta":
    {"section"}, "annotations": [{"start", "end", "label"}]}`` with 0-based
    character offsets, end exclusive. Each object becomes one sentence
    (whitespace-tokenized, no further splitting).

    Annotations whose boundaries fall inside tokens are errors in strict
    mode; in lenient mode they are snapped outward to full tokens with a
    :class:`MisalignedSpanWarning`.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be 'strict' or 'lenient', got {mode!r}")
    try:
        docs = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError(
            f"malformed JSON at byte offset {exc.pos}: {exc.msg}"
        ) from None
    if not isinstance(docs, list):
        raise SchemaError("annotation document must be a JSON array")

    sentences = []
    for d, doc in enumerate(docs):
        sentences.append(_parse_document(d, doc, mode))
    return sentences


def _parse_document(index: int, doc: object, mode: str) -> LabeledSentence:
    if not isinstance(doc, dict):
        raise SchemaError(f"document {index}: expected an object")
    doc_id = doc.get("id")
    text = doc.get("text")
    if not isinstance(doc_id, str) or not isinstance(text, str):
        raise SchemaError(f"document {index}: 'id' and 'text' must be strings")
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise SchemaError(f"document {doc_id!r}: 'meta' must be an object")
    section = meta.get("section", "JUDGEMENT")
    if section not in SECTIONS:
        raise SchemaError(f"document {doc_id!r}: unknown section {section!r}")
    annotations = doc.get("annotations", [])
    if not isinstance(annotations, list):
        raise SchemaError(f"document {doc_id!r}: 'annotations' must be an array")

    tokens = tokenize(text)
    start_index = {tok.char_start: i for i, tok in enumerate(tokens)}
    end_index = {tok.char_end: i for i, tok in enumerate(tokens)}

    spans = []
    for a, ann in enumerate(annotations):
        if not isinstance(ann, dict):
            raise SchemaError(f"document {doc_id!r}: annotation {a} is not an object")
        try:
            start, end, label = ann["start"], ann["end"], ann["label"]
        except KeyError as exc:
            raise SchemaError(
                f"document {doc_id!r}: annotation {a} missing key {exc}"
            ) from None
        if not (isinstance(start, int) and isinstance(end, int)
                and isinstance(label, str)):
            raise SchemaError(f"document {doc_id!r}: annotation {a} has wrong types")
        if not 0 <= start < end <= len(text):
            raise AnnotationError(
                f"document {doc_id!r}: annotation {a} offsets ({start}, {end}) "
                f"out of range for text of length {len(text)}"
            )
        if start in start_index and end in end_index:
            tok_start, tok_end = start_index[start], end_index[end] + 1
        elif mode == "strict":
            raise AnnotationError(
                f"document {doc_id!r}: annotation {a} ({start}, {end}) does not "
                f"align to token boundaries"
            )
        else:
            tok_start, tok_end = _snap_outward(tokens, start, end)
            if tok_start is None:
                raise AnnotationError(
                    f"document {doc_id!r}: annotation {a} ({start}, {end}) covers "
                    f"no token characters"
                )
            warnings.warn(
                f"document {doc_id!r}: annotation {a} snapped outward to tokens "
                f"[{tok_start}, {tok_end})",
                MisalignedSpanWarning,
                stacklevel=3,
            )
        spans.append((tok_start, tok_end, label, a))

    spans.sort(key=lambda s: s[0])
    prev_end, prev_a = 0, None
    for tok_start, tok_end, _, a in spans:
        if tok_start < prev_end:
            raise AnnotationError(
                f"document {doc_id!r}: annotations {prev_a} and {a} overlap"
            )
        prev_end, prev_a = tok_end, a

    return LabeledSentence(
        tokens=tuple(tokens),
        spans=tuple(EntitySpan(label, s, e) for s, e, label, _ in spans),
        doc_id=doc_id,
        section=section,
    )


def _snap_outward(tokens, start, end):
    """Widen a character range to full tokens covering every annotated char."""
    tok_start = next(
        (i for i, t in enumerate(tokens) if t.char_end > start), None
    )
    tok_end = next(
        (i for i in range(len(tokens) - 1, -1, -1)
         if tokens[i].char_start < end),
        None,
    )
    if tok_start is None or tok_end is None or tok_start > tok_end:
        return None, None
    return tok_start, tok_end + 1


def remove_stopwords(sentence: LabeledSentence,
                     stoplist: set[str]) -> LabeledSentence:
    """Drop stopword tokens that no entity span covers; remap span indices.

    Matching is case-folded. Tokens inside entity spans are always kept, so
    every surviving span stays contiguous and non-empty.
    """
    covered = set()
    for span in sentence.spans:
        covered.update(range(span.token_start, span.token_end))
    keep = [
        i for i, tok in enumerate(sentence.tokens)
        if i in covered or tok.text.lower() not in stoplist
    ]
    new_index = {old: new for new, old in enumerate(keep)}
    return LabeledSentence(
        tokens=tuple(sentence.tokens[i] for i in keep),
        spans=tuple(
            EntitySpan(s.label, new_index[s.token_start],
                       new_index[s.token_end - 1] + 1)
            for s in sentence.spans
        ),
        doc_id=sentence.doc_id,
        section=sentence.section,
    )


def read_stoplist(path) -> set[str]:
    """Read a stoplist file: one lowercase token per line."""
    with open(path, encoding="utf-8") as f:
        return {line.strip().lower() for line in f if line.strip()}


def build_vocab(dataset: Iterable[LabeledSentence], min_freq: int = 1,
                case_folding: bool = False) -> Vocabulary:
    """Build a vocabulary over every token with corpus frequency >= min_freq."""
    if min_freq < 1:
        raise ValueError(f"min_freq must be >= 1, got {min_freq}")
    counts: Counter[str] = Counter()
    for sentence in dataset:
        for tok in sentence.tokens:
            counts[tok.text.lower() if case_folding else tok.text] += 1
    kept = sorted(
        (tok for tok, n in counts.items() if n >= min_freq),
        key=lambda tok: (-counts[tok], tok),
    )
    return Vocabulary(kept, min_freq=min_freq, case_folding=case_folding)


def read_conll(path, tagset: TagSet) -> list[tuple[list[str], list[str]]]:
    """Read a two-column CoNLL file into (tokens, tag names) sentences.

    Lines are ``token<SPACE>tag`` with exactly one space; a blank line ends a
    sentence. Unknown tag names are rejected.
    """
    sentences = []
    tokens: list[str] = []
    tags: list[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line:
                if tokens:
                    sentences.append((tokens, tags))
                    tokens, tags = [], []
                continue
            fields = line.split(" ")
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise ConllError(
                    f"{path}:{lineno}: expected 'token tag' with exactly one "
                    f"space, got {line!r}"
                )
            token, tag = fields
            if not tagset.has_tag(tag):
                raise ConllError(f"{path}:{lineno}: unknown tag {tag!r}")
            tokens.append(token)
            tags.append(tag)
    if tokens:
        sentences.append((tokens, tags))
    return sentences


def write_conll(sentences: Iterable[tuple[Sequence[str], Sequence[str]]],
                path) -> None:
    """Write sentences in canonical CoNLL form.

    Canonical form: one ``token tag`` pair per line, single space, blank line
    between sentences, trailing newline, UTF-8, LF endings.
    """
    blocks = []
    for s, (tokens, tags) in enumerate(sentences):
        if len(tokens) != len(tags):
            raise ConllError(f"sentence {s}: {len(tokens)} tokens vs {len(tags)} tags")
        lines = []
        for token, tag in zip(tokens, tags):
            if not token or any(ch.isspace() for ch in token):
                raise ConllError(f"sentence {s}: unwritable token {token!r}")
            if not tag or any(ch.isspace() for ch in tag):
                raise ConllError(f"sentence {s}: unwritable tag {tag!r}")
            lines.append(f"{token} {tag}")
        blocks.append("\n".join(lines))
    payload = "\n\n".join(blocks) + "\n" if blocks else ""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(payload)


def sentence_from_conll(tokens: Sequence[str], tags: Sequence[str],
                        tagset: TagSet, doc_id: str = "",
                        section: str = "JUDGEMENT") -> LabeledSentence:
    """Rebuild a LabeledSentence from CoNLL columns.

    CoNLL files carry no character offsets, so tokens get synthetic offsets
    as if joined by single spaces.
    """
    toks = []
    pos = 0
    for text in tokens:
        toks.append(Token(text, pos, pos + len(text)))
        pos += len(text) + 1
    tag_ids = [tagset.tag_id(t) for t in tags]
    spans = bio_to_spans(tag_ids, tagset, strict=False)
    return LabeledSentence(tuple(toks), tuple(spans), doc_id=doc_id,
                           section=section)
