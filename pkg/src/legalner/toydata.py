"""Deterministic synthetic corpus for smoke tests and overfit demos.

Twenty short sentences over three entity classes (COURT, JUDGE, DATE) with
strongly patterned surface forms, written as inline-markup templates. The
corpus is small enough to memorize and regular enough that a scaled-down
tagger overfits it to perfect span F1 within a couple hundred epochs.
"""

from __future__ import annotations

from .corpus import EntitySpan, LabeledSentence, TagSet, tokenize

TOY_CLASSES = ("COURT", "JUDGE", "DATE")

# [LABEL word word ...] marks one entity span; everything else is O.
_MARKED_SENTENCES = (
    "the [COURT supreme court of india] ruled on [DATE 4 january 1998]",
    "[JUDGE justice sharma] presided over the [COURT high court of delhi]",
    "on [DATE 12 march 2001] the [COURT high court of bombay] dismissed the appeal",
    "the [COURT district court of pune] heard arguments from [JUDGE justice verma]",
    "[JUDGE justice iyer] delivered the judgement on [DATE 7 august 1976]",
    "the petition was filed before the [COURT supreme court of india] on [DATE 19 june 2004]",
    "[JUDGE justice rao] adjourned the [COURT high court of madras] until [DATE 2 april 1989]",
    "the [COURT high court of delhi] convened on [DATE 23 november 1995]",
    "counsel addressed [JUDGE justice sharma] before the [COURT district court of pune]",
    "on [DATE 30 september 1982] [JUDGE justice verma] joined the [COURT supreme court of india]",
    "the order of the [COURT high court of bombay] was stayed on [DATE 15 may 2010]",
    "[JUDGE justice iyer] and [JUDGE justice rao] reviewed the appeal",
    "the [COURT supreme court of india] overruled the [COURT high court of madras]",
    "a hearing was listed for [DATE 8 february 1999] before [JUDGE justice verma]",
    "the [COURT district court of pune] issued summons on [DATE 21 july 2015]",
    "[JUDGE justice sharma] cited the ruling of [DATE 3 october 1967]",
    "the respondent appeared before the [COURT high court of madras] on [DATE 11 december 2008]",
    "[JUDGE justice rao] remanded the matter to the [COURT high court of delhi]",
    "the bench of the [COURT supreme court of india] rose on [DATE 26 august 1993]",
    "on [DATE 5 march 1979] the [COURT high court of bombay] admitted the plea of [JUDGE justice iyer]",
)


def toy_tagset() -> TagSet:
    return TagSet(TOY_CLASSES)


def toy_sentences() -> list[LabeledSentence]:
    """The fixed 20-sentence corpus as labeled sentences."""
    sentences = []
    for i, marked in enumerate(_MARKED_SENTENCES):
        words, spans = _parse_markup(marked)
        text = " ".join(words)
        sentences.append(LabeledSentence(
            tokens=tuple(tokenize(text)),
            spans=tuple(spans),
            doc_id=f"toy-{i:02d}",
            section="PREAMBLE" if i % 4 == 0 else "JUDGEMENT",
        ))
    return sentences


def _parse_markup(marked: str) -> tuple[list[str], list[EntitySpan]]:
    words: list[str] = []
    spans: list[EntitySpan] = []
    label = None
    span_start = 0
    for piece in marked.split(" "):
        if piece.startswith("["):
            label = piece[1:]
            span_start = len(words)
            continue
        if piece.endswith("]"):
            words.append(piece[:-1])
            spans.append(EntitySpan(label, span_start, len(words)))
            label = None
            continue
        words.append(piece)
    return words, spans


def toy_annotation_docs() -> list[dict]:
    """The corpus in annotation-JSON form (character-offset spans)."""
    docs = []
    for s in toy_sentences():
        text = " ".join(s.token_texts)
        docs.append({
            "id": s.doc_id,
            "text": text,
            "meta": {"section": s.section},
            "annotations": [
                {
                    "start": s.tokens[span.token_start].char_start,
                    "end": s.tokens[span.token_end - 1].char_end,
                    "label": span.label,
                }
                for span in s.spans
            ],
        })
    return docs
