"""BIO corpus reader and builders for the fine-tuning sample populations."""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .codec import DEFAULT_EXPLANATION, serialize_exp, serialize_mentions
from .errors import (ConfigurationError, CorpusParseError, ReferentialIntegrityError,
                     SchemaMismatchError)
from .matching import MatchingPair
from .prompts import (PromptSample, Task, build_exp_prompt, build_filtered_prompt,
                      build_ner_prompt, build_type_recognition_prompt, render_type_list)
from .types import AnnotatedExample, EntityMention, FilteredSchema, TypeSchema

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "dev", "test")
DOCSTART = "-DOCSTART-"
DEFAULT_EXPLANATION_SENTINEL = "@default"


@dataclass(frozen=True)
class CorpusSplit:
    name: str
    examples: tuple[AnnotatedExample, ...]
    schema: TypeSchema

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        for ex in self.examples:
            ex.check_schema(self.schema)

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def by_id(self) -> dict[str, AnnotatedExample]:
        return {ex.id: ex for ex in self.examples}


@dataclass(frozen=True)
class ExplanationRecord:
    example_id: str
    explanation: str

    def __post_init__(self):
        if not self.explanation or not self.explanation.strip():
            raise ValueError(f"empty explanation for {self.example_id!r}")


def decode_bio(tokens: Sequence[str], tags: Sequence[str], strict: bool = False,
               lines: Sequence[int] | None = None, source=None) -> list[EntityMention]:
    """Turn a BIO tag sequence into mentions.

    A ``B-X (I-X)*`` run is one mention. An ``I-X`` that does not continue an
    ``X`` run opens a new mention, unless ``strict`` is set.
    """
    mentions = []
    cur_type, cur_tokens = None, []

    def close():
        if cur_type is not None:
            mentions.append(EntityMention(cur_type, " ".join(cur_tokens)))

    for i, (tok, tag) in enumerate(zip(tokens, tags)):
        line = lines[i] if lines is not None else None
        if tag == "O":
            close()
            cur_type, cur_tokens = None, []
            continue
        prefix, sep, etype = tag.partition("-")
        if not sep or prefix not in ("B", "I") or not etype:
            raise CorpusParseError(f"invalid BIO tag {tag!r}", line, source)
        if prefix == "I" and cur_type == etype:
            cur_tokens.append(tok)
            continue
        if prefix == "I" and strict:
            raise CorpusParseError(f"{tag} does not continue an entity of type {etype}", line, source)
        close()
        cur_type, cur_tokens = etype, [tok]
    close()
    return mentions


def encode_bio(tokens: Sequence[str], mentions: Sequence[EntityMention]) -> list[str]:
    """Inverse of :func:`decode_bio` for mentions that appear in order as token runs."""
    tags = ["O"] * len(tokens)
    pos = 0
    for m in mentions:
        span = m.surface.split(" ")
        for start in range(pos, len(tokens) - len(span) + 1):
            if list(tokens[start:start + len(span)]) == span:
                tags[start] = f"B-{m.type_tag}"
                for j in range(start + 1, start + len(span)):
                    tags[j] = f"I-{m.type_tag}"
                pos = start + len(span)
                break
        else:
            raise ValueError(f"mention {m.surface!r} not found after token {pos}")
    return tags


def read_bio_corpus(path: str | Path, schema: TypeSchema, column_index: int = -1,
                    name: str = "train", strict: bool = False) -> CorpusSplit:
    """Read a whitespace-separated column file into a :class:`CorpusSplit`.

    Sentences are separated by blank lines, tokens are in column 0 and tags
    in ``column_index``. ``-DOCSTART-`` lines are skipped. Every token line
    must have the same number of columns as the first one.
    """
    source = str(path)
    examples = []
    n_cols = None
    tokens, tags, lines = [], [], []

    def flush():
        if not tokens:
            return
        mentions = decode_bio(tokens, tags, strict, lines, source)
        ex_id = f"{name}-{len(examples)}"
        examples.append(AnnotatedExample.build(ex_id, " ".join(tokens), mentions, schema))
        tokens.clear()
        tags.clear()
        lines.clear()

    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            cols = raw.split()
            if not cols:
                flush()
                continue
            if cols[0] == DOCSTART:
                flush()
                continue
            if n_cols is None:
                n_cols = len(cols)
                if not -n_cols <= column_index < n_cols or n_cols < 2:
                    raise CorpusParseError(
                        f"tag column {column_index} does not exist in a {n_cols}-column file",
                        lineno, source)
            elif len(cols) != n_cols:
                raise CorpusParseError(f"expected {n_cols} columns, found {len(cols)}", lineno, source)
            tag = cols[column_index]
            if tag != "O":
                etype = tag.partition("-")[2]
                if etype and etype not in schema:
                    raise SchemaMismatchError(etype, line=lineno, source=source)
            tokens.append(cols[0])
            tags.append(tag)
            lines.append(lineno)
    flush()
    return CorpusSplit(name, tuple(examples), schema)


def read_explanations(path: str | Path) -> list[ExplanationRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
                records.append(ExplanationRecord(str(obj["example_id"]), obj["explanation"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusParseError(f"bad explanation record: {exc}", lineno, str(path)) from None
    return records


def build_ner_samples(split: CorpusSplit,
                      filtered: Mapping[str, FilteredSchema] | None = None) -> list[PromptSample]:
    schema = split.schema
    samples = []
    for ex in split.examples:
        target = serialize_mentions(ex.mentions, schema)
        if filtered is None:
            samples.append(PromptSample(ex.id, Task.NER, build_ner_prompt(schema, ex.sentence), target))
            continue
        if ex.id not in filtered:
            raise ConfigurationError(f"no filtered schema for example {ex.id!r}")
        fs = filtered[ex.id]
        samples.append(PromptSample(
            ex.id, Task.NER_FILTERED, build_filtered_prompt(schema, ex.sentence, fs), target,
            {"retained": list(fs.retained), "delta": fs.threshold}))
    return samples


def select_auxiliary(n: int, fraction: float, seed: int) -> list[int]:
    """Indices of ceil(fraction * n) examples drawn without replacement, ascending."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f"auxiliary fraction must be in (0, 1], got {fraction}")
    # round first: 0.07 * 100 evaluates to 7.000000000000001
    count = min(n, math.ceil(round(fraction * n, 9)))
    return sorted(random.Random(seed).sample(range(n), count))


def build_auxiliary_samples(split: CorpusSplit, fraction: float = 0.2,
                            seed: int = 0) -> list[PromptSample]:
    if not split.examples:
        raise ConfigurationError("cannot draw auxiliary samples from an empty split")
    schema = split.schema
    samples = []
    for i in select_auxiliary(len(split), fraction, seed):
        ex = split.examples[i]
        names = [schema.display_name(t) for t in schema.in_schema_order(ex.positive_types)]
        samples.append(PromptSample(ex.id, Task.TYPE_RECOGNITION,
                                    build_type_recognition_prompt(schema, ex.sentence),
                                    render_type_list(names)))
    return samples


def merge_explanations(split: CorpusSplit, records: Iterable[ExplanationRecord],
                       filtered: Mapping[str, FilteredSchema] | None = None) -> list[PromptSample]:
    """One explanation-augmented sample per example that has a record, in split order."""
    by_id = split.by_id()
    explanations: dict[str, str] = {}
    for rec in records:
        if rec.example_id not in by_id:
            raise ReferentialIntegrityError(f"explanation refers to unknown example {rec.example_id!r}")
        if rec.example_id in explanations:
            logger.warning("duplicate explanation for %s; keeping the first", rec.example_id)
            continue
        explanations[rec.example_id] = rec.explanation

    schema = split.schema
    samples = []
    for ex in split.examples:
        if ex.id not in explanations:
            continue
        text = explanations[ex.id]
        if text == DEFAULT_EXPLANATION_SENTINEL:
            text = DEFAULT_EXPLANATION
        fs = filtered.get(ex.id) if filtered is not None else None
        samples.append(PromptSample(ex.id, Task.NER_EXP, build_exp_prompt(schema, ex.sentence, fs),
                                    serialize_exp(ex.mentions, text, schema)))
    return samples


def build_matching_pairs(split: CorpusSplit) -> list[MatchingPair]:
    return [MatchingPair(ex.sentence, ex.positive_types, ex.negative_types) for ex in split.examples]


def corpus_statistics(split: CorpusSplit) -> dict:
    per_type = {tag: 0 for tag in split.schema.tags}
    for ex in split.examples:
        for m in ex.mentions:
            per_type[m.type_tag] += 1
    return {
        "split": split.name,
        "examples": len(split),
        "mentions": sum(per_type.values()),
        "per_type_mentions": per_type,
        "empty_positive_types": sum(1 for ex in split.examples if not ex.positive_types),
    }


def write_samples(samples: Iterable[PromptSample], fh) -> None:
    for s in samples:
        fh.write(json.dumps(s.to_record(), ensure_ascii=False) + "\n")


def read_samples(path: str | Path) -> list[PromptSample]:
    with open(path, encoding="utf-8") as f:
        return [PromptSample.from_record(json.loads(line)) for line in f if line.strip()]
