"""Domain value objects: entity types, schemas, mentions, examples and score records.

Everything here is immutable and free of I/O apart from the small schema
JSON helpers at the bottom.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigurationError, SchemaMismatchError

_FORBIDDEN_NAME_CHARS = set("[](),\n\r")


def _check_name(kind: str, value: str) -> None:
    if not value or not value.strip():
        raise ValueError(f"{kind} must be nonempty")
    bad = _FORBIDDEN_NAME_CHARS.intersection(value)
    if bad:
        raise ValueError(f"{kind} {value!r} contains forbidden characters {sorted(bad)}")
    if value != value.strip():
        raise ValueError(f"{kind} {value!r} has surrounding whitespace")


@dataclass(frozen=True)
class EntityType:
    tag: str
    display_name: str
    description: str

    def __post_init__(self):
        _check_name("tag", self.tag)
        _check_name("display_name", self.display_name)
        if not self.description or not self.description.strip():
            raise ValueError(f"description of {self.tag!r} must be nonempty")


@dataclass(frozen=True)
class TypeSchema:
    """Ordered candidate type list.

    The position of a type in ``types`` is its logit index everywhere in the
    package, so the order must not change for the lifetime of a run.
    """

    types: tuple[EntityType, ...]

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))
        if not self.types:
            raise ValueError("a schema needs at least one entity type")
        tags = [t.tag for t in self.types]
        names = [t.display_name for t in self.types]
        if len(set(tags)) != len(tags):
            raise ValueError(f"duplicate tags in schema: {tags}")
        # case-insensitive uniqueness keeps the codec's case folding unambiguous
        if len({n.lower() for n in names}) != len(names):
            raise ValueError(f"duplicate display names in schema: {names}")

    @property
    def k(self) -> int:
        return len(self.types)

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(t.tag for t in self.types)

    @property
    def display_names(self) -> tuple[str, ...]:
        return tuple(t.display_name for t in self.types)

    def __len__(self):
        return len(self.types)

    def __iter__(self):
        return iter(self.types)

    def __contains__(self, tag):
        return any(t.tag == tag for t in self.types)

    def index(self, tag: str) -> int:
        for i, t in enumerate(self.types):
            if t.tag == tag:
                return i
        raise SchemaMismatchError(tag)

    def get(self, tag: str) -> EntityType:
        return self.types[self.index(tag)]

    def display_name(self, tag: str) -> str:
        return self.get(tag).display_name

    def tag_for_name(self, name: str) -> str | None:
        """Resolve a display name (case-insensitive, trimmed) to its tag."""
        wanted = name.strip().lower()
        for t in self.types:
            if t.display_name.lower() == wanted:
                return t.tag
        return None

    def in_schema_order(self, tags: Iterable[str]) -> list[str]:
        wanted = set(tags)
        for tag in wanted:
            if tag not in self:
                raise SchemaMismatchError(tag)
        return [t for t in self.tags if t in wanted]


@dataclass(frozen=True)
class EntityMention:
    type_tag: str
    surface: str

    def __post_init__(self):
        if not self.surface or not self.surface.strip():
            raise ValueError("mention surface must be nonempty after trimming")


@dataclass(frozen=True)
class AnnotatedExample:
    id: str
    sentence: str
    mentions: tuple[EntityMention, ...]
    positive_types: frozenset[str]
    negative_types: frozenset[str]
    explanation: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "mentions", tuple(self.mentions))
        object.__setattr__(self, "positive_types", frozenset(self.positive_types))
        object.__setattr__(self, "negative_types", frozenset(self.negative_types))
        if not self.sentence or not self.sentence.strip():
            raise ValueError(f"example {self.id!r} has an empty sentence")
        if {m.type_tag for m in self.mentions} != self.positive_types:
            raise ValueError(f"example {self.id!r}: positive types disagree with mentions")
        if self.positive_types & self.negative_types:
            raise ValueError(f"example {self.id!r}: positive and negative types overlap")

    @classmethod
    def build(cls, id: str, sentence: str, mentions: Sequence[EntityMention],
              schema: TypeSchema, explanation: str | None = None) -> "AnnotatedExample":
        pos, neg = derive_type_sets(mentions, schema)
        return cls(id, sentence, tuple(mentions), pos, neg, explanation)

    def check_schema(self, schema: TypeSchema) -> None:
        if (self.positive_types | self.negative_types) != set(schema.tags):
            raise SchemaMismatchError(
                sorted((self.positive_types | self.negative_types) ^ set(schema.tags))[0],
                source=f"example {self.id}")


@dataclass(frozen=True)
class MatchScore:
    type_tag: str
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score) or abs(self.score) > 1.0 + 1e-6:
            raise ValueError(f"match score {self.score!r} for {self.type_tag!r} outside [-1, 1]")


@dataclass(frozen=True)
class FilteredSchema:
    """Types retained by the matcher, best first, with the scores they came from."""

    retained: tuple[str, ...]
    threshold: float
    scores: tuple[MatchScore, ...]

    def __post_init__(self):
        object.__setattr__(self, "retained", tuple(self.retained))
        object.__setattr__(self, "scores", tuple(self.scores))
        by_tag = {s.type_tag: s.score for s in self.scores}
        for tag in self.retained:
            if tag not in by_tag:
                raise ValueError(f"retained type {tag!r} has no score")
            if not by_tag[tag] > self.threshold:
                raise ValueError(f"retained type {tag!r} does not exceed threshold")

    def score_map(self) -> dict[str, float]:
        return {s.type_tag: s.score for s in self.scores}


@dataclass(frozen=True)
class ClassifierLogits:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("classifier logits must be finite")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class TokenLogProbs:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("token log-probabilities need at least one target token")
        for v in vals:
            if not math.isfinite(v) or v > 0.0:
                raise ValueError(f"invalid token log-probability {v!r}")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)


def derive_type_sets(mentions: Iterable[EntityMention],
                     schema: TypeSchema) -> tuple[frozenset[str], frozenset[str]]:
    """Split the schema tags into (mentioned, not mentioned)."""
    present = set()
    for m in mentions:
        if m.type_tag not in schema:
            raise SchemaMismatchError(m.type_tag)
        present.add(m.type_tag)
    return frozenset(present), frozenset(t for t in schema.tags if t not in present)


CONLL2003_TYPES = (
    EntityType("LOC", "location", "location: Names that are locations."),
    EntityType("PER", "person", "person: Names of people."),
    EntityType("ORG", "organization", "organization: Companies, agencies, institutions, etc."),
    EntityType("MISC", "miscellaneous",
               "miscellaneous: Names of miscellaneous entities that do not belong to "
               "person, organization and location."),
)


def conll2003_schema() -> TypeSchema:
    return TypeSchema(CONLL2003_TYPES)


def schema_from_records(records: Sequence[Mapping[str, str]]) -> TypeSchema:
    try:
        return TypeSchema(tuple(EntityType(r["tag"], r["display_name"], r["description"])
                                for r in records))
    except KeyError as exc:
        raise ConfigurationError(f"schema record is missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigurationError(f"invalid schema: {exc}") from None


def load_schema(path: str | Path) -> TypeSchema:
    """Read a schema JSON file: a list of {tag, display_name, description} objects,
    or an object with a ``types`` list."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = data.get("types", [])
    return schema_from_records(data)


def schema_to_records(schema: TypeSchema) -> list[dict[str, str]]:
    return [{"tag": t.tag, "display_name": t.display_name, "description": t.description}
            for t in schema.types]
