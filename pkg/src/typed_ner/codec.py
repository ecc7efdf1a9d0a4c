"""Serializer and tolerant parser for the generated entity-list grammar.

Plain output::

    [(location, China), (location, Taiwan)]

Explanation-augmented output::

    Entity: [(location, Wellington)]
    Explanation: 'Wellington' is labeled as 'location' because ...

Model text goes in as display names and comes out as schema tags.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from .errors import CodecError, SchemaMismatchError
from .types import EntityMention, TypeSchema

ENTITY_MARKER = "Entity:"
EXPLANATION_MARKER = "Explanation:"
DEFAULT_EXPLANATION = "No entity in the text belongs to any pre-defined entity type."

# separator between items; the serializer always writes "), (" but model
# output frequently drops or adds spaces
_ITEM_SPLIT = re.compile(r"\)\s*,\s*\(")


@dataclass
class ParseOutcome:
    mentions: list[EntityMention] = field(default_factory=list)
    explanation: str | None = None
    warnings: list[str] = field(default_factory=list)
    malformed: bool = False


def is_serializable_surface(surface: str) -> bool:
    """True if ``surface`` survives a serialize/parse round trip unchanged."""
    return (bool(surface.strip())
            and surface == surface.strip()
            and "\n" not in surface
            and _ITEM_SPLIT.search(surface) is None)


def serialize_mentions(mentions: Sequence[EntityMention], schema: TypeSchema) -> str:
    parts = []
    for m in mentions:
        if m.type_tag not in schema:
            raise SchemaMismatchError(m.type_tag)
        if not is_serializable_surface(m.surface):
            raise CodecError(f"surface {m.surface!r} cannot be represented in the output grammar")
        parts.append(f"({schema.display_name(m.type_tag)}, {m.surface})")
    return "[" + ", ".join(parts) + "]"


def serialize_exp(mentions: Sequence[EntityMention], explanation: str, schema: TypeSchema) -> str:
    if not explanation or not explanation.strip():
        raise CodecError("explanation must be nonempty")
    return f"{ENTITY_MARKER} {serialize_mentions(mentions, schema)}\n{EXPLANATION_MARKER} {explanation}"


def _parse_items(body: str, schema: TypeSchema, outcome: ParseOutcome) -> None:
    body = body.strip()
    if not body:
        return
    if not (body.startswith("(") and body.endswith(")")):
        outcome.warnings.append("item list is not enclosed in parentheses")
        body = body.strip("()")
    else:
        body = body[1:-1]
    for raw in _ITEM_SPLIT.split(body):
        name, sep, surface = raw.partition(",")
        if not sep:
            outcome.warnings.append(f"dropped item without separator: {raw!r}")
            continue
        tag = schema.tag_for_name(name)
        if tag is None:
            outcome.warnings.append(f"dropped item with unknown type {name.strip()!r}")
            continue
        surface = surface.strip()
        if not surface:
            outcome.warnings.append(f"dropped item with empty surface for type {name.strip()!r}")
            continue
        outcome.mentions.append(EntityMention(tag, surface))


def parse_mentions(text: str, schema: TypeSchema) -> ParseOutcome:
    """Parse a bracketed (type, surface) list. Never raises on content."""
    outcome = ParseOutcome()
    stripped = text.strip()
    if stripped.startswith("[") and stripped.endswith("]"):
        _parse_items(stripped[1:-1], schema, outcome)
        return outcome

    # recovery: salvage a parenthesised item run from the text
    start, end = stripped.find("("), stripped.rfind(")")
    if start == -1 or end <= start:
        outcome.malformed = True
        outcome.warnings.append("output does not follow the entity list grammar")
        return outcome
    outcome.warnings.append("missing enclosing brackets; recovered parenthesised items")
    _parse_items(stripped[start:end + 1], schema, outcome)
    if not outcome.mentions:
        outcome.malformed = True
    return outcome


def parse_exp(text: str, schema: TypeSchema) -> ParseOutcome:
    """Parse the Entity/Explanation two-part output.

    The first line starting with ``Entity:`` supplies the mention list; the
    text after the first ``Explanation:`` marker that follows it is the
    explanation. Without an entity line the whole text goes to
    :func:`parse_mentions`.
    """
    # split on "\n" only; str.splitlines also breaks on form feeds and the like
    lines = [line + "\n" for line in text.split("\n")]
    lines[-1] = lines[-1][:-1]
    offset = 0
    entity_line = None
    for line in lines:
        if line.lstrip().startswith(ENTITY_MARKER):
            entity_line = line
            break
        offset += len(line)

    if entity_line is None:
        outcome = parse_mentions(text, schema)
        outcome.warnings.insert(0, f"no {ENTITY_MARKER!r} line; parsed whole output as a mention list")
        return outcome

    remainder = entity_line.lstrip()[len(ENTITY_MARKER):]
    outcome = parse_mentions(remainder, schema)
    tail = text[offset + len(entity_line):]
    pos = tail.find(EXPLANATION_MARKER)
    if pos == -1:
        outcome.warnings.append(f"no {EXPLANATION_MARKER!r} marker")
    else:
        explanation = tail[pos + len(EXPLANATION_MARKER):]
        if explanation.startswith(" "):
            explanation = explanation[1:]
        outcome.explanation = explanation
    return outcome
