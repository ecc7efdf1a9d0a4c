"""Instruction prompt templates and the fine-tuning sample record."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

from .errors import ConfigurationError
from .types import FilteredSchema, TypeSchema

NER_INSTRUCTION = "List all named entities of type "
TYPE_RECOGNITION_INSTRUCTION = "List all entity types in the text from type "
EXPLANATION_SUFFIX = " and give explanations."
TEXT_PREFIX = "Text: "
HINT_PREFIX = "Entities of type "
HINT_SUFFIX = " may exist in text."


class Task(str, Enum):
    NER = "NER"
    NER_FILTERED = "NER_FILTERED"
    TYPE_RECOGNITION = "TYPE_RECOGNITION"
    NER_EXP = "NER_EXP"

    @property
    def is_ner_family(self) -> bool:
        return self is not Task.TYPE_RECOGNITION


@dataclass(frozen=True)
class PromptSample:
    id: str
    task: Task
    prompt: str
    target: str
    meta: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        if not self.prompt or not self.target:
            raise ValueError(f"sample {self.id!r} has an empty prompt or target")

    def to_record(self) -> dict[str, str]:
        return {"id": self.id, "task": self.task.value, "prompt": self.prompt, "target": self.target}

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "PromptSample":
        return cls(record["id"], Task(record["task"]), record["prompt"], record["target"])


def render_type_list(names: Sequence[str]) -> str:
    return "[" + ", ".join(names) + "]"


def build_ner_prompt(schema: TypeSchema, sentence: str) -> str:
    return NER_INSTRUCTION + render_type_list(schema.display_names) + "\n" + TEXT_PREFIX + sentence


def hint_line(schema: TypeSchema, filtered: FilteredSchema) -> str:
    for tag in filtered.retained:
        if tag not in schema:
            raise ConfigurationError(f"filtered schema retains {tag!r}, which is not in the schema")
    if {s.type_tag for s in filtered.scores} - set(schema.tags):
        raise ConfigurationError("filtered schema was scored against a different schema")
    names = [schema.display_name(tag) for tag in filtered.retained]
    return HINT_PREFIX + render_type_list(names) + HINT_SUFFIX


def build_filtered_prompt(schema: TypeSchema, sentence: str, filtered: FilteredSchema) -> str:
    # the full schema stays on the first line; the hint only adds emphasis
    return build_ner_prompt(schema, sentence) + "\n" + hint_line(schema, filtered)


def build_type_recognition_prompt(schema: TypeSchema, sentence: str) -> str:
    return (TYPE_RECOGNITION_INSTRUCTION + render_type_list(schema.display_names)
            + "\n" + TEXT_PREFIX + sentence)


def build_exp_prompt(schema: TypeSchema, sentence: str,
                     filtered: FilteredSchema | None = None) -> str:
    prompt = (NER_INSTRUCTION + render_type_list(schema.display_names) + EXPLANATION_SUFFIX
              + "\n" + TEXT_PREFIX + sentence)
    if filtered is not None:
        prompt += "\n" + hint_line(schema, filtered)
    return prompt


def prompt_sentence(prompt: str) -> str | None:
    """Recover the sentence from a prompt built by this module."""
    for line in prompt.split("\n"):
        if line.startswith(TEXT_PREFIX):
            return line[len(TEXT_PREFIX):]
    return None


def prompt_hint_names(prompt: str) -> list[str] | None:
    """Display names on the ``Entities of type [...] may exist`` line, or None if absent."""
    for line in prompt.split("\n"):
        if line.startswith(HINT_PREFIX) and line.endswith(HINT_SUFFIX):
            inner = line[len(HINT_PREFIX):-len(HINT_SUFFIX)].strip()
            if not (inner.startswith("[") and inner.endswith("]")):
                return None
            inner = inner[1:-1]
            return [n.strip() for n in inner.split(",") if n.strip()]
    return None
