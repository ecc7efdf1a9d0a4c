import shutil
from pathlib import Path

import pytest

from typed_ner.types import AnnotatedExample, EntityMention, EntityType, TypeSchema, conll2003_schema

DATA = Path(__file__).parent / "data"

FIG1_SENTENCE = "China says time right for Taiwan talks ."
WELLINGTON_SENTENCE = "-- Wellington newsroom 64 4 4734 746"
WELLINGTON_EXPLANATION = ("'Wellington' is labeled as 'location' because it refers to a specific "
                          "location, which is the capital city of New Zealand.")
BANK_SENTENCE = ("The bank said there were concerns fiscal consolidation would unduly restrict "
                 "growth, but evidence was ambiguous.")


@pytest.fixture(scope="session")
def schema():
    return conll2003_schema()


@pytest.fixture(scope="session")
def seven_schema():
    names = ["location", "person", "organization", "miscellaneous", "date", "money", "event"]
    return TypeSchema(tuple(EntityType(n[:3].upper() + str(i), n, f"{n}: things of kind {n}.")
                            for i, n in enumerate(names)))


@pytest.fixture
def fig1_example(schema):
    mentions = [EntityMention("LOC", "China"), EntityMention("LOC", "Taiwan")]
    return AnnotatedExample.build("fig1", FIG1_SENTENCE, mentions, schema)


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def toy_run(tmp_path):
    """Copy of the toy corpus and config in a scratch directory."""
    for name in ("train.conll", "dev.conll", "test.conll", "toy.cfg"):
        shutil.copy(DATA / name, tmp_path / name)
    return tmp_path


# one "PASS/FAIL" line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
