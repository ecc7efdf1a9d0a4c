import random

import pytest
from hypothesis import given, strategies as st

from typed_ner.errors import SchemaMismatchError
from typed_ner.types import (AnnotatedExample, ClassifierLogits, EntityMention, EntityType,
                             FilteredSchema, MatchScore, TokenLogProbs, TypeSchema,
                             derive_type_sets, load_schema, schema_to_records)


def test_fig1_type_sets(schema):
    mentions = [EntityMention("LOC", "China"), EntityMention("LOC", "Taiwan")]
    pos, neg = derive_type_sets(mentions, schema)
    assert pos == {"LOC"}
    assert neg == {"PER", "ORG", "MISC"}


def test_empty_mentions():
    schema = TypeSchema((EntityType("LOC", "location", "location: Names that are locations."),))
    assert derive_type_sets([], schema) == (frozenset(), frozenset({"LOC"}))


def test_unknown_tag_is_named(schema):
    with pytest.raises(SchemaMismatchError, match="GPE"):
        derive_type_sets([EntityMention("GPE", "France")], schema)


def test_random_mentions_match_brute_force(seven_schema):
    rng = random.Random(3)
    tags = list(seven_schema.tags)
    for _ in range(300):
        mentions = [EntityMention(rng.choice(tags), f"w{rng.randint(0, 9)}")
                    for _ in range(rng.randint(0, 6))]
        present = set()
        for m in mentions:
            present.add(m.type_tag)
        absent = {t for t in tags if t not in present}
        assert derive_type_sets(mentions, seven_schema) == (present, absent)


@given(st.lists(st.tuples(st.sampled_from(["LOC", "PER", "ORG", "MISC"]),
                          st.text(min_size=1).filter(str.strip))))
def test_partition_idempotent_and_order_free(schema, pairs):
    mentions = [EntityMention(t, s) for t, s in pairs]
    pos, neg = derive_type_sets(mentions, schema)
    assert pos | neg == set(schema.tags) and not pos & neg
    assert derive_type_sets(list(reversed(mentions)), schema) == (pos, neg)
    assert derive_type_sets(mentions + mentions, schema) == (pos, neg)


def test_schema_invariants():
    loc = EntityType("LOC", "location", "d")
    with pytest.raises(ValueError):
        TypeSchema(())
    with pytest.raises(ValueError):
        TypeSchema((loc, EntityType("LOC", "place", "d")))
    with pytest.raises(ValueError):
        TypeSchema((loc, EntityType("GPE", "Location", "d")))
    for bad in ("a,b", "a[b", "two\nlines", ""):
        with pytest.raises(ValueError):
            EntityType("X", bad, "d")


def test_schema_order_defines_index(schema):
    assert schema.tags == ("LOC", "PER", "ORG", "MISC")
    assert schema.index("ORG") == 2
    assert schema.k == 4
    assert schema.tag_for_name("  Organization ") == "ORG"


def test_example_invariants(schema):
    ex = AnnotatedExample.build("x", "China and China", [EntityMention("LOC", "China")] * 2, schema)
    assert len(ex.mentions) == 2  # multiplicity preserved
    with pytest.raises(ValueError):
        AnnotatedExample("y", "text", (EntityMention("LOC", "a"),), frozenset(), frozenset({"LOC"}))
    with pytest.raises(ValueError):
        AnnotatedExample.build("z", "  ", [], schema)


def test_value_object_checks():
    with pytest.raises(ValueError):
        MatchScore("LOC", 1.5)
    MatchScore("LOC", 1.0 + 5e-7)
    with pytest.raises(ValueError):
        TokenLogProbs((-1.0, 0.1))
    with pytest.raises(ValueError):
        TokenLogProbs(())
    with pytest.raises(ValueError):
        ClassifierLogits((0.0, float("nan")))
    with pytest.raises(ValueError):
        FilteredSchema(("LOC",), 0.5, (MatchScore("LOC", 0.5),))
    with pytest.raises(ValueError):
        EntityMention("LOC", "   ")


def test_schema_file_round_trip(tmp_path, schema):
    import json
    path = tmp_path / "schema.json"
    path.write_text(json.dumps(schema_to_records(schema)))
    assert load_schema(path) == schema
