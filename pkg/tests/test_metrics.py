import random

import pytest

from typed_ner.backends import MockGenerator
from typed_ner.codec import serialize_mentions
from typed_ner.errors import ConfigurationError
from typed_ner.ingest import CorpusSplit, read_bio_corpus
from typed_ner.metrics import (ablation_report, evaluate_dataset, format_ablation, match_counts,
                               micro_prf, sweep_csv, threshold_sweep)
from typed_ner.types import AnnotatedExample, EntityMention

from builders import planted_corpus
from oracles import brute_force_score, prf

M = EntityMention


def test_match_counts_examples():
    gold = [M("LOC", "China"), M("LOC", "Taiwan")]
    assert match_counts(gold, gold).as_tuple() == (2, 0, 0)
    assert match_counts(gold, [M("LOC", "China"), M("ORG", "China")]).as_tuple() == (1, 1, 1)
    assert match_counts([M("LOC", "New  York")], [M("LOC", "New York")]).as_tuple() == (1, 0, 0)


def test_multiset_versus_set():
    gold = [M("LOC", "China"), M("LOC", "China")]
    pred = [M("LOC", "China")]
    assert match_counts(gold, pred).as_tuple() == (1, 0, 1)
    assert match_counts(gold, pred, dedupe="set").as_tuple() == (1, 0, 0)
    with pytest.raises(ConfigurationError):
        match_counts(gold, pred, dedupe="bag")


def test_prf_values():
    assert micro_prf((2, 0, 0)) == (1.0, 1.0, 1.0)
    assert micro_prf((1, 1, 1)) == (0.5, 0.5, 0.5)
    assert micro_prf((0, 0, 0)) == (0.0, 0.0, 0.0)


def random_mentions(rng, schema):
    words = ["China", "Taiwan", "Bob", "EU", "New York", "Reuters"]
    return [M(rng.choice(schema.tags), rng.choice(words)) for _ in range(rng.randint(0, 5))]


def random_corpus(rng, schema, n):
    examples, predictions = [], {}
    for i in range(n):
        gold = random_mentions(rng, schema)
        if rng.random() < 0.3:
            pred = list(gold)
            rng.shuffle(pred)
        else:
            pred = random_mentions(rng, schema)
        examples.append(AnnotatedExample.build(f"r-{i}", f"sentence {i}", gold, schema))
        roll = rng.random()
        if roll < 0.05:
            predictions[f"r-{i}"] = "garbled output"
        elif roll < 0.9:
            predictions[f"r-{i}"] = serialize_mentions(pred, schema)
    return CorpusSplit("r", tuple(examples), schema), predictions


def oracle_view(split, predictions, schema):
    gold = {ex.id: [(m.type_tag, m.surface) for m in ex.mentions] for ex in split}
    pred = {}
    for ex in split:
        text = predictions.get(ex.id)
        if text is None or not text.startswith("["):
            continue
        # independent parse of the canonical form only
        body = text[1:-1]
        items = body[1:-1].split("), (") if body else []
        rev = {t.display_name: t.tag for t in schema.types}
        pred[ex.id] = [(rev[i.split(", ", 1)[0]], i.split(", ", 1)[1]) for i in items]
    return gold, pred


@pytest.mark.parametrize("dedupe", ["multiset", "set"])
def test_evaluate_matches_brute_force(schema, dedupe):
    rng = random.Random(17)
    for _ in range(150):
        split, predictions = random_corpus(rng, schema, rng.randint(1, 8))
        report = evaluate_dataset(split, predictions, schema, dedupe=dedupe)
        (tp, fp, fn), (p, r, f), per_type = brute_force_score(*oracle_view(split, predictions, schema), dedupe)
        assert report.counts.as_tuple() == (tp, fp, fn)
        assert abs(report.f1 - f) <= 1e-12 and abs(report.precision - p) <= 1e-12
        for tag, row in report.counts.per_type.items():
            assert row == [per_type[(tag, "tp")], per_type[(tag, "fp")], per_type[(tag, "fn")]]


def test_swap_gold_and_pred():
    rng = random.Random(4)
    tags = ["LOC", "PER"]
    for _ in range(100):
        a = [M(rng.choice(tags), rng.choice("xyz")) for _ in range(rng.randint(0, 5))]
        b = [M(rng.choice(tags), rng.choice("xyz")) for _ in range(rng.randint(0, 5))]
        tp, fp, fn = match_counts(a, b).as_tuple()
        assert match_counts(b, a).as_tuple() == (tp, fn, fp)
        for v in micro_prf((tp, fp, fn)):
            assert 0.0 <= v <= 1.0


def test_echo_predictions_score_one(data_dir, schema):
    split = read_bio_corpus(data_dir / "test.conll", schema, column_index=3)
    predictions = {ex.id: serialize_mentions(ex.mentions, schema) for ex in split}
    report = evaluate_dataset(split, predictions)
    assert report.f1 == 1.0 and report.counts.parse_failures == 0
    assert len(split) == 50


def test_empty_predictions_score_zero(data_dir, schema):
    split = read_bio_corpus(data_dir / "test.conll", schema, column_index=3)
    report = evaluate_dataset(split, {ex.id: "[]" for ex in split})
    assert (report.precision, report.recall, report.f1) == (0.0, 0.0, 0.0)


def test_missing_and_extra_predictions_warn(schema):
    split = CorpusSplit("s", (AnnotatedExample.build("s-0", "China", [M("LOC", "China")], schema),), schema)
    report = evaluate_dataset(split, {"zzz": "[]"})
    assert report.counts.as_tuple() == (0, 0, 1)
    assert len(report.warnings) == 2
    assert "parse failures: 0" in report.to_text()
    assert report.to_json()["fn"] == 1


def planted_split(schema, n=60):
    enc, pairs = planted_corpus(schema, n=n)
    examples = tuple(AnnotatedExample.build(f"p-{i}", p.sentence, [M(t, "sentence") for t in sorted(p.positive)],
                                            schema) for i, p in enumerate(pairs))
    return enc, CorpusSplit("p", examples, schema)


def test_sweep_rises_then_plateaus(schema):
    enc, split = planted_split(schema)
    gen = MockGenerator.from_examples(schema, split, mode="type_aware", hallucinate=True)
    grid = [-1.0, 0.0, 0.2, 0.4, 0.6, 0.8]
    rows = threshold_sweep(split, schema, enc, gen, grid)
    f1 = [r.report.f1 for r in rows]
    assert all(b >= a for a, b in zip(f1, f1[1:]))
    assert f1[0] < 1.0 and f1[-1] == 1.0 and f1[2:] == [1.0] * 4
    assert rows[0].retained_mean == schema.k
    assert [r.retained_mean for r in rows][2:] == [len([e for e in split if e.mentions]) / len(split)] * 4
    text = sweep_csv(rows)
    assert text.splitlines()[0] == "delta,precision,recall,f1,retained_mean"
    assert len(text.splitlines()) == len(grid) + 1


def test_sweep_independent_of_hint_when_generator_ignores_it(schema):
    enc, split = planted_split(schema, n=20)
    gen = MockGenerator.from_examples(schema, split, mode="echo")
    rows = threshold_sweep(split, schema, enc, gen, [-1.0, 0.3, 0.95])
    assert len({(r.report.counts.as_tuple(), r.report.f1) for r in rows}) == 1
    base = evaluate_dataset(split, {ex.id: serialize_mentions(ex.mentions, schema) for ex in split})
    assert rows[0].report.f1 == base.f1


def test_sweep_keeps_partial_rows(schema):
    enc, split = planted_split(schema, n=10)
    gen = MockGenerator.from_examples(schema, split, mode="echo")
    rows = []
    with pytest.raises(ConfigurationError):
        threshold_sweep(split, schema, enc, gen, [0.1, 0.2, 5.0], rows=rows)
    assert [r.delta for r in rows] == [0.1, 0.2]


def test_ablation_deltas():
    rows = ablation_report({"base": 87.11, "+matcher": 91.18})
    assert rows[1].delta_points == pytest.approx(4.07, abs=1e-9)
    assert rows[1].delta_relative == pytest.approx(4.67, abs=5e-3)
    same = ablation_report({"a": 90.0, "b": 90.0})
    assert same[1].delta_points == 0.0 and same[1].delta_relative == 0.0
    table = format_ablation(rows)
    assert "+4.07" in table and "+4.67%" in table
    with pytest.raises(ConfigurationError):
        ablation_report({"only": 1.0})


def test_ablation_from_reports(schema):
    split = CorpusSplit("s", (AnnotatedExample.build("s-0", "China", [M("LOC", "China")], schema),), schema)
    good = evaluate_dataset(split, {"s-0": "[(location, China)]"})
    bad = evaluate_dataset(split, {"s-0": "[]"})
    rows = ablation_report({"bad": bad, "good": good})
    assert rows[1].delta_points == 100.0 and rows[1].delta_relative is None
    assert prf(1, 0, 0) == (1.0, 1.0, 1.0)
