"""Contract tests every backend must pass, run here against the mocks."""

import numpy as np
import pytest

from typed_ner.backends import (POOL_FULL, POOL_SENTENCE, EncoderBackend, GeneratorBackend,
                                MockEncoder, MockGenerator, TrainableMockEncoder, create_generator)
from typed_ner.codec import parse_exp
from typed_ner.errors import BackendError, ConfigurationError
from typed_ner.matching import embed, filter_schema, match_score
from typed_ner.objectives import classification_loss, generation_loss
from typed_ner.prompts import build_exp_prompt, build_filtered_prompt, build_ner_prompt
from typed_ner.types import EntityMention, MatchScore

from conftest import FIG1_SENTENCE, WELLINGTON_EXPLANATION, WELLINGTON_SENTENCE


def encoder_contract(enc):
    assert isinstance(enc, EncoderBackend)
    s1, m1 = enc.encode("Reuters reported talks")
    s2, m2 = enc.encode("Reuters reported talks")
    assert np.array_equal(s1, s2) and np.array_equal(m1, m2)
    assert s1.ndim == 2 and m1.shape == (s1.shape[0],) and s1.shape[1] == enc.dim


def generator_contract(gen, schema):
    assert isinstance(gen, GeneratorBackend)
    prompt = build_ner_prompt(schema, FIG1_SENTENCE)
    assert gen.generate(prompt, 512) == gen.generate(prompt, 512)
    assert len(gen.generate(prompt, 2).split(" ")) <= 2
    lp = gen.teacher_forced_logprobs(prompt, "[(location, China)]")
    assert all(v <= 0.0 for v in lp.values)
    assert len(gen.type_logits(prompt)) == schema.k
    assert gen.pooled_rep(prompt).shape == gen.pooled_rep(prompt, POOL_SENTENCE).shape


@pytest.fixture
def echo(schema, fig1_example):
    return MockGenerator.from_examples(schema, [fig1_example])


def test_encoder_contracts(schema):
    encoder_contract(MockEncoder(dim=12))
    encoder_contract(TrainableMockEncoder(MockEncoder(dim=12), [t.description for t in schema.types]))


def test_generator_contracts(schema, echo):
    for mode in MockGenerator.MODES:
        generator_contract(MockGenerator(schema, mode=mode, gold=echo.gold), schema)


def test_token_order_and_identity():
    enc = MockEncoder(dim=10)
    a, _ = enc.encode("a b")
    b, _ = enc.encode("b a")
    assert np.array_equal(a[::-1], b)
    assert match_score(embed(enc, "x y z"), embed(enc, "x y z")) == pytest.approx(1.0, abs=1e-12)


def test_echo_and_fallback(schema, echo):
    prompt = build_ner_prompt(schema, FIG1_SENTENCE)
    assert echo.generate(prompt) == "[(location, China), (location, Taiwan)]"
    assert MockGenerator(schema, mode="fallback", gold=echo.gold).generate(prompt) == "[]"
    assert echo.generate(build_ner_prompt(schema, "unseen text")) == "[]"
    strict = MockGenerator(schema, gold=echo.gold, strict=True)
    with pytest.raises(BackendError):
        strict.generate(build_ner_prompt(schema, "unseen text"))


def test_type_aware_follows_hint(schema, echo):
    gen = MockGenerator(schema, mode="type_aware", gold=echo.gold)
    keep_loc = filter_schema([MatchScore("LOC", 0.9)] + [MatchScore(t, 0.0) for t in ("PER", "ORG", "MISC")],
                             0.8, schema)
    assert gen.generate(build_filtered_prompt(schema, FIG1_SENTENCE, keep_loc)) == \
        "[(location, China), (location, Taiwan)]"
    none = filter_schema([MatchScore(t, 0.0) for t in schema.tags], 0.8, schema)
    assert gen.generate(build_filtered_prompt(schema, FIG1_SENTENCE, none)) == "[]"
    loose = MockGenerator(schema, mode="type_aware", gold=echo.gold, hallucinate=True)
    everything = filter_schema([MatchScore(t, 0.9) for t in schema.tags], 0.0, schema)
    out = loose.generate(build_filtered_prompt(schema, FIG1_SENTENCE, everything))
    assert "(person, China)" in out and out.count("(") == 5


def test_exp_prompt_output(schema):
    gen = MockGenerator(schema, gold={WELLINGTON_SENTENCE: (EntityMention("LOC", "Wellington"),)},
                        explanations={WELLINGTON_SENTENCE: WELLINGTON_EXPLANATION})
    out = parse_exp(gen.generate(build_exp_prompt(schema, WELLINGTON_SENTENCE)), schema)
    assert out.mentions == [EntityMention("LOC", "Wellington")]
    assert out.explanation == WELLINGTON_EXPLANATION


def test_max_length_validation(schema, echo):
    with pytest.raises(ConfigurationError):
        echo.generate(build_ner_prompt(schema, FIG1_SENTENCE), 0)


def test_pooling_scopes(schema, echo):
    prompt = build_ner_prompt(schema, FIG1_SENTENCE)
    assert not np.array_equal(echo.pooled_rep(prompt, POOL_FULL), echo.pooled_rep(prompt, POOL_SENTENCE))
    with pytest.raises(ConfigurationError):
        echo.pooled_rep(prompt, "tokens")
    with pytest.raises(BackendError):
        echo.pooled_rep("no text line", POOL_SENTENCE)


def test_registry(schema, fig1_example):
    assert create_generator("mock-fallback", schema, [fig1_example]).mode == "fallback"
    with pytest.raises(ConfigurationError, match="mock-echo"):
        create_generator("flan-t5", schema)
    with pytest.raises(BackendError):
        MockEncoder().apply_update(lambda: 0.0)


def test_generator_update_descends_and_round_trips(schema, echo):
    prompt = build_ner_prompt(schema, FIG1_SENTENCE)
    target = "[(location, China), (location, Taiwan)]"

    def loss():
        return (generation_loss(echo.teacher_forced_logprobs(prompt, target))
                + 0.1 * classification_loss(echo.type_logits(prompt), {"LOC"}, {"PER", "ORG", "MISC"}, schema))

    before = echo.state()
    start = loss()
    after = echo.apply_update(loss)
    assert after < start and after == loss()
    fresh = MockGenerator(schema, gold=echo.gold)
    assert fresh.state() == before
    fresh.load_state(echo.state())
    assert fresh.state() == echo.state()
    with pytest.raises(ConfigurationError):
        MockGenerator(schema, dim=4).load_state(echo.state())


def test_zero_updates_is_base(schema):
    base = MockEncoder(dim=8)
    enc = TrainableMockEncoder(base, [t.description for t in schema.types])
    for text in ("China", schema.get("LOC").description):
        assert np.array_equal(enc.encode(text)[0], base.encode(text)[0])


def test_trainable_encoder_state_round_trip(schema):
    enc = TrainableMockEncoder(MockEncoder(dim=8, seed=2), [t.description for t in schema.types])
    enc._set(np.arange(enc.bias.size, dtype=float))
    again = TrainableMockEncoder.from_state(enc.state())
    assert np.array_equal(again.bias, enc.bias) and again.descriptions == enc.descriptions
