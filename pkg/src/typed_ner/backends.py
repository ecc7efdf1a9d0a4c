"""Backend contracts for learned computation, plus deterministic mock backends.

Real encoders/generators plug in by satisfying :class:`EncoderBackend` or
:class:`GeneratorBackend`. The mocks here are what the test suite and the
CLI's ``mock*`` registry entries use: token vectors come from a seeded hash,
and trainable parameters move by central finite differences with a
backtracking line search, so a step never increases the batch loss.

``apply_update`` takes a zero-argument callable that re-evaluates the batch
loss against the backend's *current* parameters. That closure is the
"provenance" of the loss: it lets a backend without autograd still take a
descent step.
"""

from __future__ import annotations

import hashlib
import logging
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .codec import DEFAULT_EXPLANATION, serialize_exp, serialize_mentions
from .errors import BackendError, ConfigurationError
from .prompts import EXPLANATION_SUFFIX, prompt_hint_names, prompt_sentence
from .types import ClassifierLogits, EntityMention, TokenLogProbs, TypeSchema

logger = logging.getLogger(__name__)

POOL_FULL = "full"
POOL_SENTENCE = "sentence_only"
POOLING_SCOPES = (POOL_FULL, POOL_SENTENCE)

BatchLoss = Callable[[], float]


@runtime_checkable
class EncoderBackend(Protocol):
    dim: int
    trainable: bool
    # bumped whenever parameters change; callers key caches on it
    version: int

    def encode(self, text: str) -> tuple[np.ndarray, np.ndarray]: ...

    def apply_update(self, batch_loss: BatchLoss) -> float: ...


@runtime_checkable
class GeneratorBackend(Protocol):
    schema: TypeSchema

    def generate(self, prompt: str, max_length: int) -> str: ...

    def teacher_forced_logprobs(self, prompt: str, target: str) -> TokenLogProbs: ...

    def pooled_rep(self, prompt: str, scope: str = POOL_FULL) -> np.ndarray: ...

    def type_logits(self, prompt: str, scope: str = POOL_FULL) -> ClassifierLogits: ...

    def apply_update(self, batch_loss: BatchLoss) -> float: ...


@lru_cache(maxsize=65536)
def _hashed_unit_vector(token: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}\x00{token}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    v.setflags(write=False)
    return v


def _bucket(token: str, n_buckets: int, seed: int) -> int:
    digest = hashlib.blake2b(f"b{seed}\x00{token}".encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little") % n_buckets


def tokenize(text: str) -> list[str]:
    return text.split()


def finite_difference_step(params: np.ndarray, set_params: Callable[[np.ndarray], None],
                           batch_loss: BatchLoss, lr: float, eps: float = 1e-5,
                           max_backtracks: int = 30) -> float:
    """One gradient step using a central-difference gradient of ``batch_loss``.

    The step length is halved until the loss decreases; if it never does the
    parameters are left untouched. Returns the loss after the step.
    """
    base = params.copy()
    set_params(base)
    start = float(batch_loss())
    grad = np.zeros_like(base)
    for i in range(base.size):
        probe = base.copy()
        probe.flat[i] += eps
        set_params(probe)
        up = float(batch_loss())
        probe.flat[i] -= 2 * eps
        set_params(probe)
        down = float(batch_loss())
        grad.flat[i] = (up - down) / (2 * eps)

    step = lr
    for _ in range(max_backtracks):
        candidate = base - step * grad
        set_params(candidate)
        loss = float(batch_loss())
        if loss < start:
            return loss
        step /= 2
    set_params(base)
    return start


class MockEncoder:
    """Hash-embedding encoder: one seeded unit vector per whitespace token.

    ``table`` maps whole texts to a fixed vector, returned as a single token
    state. It is the hook for constructing encoders with planted similarities.
    """

    trainable = False

    def __init__(self, dim: int = 32, seed: int = 0,
                 table: Mapping[str, Sequence[float]] | None = None):
        if dim < 1:
            raise ConfigurationError("encoder dimension must be positive")
        self.dim = dim
        self.seed = seed
        self.version = 0
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in (table or {}).items()}
        for text, vec in self.table.items():
            if vec.shape != (dim,):
                raise ConfigurationError(f"table vector for {text!r} has shape {vec.shape}")

    def encode(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        if text in self.table:
            states = self.table[text][None, :].copy()
        else:
            tokens = tokenize(text) or [""]
            states = np.stack([_hashed_unit_vector(t, self.dim, self.seed) for t in tokens])
        return states, np.ones(len(states), dtype=bool)

    def apply_update(self, batch_loss: BatchLoss) -> float:
        raise BackendError("MockEncoder is not trainable; wrap it in TrainableMockEncoder")


class TrainableMockEncoder:
    """Adds a learned bias vector to the token states of each type description."""

    trainable = True

    def __init__(self, base: MockEncoder, descriptions: Iterable[str], lr: float = 0.5,
                 eps: float = 1e-5):
        self.base = base
        self.dim = base.dim
        self.descriptions = tuple(dict.fromkeys(descriptions))
        self._row = {d: i for i, d in enumerate(self.descriptions)}
        self.bias = np.zeros((len(self.descriptions), self.dim))
        self.lr = lr
        self.eps = eps
        self.version = 0
        self.updates = 0

    def encode(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        states, mask = self.base.encode(text)
        row = self._row.get(text)
        if row is not None:
            states = states + self.bias[row]
        return states, mask

    def _set(self, flat: np.ndarray) -> None:
        self.bias = flat.reshape(self.bias.shape).copy()
        self.version += 1

    def apply_update(self, batch_loss: BatchLoss) -> float:
        loss = finite_difference_step(self.bias.ravel().copy(), self._set, batch_loss,
                                      self.lr, self.eps)
        self.updates += 1
        return loss

    def state(self) -> dict:
        return {"dim": self.dim, "seed": self.base.seed, "descriptions": list(self.descriptions),
                "bias": self.bias.tolist()}

    @classmethod
    def from_state(cls, state: Mapping, base: MockEncoder | None = None,
                   **kwargs) -> "TrainableMockEncoder":
        if base is None:
            base = MockEncoder(dim=int(state["dim"]), seed=int(state["seed"]))
        enc = cls(base, state["descriptions"], **kwargs)
        bias = np.asarray(state["bias"], dtype=np.float64)
        if bias.shape != enc.bias.shape:
            raise ConfigurationError("stored matcher state does not fit the encoder")
        enc.bias = bias
        return enc


class MockGenerator:
    """Deterministic stand-in for a seq2seq model with a type-classifier head.

    Generation modes:

    * ``echo``: return the gold target for the prompt's sentence.
    * ``fallback``: always ``[]``.
    * ``type_aware``: gold mentions restricted to the types on the prompt's
      ``Entities of type [...]`` line (all gold when the line is absent).
      With ``hallucinate=True`` it also invents one mention for every hinted
      type that has no gold mention, so over-permissive hints cost precision.

    Teacher-forced scoring uses ``log sigmoid(theta[bucket(prev, tok)])`` per
    target token; the head maps the pooled hash embedding to k logits. Both
    are trainable through :meth:`apply_update`.
    """

    MODES = ("echo", "fallback", "type_aware")

    def __init__(self, schema: TypeSchema, mode: str = "echo",
                 gold: Mapping[str, Sequence[EntityMention]] | None = None,
                 explanations: Mapping[str, str] | None = None,
                 strict: bool = False, hallucinate: bool = False,
                 dim: int = 8, n_buckets: int = 16, seed: int = 0,
                 lr: float = 0.5, eps: float = 1e-5):
        if mode not in self.MODES:
            raise ConfigurationError(f"unknown mock generator mode {mode!r}")
        self.schema = schema
        self.mode = mode
        self.gold = {s: tuple(ms) for s, ms in (gold or {}).items()}
        self.explanations = dict(explanations or {})
        self.strict = strict
        self.hallucinate = hallucinate
        self.dim = dim
        self.n_buckets = n_buckets
        self.seed = seed
        self.lr = lr
        self.eps = eps
        rng = np.random.default_rng(seed)
        self.token_logits = np.zeros(n_buckets)
        self.head_w = 0.1 * rng.standard_normal((schema.k, dim))
        self.head_b = np.zeros(schema.k)
        self.updates = 0
        # parameter-independent features, reused across finite-difference probes
        self._bucket_cache: dict[str, list[int]] = {}
        self._pooled_cache: dict[tuple[str, str], np.ndarray] = {}

    @classmethod
    def from_examples(cls, schema: TypeSchema, examples, mode: str = "echo", **kwargs) -> "MockGenerator":
        gold: dict[str, tuple[EntityMention, ...]] = {}
        explanations = {}
        for ex in examples:
            if ex.sentence in gold and gold[ex.sentence] != ex.mentions:
                logger.warning("sentence %r occurs with different annotations; keeping the first",
                               ex.sentence)
                continue
            gold[ex.sentence] = ex.mentions
            if ex.explanation:
                explanations[ex.sentence] = ex.explanation
        return cls(schema, mode=mode, gold=gold, explanations=explanations, **kwargs)

    # generation -----------------------------------------------------------

    def _lookup(self, sentence: str | None) -> tuple[EntityMention, ...] | None:
        if sentence is not None and sentence in self.gold:
            return self.gold[sentence]
        if self.strict:
            raise BackendError(f"echo generator has no target for sentence {sentence!r}")
        return None

    def generate(self, prompt: str, max_length: int = 512) -> str:
        if max_length < 1:
            raise ConfigurationError("max_length must be at least 1")
        sentence = prompt_sentence(prompt)
        if self.mode == "fallback":
            out = "[]"
        else:
            mentions = self._lookup(sentence)
            if mentions is None:
                out = "[]"
            else:
                if self.mode == "type_aware":
                    mentions = self._restrict(prompt, mentions, sentence)
                out = self._render(prompt, mentions, sentence)
        tokens = out.split(" ")
        if len(tokens) > max_length:
            out = " ".join(tokens[:max_length])
        return out

    def _restrict(self, prompt, mentions, sentence):
        names = prompt_hint_names(prompt)
        if names is None:
            return mentions
        hinted = [t for t in (self.schema.tag_for_name(n) for n in names) if t is not None]
        kept = [m for m in mentions if m.type_tag in hinted]
        if self.hallucinate:
            gold_types = {m.type_tag for m in mentions}
            filler = tokenize(sentence)[0] if sentence and tokenize(sentence) else "?"
            kept += [EntityMention(t, filler) for t in hinted if t not in gold_types]
        return kept

    def _render(self, prompt, mentions, sentence):
        first_line = prompt.split("\n", 1)[0]
        if first_line.endswith(EXPLANATION_SUFFIX):
            explanation = self.explanations.get(sentence) or DEFAULT_EXPLANATION
            return serialize_exp(mentions, explanation, self.schema)
        return serialize_mentions(mentions, self.schema)

    # scoring --------------------------------------------------------------

    def _token_buckets(self, target: str) -> list[int]:
        cached = self._bucket_cache.get(target)
        if cached is None:
            tokens = tokenize(target) or [target]
            prev = "<s>"
            cached = []
            for tok in tokens:
                cached.append(_bucket(prev + "\x00" + tok, self.n_buckets, self.seed))
                prev = tok
            self._bucket_cache[target] = cached
        return cached

    def teacher_forced_logprobs(self, prompt: str, target: str) -> TokenLogProbs:
        z = self.token_logits[self._token_buckets(target)]
        # log sigmoid(z) = -log(1 + e^{-z}), always <= 0
        return TokenLogProbs(tuple(-np.logaddexp(0.0, -z)))

    def pooled_rep(self, prompt: str, scope: str = POOL_FULL) -> np.ndarray:
        key = (prompt, scope)
        if key not in self._pooled_cache:
            self._pooled_cache[key] = self._pool(prompt, scope)
        return self._pooled_cache[key].copy()

    def _pool(self, prompt: str, scope: str) -> np.ndarray:
        if scope == POOL_FULL:
            text = prompt
        elif scope == POOL_SENTENCE:
            text = prompt_sentence(prompt)
            if text is None:
                raise BackendError("prompt has no 'Text:' line for sentence-only pooling")
        else:
            raise ConfigurationError(f"unknown pooling scope {scope!r}")
        tokens = tokenize(text) or [""]
        return np.mean([_hashed_unit_vector(t, self.dim, self.seed) for t in tokens], axis=0)

    def type_logits(self, prompt: str, scope: str = POOL_FULL) -> ClassifierLogits:
        h = self.pooled_rep(prompt, scope)
        return ClassifierLogits(tuple(self.head_w @ h + self.head_b))

    # training -------------------------------------------------------------

    def parameters(self) -> np.ndarray:
        return np.concatenate([self.token_logits, self.head_w.ravel(), self.head_b])

    def set_parameters(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        nb, nw = self.n_buckets, self.head_w.size
        if flat.size != nb + nw + self.head_b.size:
            raise ConfigurationError("parameter vector has the wrong size")
        self.token_logits = flat[:nb].copy()
        self.head_w = flat[nb:nb + nw].reshape(self.head_w.shape).copy()
        self.head_b = flat[nb + nw:].copy()

    def apply_update(self, batch_loss: BatchLoss) -> float:
        loss = finite_difference_step(self.parameters(), self.set_parameters, batch_loss,
                                      self.lr, self.eps)
        self.updates += 1
        return loss

    def state(self) -> dict:
        return {"dim": self.dim, "n_buckets": self.n_buckets, "seed": self.seed,
                "params": self.parameters().tolist()}

    def load_state(self, state: Mapping) -> None:
        if int(state["dim"]) != self.dim or int(state["n_buckets"]) != self.n_buckets:
            raise ConfigurationError("stored generator state does not fit this backend")
        self.set_parameters(np.asarray(state["params"], dtype=np.float64))


GENERATOR_REGISTRY = {
    "mock": "echo",
    "mock-echo": "echo",
    "mock-fallback": "fallback",
    "mock-type-aware": "type_aware",
}


def create_generator(name: str, schema: TypeSchema, examples=(), **params) -> MockGenerator:
    try:
        mode = GENERATOR_REGISTRY[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown backend {name!r}; available: {', '.join(sorted(GENERATOR_REGISTRY))}") from None
    return MockGenerator.from_examples(schema, examples, mode=mode, **params)

