"""Constructions shared by several test modules."""

import math
import random

import numpy as np

from typed_ner.backends import MockEncoder
from typed_ner.cli import main
from typed_ner.matching import MatchingPair

# a^2 and c^2 are the roots of z^2 - 0.37 z + 0.01, so that a*c = 0.1 and
# sqrt(1-a^2) * sqrt(1-c^2) = 0.8. With unit-norm descriptions d_t = a*u + b*e_t
# and sentences v = c*u + s*e_t, cos(v, d_t) = 0.9 and cos(v, d_other) = 0.1.
_ROOT = math.sqrt(0.37 ** 2 - 0.04)
A = math.sqrt((0.37 + _ROOT) / 2)
C = math.sqrt((0.37 - _ROOT) / 2)
B = math.sqrt(1 - A * A)
S = math.sqrt(1 - C * C)


def planted_corpus(schema, n=60, jitter=0.02, seed=0, dim=16):
    """Mock encoder plus dev pairs with positive scores near 0.9, negatives near 0.1.

    Each sentence carries at most one gold type. Sentences without types point
    along a direction orthogonal to every type axis.
    """
    k = schema.k
    if dim < k + 3:
        raise ValueError("dimension too small for the planted layout")
    rng = random.Random(seed)
    basis = np.eye(dim)
    u, empty_axis = basis[0], basis[k + 1]
    table = {}
    for i, t in enumerate(schema.types):
        table[t.description] = A * u + B * basis[1 + i]
    pairs = []
    for j in range(n):
        sentence = f"planted sentence {j}"
        slot = j % (k + 1)
        axis = empty_axis if slot == k else basis[1 + slot]
        noise = np.zeros(dim)
        noise[k + 2:] = [rng.gauss(0.0, jitter) for _ in range(dim - k - 2)]
        table[sentence] = C * (1 + rng.uniform(-jitter, jitter)) * u + S * axis + noise
        positive = frozenset() if slot == k else frozenset({schema.tags[slot]})
        pairs.append(MatchingPair(sentence, positive, frozenset(schema.tags) - positive))
    return MockEncoder(dim=dim, table=table), pairs


PIPELINE = ("ingest", "train-matcher", "calibrate", "build-dataset", "train", "predict", "eval", "sweep")


def run_pipeline(workdir, commands=PIPELINE, config="toy.cfg"):
    """Run CLI commands in order; return the exit code of each."""
    return [main([cmd, "--config", str(workdir / config)]) for cmd in commands]


def set_options(path, **options):
    """Rewrite ``key = value`` lines of a flat config file, appending new keys."""
    lines = path.read_text().splitlines()
    pending = {k.rstrip("_"): v for k, v in options.items()}
    out = []
    for line in lines:
        key = line.split("=", 1)[0].strip()
        if "=" in line and key in pending:
            out.append(f"{key} = {pending.pop(key)}")
        else:
            out.append(line)
    out += [f"{k} = {v}" for k, v in pending.items()]
    path.write_text("\n".join(out) + "\n")


def artifacts(out_dir):
    """Relative path -> bytes for every file under ``out_dir``."""
    return {str(p.relative_to(out_dir)): p.read_bytes() for p in sorted(out_dir.rglob("*")) if p.is_file()}
