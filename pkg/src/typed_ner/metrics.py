"""Entity-level evaluation: multiset matching, micro P/R/F1, threshold sweeps
and ablation tables."""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .backends import EncoderBackend, GeneratorBackend
from .codec import parse_exp, parse_mentions
from .errors import ConfigurationError
from .matching import DescriptionCache, filter_schema, score_types
from .prompts import build_filtered_prompt
from .types import EntityMention, TypeSchema

logger = logging.getLogger(__name__)

DEDUPE_POLICIES = ("multiset", "set")


def normalize_surface(surface: str) -> str:
    return " ".join(surface.split())


def _keys(mentions: Iterable[EntityMention], dedupe: str) -> Counter:
    keys = Counter((m.type_tag, normalize_surface(m.surface)) for m in mentions)
    if dedupe == "set":
        keys = Counter(dict.fromkeys(keys, 1))
    elif dedupe != "multiset":
        raise ConfigurationError(f"unknown dedupe policy {dedupe!r}")
    return keys


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    per_type: dict[str, list[int]] = field(default_factory=dict)
    parse_failures: int = 0

    def add(self, other: "MatchCounts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.parse_failures += other.parse_failures
        for tag, (tp, fp, fn) in other.per_type.items():
            row = self.per_type.setdefault(tag, [0, 0, 0])
            row[0] += tp
            row[1] += fp
            row[2] += fn

    def as_tuple(self) -> tuple[int, int, int]:
        return self.tp, self.fp, self.fn


def match_counts(gold: Sequence[EntityMention], pred: Sequence[EntityMention],
                 dedupe: str = "multiset") -> MatchCounts:
    """Compare (type, whitespace-normalised surface) multisets."""
    g, p = _keys(gold, dedupe), _keys(pred, dedupe)
    counts = MatchCounts()
    for tag in sorted({k[0] for k in g} | {k[0] for k in p}):
        g_t = Counter({k: v for k, v in g.items() if k[0] == tag})
        p_t = Counter({k: v for k, v in p.items() if k[0] == tag})
        tp = sum((g_t & p_t).values())
        row = [tp, sum(p_t.values()) - tp, sum(g_t.values()) - tp]
        counts.per_type[tag] = row
        counts.tp += row[0]
        counts.fp += row[1]
        counts.fn += row[2]
    return counts


def micro_prf(counts) -> tuple[float, float, float]:
    tp, fp, fn = counts.as_tuple() if isinstance(counts, MatchCounts) else counts
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    counts: MatchCounts
    n_examples: int
    fingerprint: str = ""
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        per_type = {}
        for tag, (tp, fp, fn) in sorted(self.counts.per_type.items()):
            p, r, f = micro_prf((tp, fp, fn))
            per_type[tag] = {"tp": tp, "fp": fp, "fn": fn, "precision": p, "recall": r, "f1": f}
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.counts.tp,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
            "parse_failures": self.counts.parse_failures,
            "n_examples": self.n_examples,
            "per_type": per_type,
            "fingerprint": self.fingerprint,
            "warnings": self.warnings,
        }

    def to_text(self) -> str:
        rows = [("type", "tp", "fp", "fn", "P", "R", "F1")]
        for tag, (tp, fp, fn) in sorted(self.counts.per_type.items()):
            p, r, f = micro_prf((tp, fp, fn))
            rows.append((tag, str(tp), str(fp), str(fn), f"{p:.4f}", f"{r:.4f}", f"{f:.4f}"))
        c = self.counts
        rows.append(("micro", str(c.tp), str(c.fp), str(c.fn), f"{self.precision:.4f}",
                     f"{self.recall:.4f}", f"{self.f1:.4f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in
                           enumerate(zip(row, widths))) for row in rows]
        lines.append(f"examples: {self.n_examples}  parse failures: {c.parse_failures}")
        return "\n".join(lines) + "\n"


def parse_prediction(text: str, schema: TypeSchema):
    if text.lstrip().startswith("Entity:"):
        return parse_exp(text, schema)
    return parse_mentions(text, schema)


def evaluate_dataset(split, predictions: Mapping[str, str], schema: TypeSchema | None = None,
                     dedupe: str = "multiset", fingerprint: str = "") -> EvalReport:
    """Score raw model outputs against the split's gold mentions.

    Unparseable outputs count as empty predictions; a missing prediction is
    also treated as empty, with a warning.
    """
    schema = schema or split.schema
    if dedupe not in DEDUPE_POLICIES:
        raise ConfigurationError(f"unknown dedupe policy {dedupe!r}")
    total = MatchCounts(per_type={tag: [0, 0, 0] for tag in schema.tags})
    warnings = []
    known = set()
    for ex in split.examples:
        known.add(ex.id)
        if ex.id not in predictions:
            warnings.append(f"no prediction for {ex.id}; scored as empty")
            pred = []
        else:
            outcome = parse_prediction(predictions[ex.id], schema)
            if outcome.malformed:
                total.parse_failures += 1
            pred = outcome.mentions
        total.add(match_counts(ex.mentions, pred, dedupe))
    extra = sorted(set(predictions) - known)
    if extra:
        warnings.append(f"{len(extra)} predictions have no gold example (e.g. {extra[0]})")
    for w in warnings:
        logger.warning(w)
    p, r, f = micro_prf(total)
    return EvalReport(p, r, f, total, len(split.examples), fingerprint, warnings)


@dataclass
class SweepRow:
    delta: float
    report: EvalReport
    retained_mean: float


def threshold_sweep(split, schema: TypeSchema, encoder: EncoderBackend,
                    generator: GeneratorBackend, grid: Sequence[float], max_length: int = 512,
                    dedupe: str = "multiset", rows: list | None = None) -> list[SweepRow]:
    """Score, filter, prompt, generate and evaluate once per threshold.

    Rows are appended to ``rows`` (if given) as they complete, so a caller
    keeps the finished thresholds when a later one fails.
    """
    rows = [] if rows is None else rows
    cache = DescriptionCache(encoder)
    scored = {ex.id: score_types(encoder, ex.sentence, schema, cache) for ex in split.examples}
    for delta in grid:
        predictions = {}
        retained = 0
        for ex in split.examples:
            fs = filter_schema(scored[ex.id], delta, schema)
            retained += len(fs.retained)
            prompt = build_filtered_prompt(schema, ex.sentence, fs)
            predictions[ex.id] = generator.generate(prompt, max_length)
        report = evaluate_dataset(split, predictions, schema, dedupe)
        mean = retained / len(split.examples) if split.examples else 0.0
        rows.append(SweepRow(float(delta), report, mean))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delta", "precision", "recall", "f1", "retained_mean"])
    for row in rows:
        r = row.report
        w.writerow([repr(row.delta), repr(r.precision), repr(r.recall), repr(r.f1),
                    repr(row.retained_mean)])
    return buf.getvalue()


@dataclass
class AblationRow:
    name: str
    f1: float
    delta_points: float | None
    delta_relative: float | None


def ablation_report(variants: Mapping[str, "EvalReport | float"],
                    scale: float = 100.0) -> list[AblationRow]:
    """Rows in insertion order, each compared with the row before it.

    ``delta_points`` is the plain difference of F1 on the percent scale;
    ``delta_relative`` is the relative change in percent. Variants may be
    reports or bare F1 values already on the percent scale.
    """
    if len(variants) < 2:
        raise ConfigurationError("an ablation table needs at least two variants")
    rows = []
    prev = None
    for name, value in variants.items():
        f1 = value.f1 * scale if isinstance(value, EvalReport) else float(value)
        if prev is None:
            rows.append(AblationRow(name, f1, None, None))
        else:
            rel = (f1 / prev - 1.0) * 100.0 if prev else None
            rows.append(AblationRow(name, f1, f1 - prev, rel))
        prev = f1
    return rows


def format_ablation(rows: Sequence[AblationRow]) -> str:
    width = max(len(r.name) for r in rows)
    out = [f"{'variant'.ljust(width)}  {'F1':>6}  {'delta pts':>9}  {'delta rel %':>11}"]
    for r in rows:
        dp = "" if r.delta_points is None else f"{r.delta_points:+.2f}"
        dr = "" if r.delta_relative is None else f"{r.delta_relative:+.2f}%"
        out.append(f"{r.name.ljust(width)}  {r.f1:6.2f}  {dp:>9}  {dr:>11}")
    return "\n".join(out) + "\n"
