"""Command line entry point: ``typed-ner <command> --config <path>``.

Commands share one output directory::

    samples/<split>.jsonl       ingest
    ingest_stats.json           ingest
    matcher_state.json           train-matcher
    matcher_trace.csv           train-matcher
    calibration.json            calibrate
    dataset.jsonl               build-dataset
    dataset_manifest.json       build-dataset
    generator_state.json         train
    train_trace.csv             train
    predictions/<split>.jsonl   predict
    eval/<split>.json|.txt      eval
    sweep.csv                   sweep

Exit status: 0 success, 1 validation failure, 2 I/O or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import random
import sys
import tempfile
from collections import Counter
from pathlib import Path

from . import ingest
from .backends import MockEncoder, TrainableMockEncoder, create_generator
from .codec import parse_exp, parse_mentions
from .config import RunConfig, load_config
from .errors import (BackendError, ConfigurationError, CorpusParseError,
                     ReferentialIntegrityError, SchemaMismatchError, TypedNerError)
from .matching import (DescriptionCache, calibrate_threshold, filter_schema, score_types,
                       train_matcher)
from .metrics import evaluate_dataset, sweep_csv, threshold_sweep
from .objectives import classification_loss, combined_loss, generation_loss
from .prompts import PromptSample, Task, build_filtered_prompt, build_ner_prompt
from .types import TypeSchema, conll2003_schema, load_schema

logger = logging.getLogger("typed_ner")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


# helpers ------------------------------------------------------------------

def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


def read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def jsonl(records) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)


def load_run_schema(config: RunConfig) -> TypeSchema:
    return load_schema(config.path(config.schema)) if config.schema else conll2003_schema()


def load_split(config: RunConfig, name: str, schema: TypeSchema) -> ingest.CorpusSplit:
    path = config.split_path(name)
    if path is None:
        raise ConfigurationError(f"no corpus configured for split {name!r}")
    if not path.is_file():
        raise FileNotFoundError(f"corpus file not found: {path}")
    return ingest.read_bio_corpus(path, schema, config.column_index, name, config.strict_bio)


def matcher_state_path(config: RunConfig) -> Path:
    return config.out / "matcher_state.json"


def load_encoder(config: RunConfig, schema: TypeSchema, trainable: bool = False):
    if config.encoder_backend != "mock":
        raise ConfigurationError(f"unknown encoder backend {config.encoder_backend!r}")
    base = MockEncoder(dim=config.encoder_dim, seed=config.seed)
    state = matcher_state_path(config)
    if state.exists():
        return TrainableMockEncoder.from_state(read_json(state), base, lr=config.mock_step_size)
    if trainable:
        return TrainableMockEncoder(base, [t.description for t in schema.types],
                                    lr=config.mock_step_size)
    return base


def active_delta(config: RunConfig) -> float:
    path = config.out / "calibration.json"
    if path.exists():
        return float(read_json(path)["chosen_delta"])
    return config.delta


def make_generator(config: RunConfig, schema: TypeSchema, examples=()):
    return create_generator(config.backend, schema, examples, strict=config.strict_echo,
                            hallucinate=config.hallucinate, dim=config.generator_dim,
                            n_buckets=config.generator_buckets, seed=config.seed,
                            lr=config.mock_step_size)


def filtered_for(split, schema, encoder, delta):
    cache = DescriptionCache(encoder)
    return {ex.id: filter_schema(score_types(encoder, ex.sentence, schema, cache), delta, schema)
            for ex in split.examples}


def sample_type_sets(sample: PromptSample, schema: TypeSchema):
    """Gold (positive, negative) type sets recovered from a sample's target."""
    if sample.task is Task.TYPE_RECOGNITION:
        inner = sample.target.strip()[1:-1]
        tags = {schema.tag_for_name(n) for n in inner.split(",") if n.strip()}
        if None in tags:
            raise SchemaMismatchError(inner, source=f"sample {sample.id}")
    else:
        parse = parse_exp if sample.task is Task.NER_EXP else parse_mentions
        outcome = parse(sample.target, schema)
        if outcome.malformed or outcome.warnings:
            raise ConfigurationError(f"target of sample {sample.id} does not parse cleanly")
        tags = {m.type_tag for m in outcome.mentions}
    return frozenset(tags), frozenset(t for t in schema.tags if t not in tags)


# commands -----------------------------------------------------------------

def cmd_ingest(config: RunConfig, args) -> int:
    schema = load_run_schema(config)
    splits = [load_split(config, name, schema) for name in ingest.SPLIT_NAMES
              if config.split_path(name) is not None]
    if not splits:
        raise ConfigurationError("no corpus paths configured")
    # build every output before writing any, so a failure leaves nothing behind
    outputs = {split.name: jsonl(s.to_record() for s in ingest.build_ner_samples(split))
               for split in splits}
    stats = {split.name: ingest.corpus_statistics(split) for split in splits}
    for name, text in outputs.items():
        write_atomic(config.out / "samples" / f"{name}.jsonl", text)
    write_atomic(config.out / "ingest_stats.json", dump_json(stats))
    for name, st in stats.items():
        print(f"{name}: {st['examples']} examples, {st['mentions']} mentions, "
              f"{st['empty_positive_types']} without entities")
    return EXIT_OK


def cmd_train_matcher(config: RunConfig, args) -> int:
    schema = load_run_schema(config)
    split = load_split(config, "train", schema)
    base = MockEncoder(dim=config.encoder_dim, seed=config.seed)
    encoder = TrainableMockEncoder(base, [t.description for t in schema.types],
                                   lr=config.mock_step_size)
    trace = train_matcher(encoder, ingest.build_matching_pairs(split), schema, config.tau,
                          config.matcher_epochs, config.matcher_batch_size, config.seed)
    write_atomic(matcher_state_path(config), dump_json(encoder.state()))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "mean_loss"])
    for i, loss in enumerate(trace.epoch_loss, start=1):
        w.writerow([i, repr(loss)])
    write_atomic(config.out / "matcher_trace.csv", buf.getvalue())
    print(f"trained matcher for {len(trace.epoch_loss)} epochs")
    return EXIT_OK


def cmd_calibrate(config: RunConfig, args) -> int:
    schema = load_run_schema(config)
    name = args.split or ("dev" if config.dev else "train")
    split = load_split(config, name, schema)
    encoder = load_encoder(config, schema)
    grid = args.grid if args.grid else list(config.calibration_grid)
    report = calibrate_threshold(ingest.build_matching_pairs(split), encoder, schema, grid)
    write_atomic(config.out / "calibration.json", dump_json(report.to_json()))
    print(f"chosen delta: {report.chosen}")
    return EXIT_OK


def cmd_build_dataset(config: RunConfig, args) -> int:
    schema = load_run_schema(config)
    split = load_split(config, "train", schema)
    encoder = load_encoder(config, schema)
    delta = active_delta(config)
    filtered = filtered_for(split, schema, encoder, delta)

    ner = ingest.build_ner_samples(split, filtered)
    aux = ingest.build_auxiliary_samples(split, config.aux_fraction, config.seed) if split.examples else []
    exp = []
    if config.exp_records:
        records = ingest.read_explanations(config.path(config.exp_records))
        exp = ingest.merge_explanations(split, records, filtered)
    samples = ner + aux + exp
    random.Random(config.seed).shuffle(samples)

    write_atomic(config.out / "dataset.jsonl", jsonl(s.to_record() for s in samples))
    counts = Counter(s.task.value for s in samples)
    manifest = {
        "delta": delta,
        "total": len(samples),
        "per_task": {t.value: counts.get(t.value, 0) for t in Task},
        "fingerprint": config.fingerprint(),
    }
    write_atomic(config.out / "dataset_manifest.json", dump_json(manifest))
    print(f"wrote {len(samples)} samples (delta={delta})")
    return EXIT_OK


def _batches(samples, config: RunConfig, rng: random.Random):
    """Endless stream of batches; reshuffled every pass over the data."""
    while True:
        order = list(samples)
        rng.shuffle(order)
        if config.homogeneous_batches:
            order.sort(key=lambda s: s.task.value)
        for i in range(0, len(order), config.train_batch_size):
            yield order[i:i + config.train_batch_size]


def batch_breakdown(generator, batch, type_sets, config: RunConfig):
    """Mean generation and classification loss over a batch, mixed with lambda."""
    schema = generator.schema
    gen = cls = 0.0
    for s in batch:
        gen += generation_loss(generator.teacher_forced_logprobs(s.prompt, s.target))
        if s.task.is_ner_family or config.cls_on_type_recognition:
            pos, neg = type_sets[(s.id, s.task)]
            cls += classification_loss(generator.type_logits(s.prompt, config.pooling_scope),
                                       pos, neg, schema, config.standard_sign)
    n = len(batch)
    return combined_loss(gen / n, cls / n, config.lambda_)


def cmd_train(config: RunConfig, args) -> int:
    schema = load_run_schema(config)
    dataset_path = config.out / "dataset.jsonl"
    if not dataset_path.exists():
        raise FileNotFoundError(f"{dataset_path} not found; run build-dataset first")
    samples = ingest.read_samples(dataset_path)
    split = load_split(config, "train", schema)
    generator = make_generator(config, schema, split.examples)
    state = config.out / "generator_state.json"
    if config.resume and state.exists():
        generator.load_state(read_json(state))
    type_sets = {(s.id, s.task): sample_type_sets(s, schema) for s in samples}

    rows = []
    try:
        if samples:
            batches = _batches(samples, config, random.Random(config.seed))
            for step in range(1, config.train_steps + 1):
                batch = next(batches)
                b = batch_breakdown(generator, batch, type_sets, config)
                rows.append((step, b.generation, b.classification, b.total))
                generator.apply_update(lambda: batch_breakdown(generator, batch, type_sets, config).total)
    finally:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "L_g", "L_c", "total"])
        for row in rows:
            w.writerow([row[0]] + [repr(v) for v in row[1:]])
        write_atomic(config.out / "train_trace.csv", buf.getvalue())
    write_atomic(state, dump_json(generator.state()))
    print(f"trained generator for {len(rows)} steps")
    return EXIT_OK


def cmd_predict(config: RunConfig, args) -> int:
    schema = load_run_schema(config)
    name = args.split or "test"
    split = load_split(config, name, schema)
    generator = make_generator(config, schema, split.examples)
    state = config.out / "generator_state.json"
    if state.exists():
        generator.load_state(read_json(state))
    if matcher_state_path(config).exists():
        filtered = filtered_for(split, schema, load_encoder(config, schema), active_delta(config))
        prompts = {ex.id: build_filtered_prompt(schema, ex.sentence, filtered[ex.id])
                   for ex in split.examples}
    else:
        prompts = {ex.id: build_ner_prompt(schema, ex.sentence) for ex in split.examples}

    records, parsed = [], 0
    for ex in split.examples:
        output = generator.generate(prompts[ex.id], config.max_length)
        records.append({"id": ex.id, "output": output})
        if not parse_mentions(output, schema).malformed:
            parsed += 1
    write_atomic(config.out / "predictions" / f"{name}.jsonl", jsonl(records))
    summary = {"split": name, "predictions": len(records), "parsed": parsed,
               "parse_rate": parsed / len(records) if records else 0.0}
    write_atomic(config.out / "predictions" / f"{name}.summary.json", dump_json(summary))
    print(f"{name}: {len(records)} predictions, parse rate {summary['parse_rate']:.4f}")
    return EXIT_OK


def read_predictions(path: Path) -> dict[str, str]:
    predictions = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                predictions[str(obj["id"])] = obj["output"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusParseError(f"bad prediction record: {exc}", lineno, str(path)) from None
    return predictions


def cmd_eval(config: RunConfig, args) -> int:
    schema = load_run_schema(config)
    name = args.split or "test"
    split = load_split(config, name, schema)
    path = Path(args.predictions) if args.predictions else config.out / "predictions" / f"{name}.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"predictions file not found: {path}")
    report = evaluate_dataset(split, read_predictions(path), schema, config.dedupe,
                              config.fingerprint())
    write_atomic(config.out / "eval" / f"{name}.json", dump_json(report.to_json()))
    write_atomic(config.out / "eval" / f"{name}.txt", report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_sweep(config: RunConfig, args) -> int:
    schema = load_run_schema(config)
    name = args.split or ("dev" if config.dev else "test")
    split = load_split(config, name, schema)
    encoder = load_encoder(config, schema)
    generator = make_generator(config, schema, split.examples)
    grid = args.grid if args.grid else list(config.grid)
    rows = []
    try:
        threshold_sweep(split, schema, encoder, generator, grid, config.max_length,
                        config.dedupe, rows)
    finally:
        write_atomic(config.out / "sweep.csv", sweep_csv(rows))
    print(sweep_csv(rows), end="")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "train-matcher": cmd_train_matcher,
    "calibrate": cmd_calibrate,
    "build-dataset": cmd_build_dataset,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def _grid(value: str) -> list[float]:
    try:
        return [float(x) for x in value.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="typed-ner", description="Type-oriented generative NER toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run config file")
        p.add_argument("--split", choices=ingest.SPLIT_NAMES, default=None)
        p.add_argument("--grid", type=_grid, default=None, help="comma-separated thresholds")
        p.add_argument("--out", default=None, help="override the output directory")
        if name == "eval":
            p.add_argument("--predictions", default=None, help="predictions JSON-lines file")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        if args.out:
            config.out_dir = str(Path(args.out).resolve())
        return COMMANDS[args.command](config, args)
    except (SchemaMismatchError, CorpusParseError, ReferentialIntegrityError) as exc:
        print(f"typed-ner: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigurationError, OSError) as exc:
        print(f"typed-ner: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (BackendError, TypedNerError) as exc:
        print(f"typed-ner: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
