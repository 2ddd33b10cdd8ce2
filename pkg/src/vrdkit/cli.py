"""Operator command line: ingest, split-zeroshot, train, eval,
spatial-encode, report.

Options resolve in three steps: explicit flags win, then keys from a
JSON config file (``--config`` or the VRDKIT_CONFIG environment
variable; keys are the long flag names with dashes as underscores),
then built-in defaults. Exit codes: 0 success, 1 user error, 2 internal
error. Outputs carry no timestamps, so a fixed seed and fixed inputs
reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .corpus import CorpusError, Vocabulary, triple_key_stats, zero_shot_filter
from .embeddings import EmbeddingFormatError, load_embeddings
from .evaluation import (
    RANK_MODES,
    TASKS,
    evaluate_grid,
    format_recall_table,
    reports_from_json,
    reports_to_csv,
    reports_to_json,
)
from .features import (
    FeatureFormatError,
    FileFeatureProvider,
    SyntheticFeatureProvider,
)
from .geometry import sf_vector, spatial_vector
from .models import (
    ALL_VARIANTS,
    FUSION_SPACES,
    ModelConfig,
    PredicateModel,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    build_training_set,
    train_joint,
    train_joint_from,
    train_module,
)

CONFIG_ENV_VAR = "VRDKIT_CONFIG"


class UserError(Exception):
    """Bad arguments or bad input data; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract reserves 2 for
    # internal failures, so route them through UserError instead.
    def error(self, message):
        raise UserError(message)


def _read_config(path) -> dict:
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise UserError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise UserError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise UserError(f"config {path} must hold a JSON object")
    return data


class Options:
    """Flag values backed by config-file defaults; flags win."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        self._config = _read_config(self._args.get("config"))

    def get(self, key, default=None):
        value = self._args.get(key)
        if value is None:
            value = self._config.get(key, default)
        return value

    def require(self, key):
        value = self.get(key)
        if value is None:
            flag = "--" + key.replace("_", "-")
            raise UserError(f"missing required option {flag} (or config key {key!r})")
        return value


def _load_vocabulary(opts: Options) -> Vocabulary:
    return Vocabulary.from_files(opts.require("objects"), opts.require("predicates"))


def _parse_corpus_file(path, vocabulary):
    try:
        with open(path, encoding="utf-8") as f:
            return corpus_mod.parse_corpus(f, vocabulary)
    except OSError as e:
        raise UserError(f"cannot read annotations {path}: {e}") from None


def _write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line)
            f.write("\n")


def _int_list(raw, flag) -> list[int]:
    if isinstance(raw, (list, tuple)):
        values = [int(v) for v in raw]
    else:
        try:
            values = [int(part) for part in str(raw).split(",") if part.strip()]
        except ValueError:
            raise UserError(f"{flag} expects comma-separated integers, got {raw!r}") from None
    if not values or any(v <= 0 for v in values):
        raise UserError(f"{flag} values must be positive integers, got {raw!r}")
    return values


def _print_corpus_stats(records) -> None:
    key_counts, predicate_counts = triple_key_stats(records)
    total = sum(predicate_counts.values())
    print(f"images: {len(records)}")
    print(f"triples: {total} ({len(key_counts)} distinct keys)")
    for predicate_id, count in sorted(predicate_counts.items(),
                                      key=lambda item: (-item[1], item[0]))[:10]:
        print(f"  predicate {predicate_id}: {count}")


def cmd_ingest(opts: Options) -> int:
    vocabulary = _load_vocabulary(opts)
    fmt = opts.get("format", "canonical")
    annotations = opts.require("annotations")
    if fmt == "canonical":
        records = _parse_corpus_file(annotations, vocabulary)
    elif fmt == "vrd":
        dims_path = opts.get("dims")
        if dims_path is None:
            raise UserError("--format vrd requires --dims (image_id -> [width, height])")
        try:
            raw = json.loads(Path(annotations).read_text(encoding="utf-8"))
            dims = json.loads(Path(dims_path).read_text(encoding="utf-8"))
        except OSError as e:
            raise UserError(f"cannot read input: {e}") from None
        except json.JSONDecodeError as e:
            raise UserError(f"invalid JSON input: {e}") from None
        if not isinstance(raw, dict) or not isinstance(dims, dict):
            raise UserError("VRD annotations and dims must be JSON objects")
        records = corpus_mod.parse_vrd_annotations(raw, vocabulary, dims)
    else:
        raise UserError(f"unknown ingest format {fmt!r} (expected canonical or vrd)")
    _write_lines(opts.require("output"), corpus_mod.serialize_corpus(records, vocabulary))
    _print_corpus_stats(records)
    return 0


def cmd_split_zeroshot(opts: Options) -> int:
    vocabulary = _load_vocabulary(opts)
    train = _parse_corpus_file(opts.require("train"), vocabulary)
    test = _parse_corpus_file(opts.require("test"), vocabulary)
    filtered = zero_shot_filter(train, test)
    _write_lines(opts.require("output"), corpus_mod.serialize_corpus(filtered, vocabulary))
    kept_triples = sum(len(r.ground_truth) for r in filtered)
    total_triples = sum(len(r.ground_truth) for r in test)
    print(f"test images kept: {len(filtered)}/{len(test)}")
    print(f"unseen triples kept: {kept_triples}/{total_triples}")
    if not filtered:
        print("warning: no unseen triples; every test key occurs in training",
              file=sys.stderr)
    return 0


def _load_store(opts: Options, config: ModelConfig):
    if not config.needs_embeddings:
        return None
    path = opts.get("embeddings")
    if path is None:
        raise UserError(f"variant {config.variant} requires --embeddings")
    dimension = int(opts.get("embedding_dim", 300))
    try:
        with open(path, encoding="utf-8") as f:
            return load_embeddings(f, dimension)
    except OSError as e:
        raise UserError(f"cannot read embeddings {path}: {e}") from None


def _load_provider(opts: Options, config: ModelConfig):
    if not config.needs_features:
        return None
    path = opts.get("features")
    synthetic_dim = opts.get("synthetic_features")
    if path is not None:
        if str(path).endswith(".npz"):
            return FileFeatureProvider.from_npz(path)
        try:
            with open(path, encoding="utf-8") as f:
                return FileFeatureProvider.from_jsonl(f)
        except OSError as e:
            raise UserError(f"cannot read features {path}: {e}") from None
    if synthetic_dim is not None:
        return SyntheticFeatureProvider(int(opts.get("feature_seed", 0)),
                                        int(synthetic_dim))
    raise UserError(
        f"variant {config.variant} requires --features or --synthetic-features")


def _collect_init_layers(paths, config: ModelConfig):
    language = visual = None
    for path in paths:
        model, _ = load_checkpoint(path)
        if model.language is not None:
            if language is not None:
                raise UserError("two --init-from checkpoints supply a language layer")
            language = model.language
        if model.visual is not None:
            if visual is not None:
                raise UserError("two --init-from checkpoints supply a visual layer")
            visual = model.visual
    if language is None or visual is None:
        raise UserError(
            "--init-from checkpoints must cover both the language and visual layers")
    return language, visual


def cmd_train(opts: Options) -> int:
    variant = opts.require("variant")
    fusion_space = opts.get("fusion_space", "logit_product")
    try:
        config = ModelConfig.from_name(variant, fusion_space)
    except ValueError as e:
        raise UserError(str(e)) from None
    vocabulary = _load_vocabulary(opts)
    records = _parse_corpus_file(opts.require("annotations"), vocabulary)
    store = _load_store(opts, config)
    provider = _load_provider(opts, config)

    train_config = TrainConfig(
        learning_rate=float(opts.get("learning_rate", 0.01)),
        batch_size=int(opts.get("batch_size", 64)),
        epochs=int(opts.get("epochs", 50)),
        seed=int(opts.get("seed", 0)),
        l2=float(opts.get("l2", 0.0)),
        fusion_space=fusion_space,
    )
    class_weights_path = opts.get("class_weights")
    if class_weights_path is not None:
        weights = json.loads(Path(class_weights_path).read_text(encoding="utf-8"))
        train_config.class_weights = np.asarray(weights, dtype=np.float64)

    examples = build_training_set(records, vocabulary, config,
                                  store=store, provider=provider)
    if not examples:
        raise UserError("training corpus contains no ground-truth triples")
    num_predicates = vocabulary.num_predicates

    init_from = opts.get("init_from")
    if init_from and config.fusion != "product":
        raise UserError("--init-from only applies to combined (language+visual) variants")

    if config.fusion == "product":
        if init_from:
            language, visual = _collect_init_layers(init_from, config)
            language, visual, report = train_joint_from(
                examples, num_predicates, train_config, language, visual)
        else:
            language, visual, report = train_joint(
                examples, num_predicates, train_config)
        model = PredicateModel(config, language=language, visual=visual)
    elif config.fusion == "language_only":
        layer, report = train_module(examples, num_predicates, train_config)
        model = PredicateModel(config, language=layer)
    else:
        layer, report = train_module(examples, num_predicates, train_config)
        model = PredicateModel(config, visual=layer)

    checkpoint_path = opts.require("checkpoint")
    save_checkpoint(
        checkpoint_path, model,
        word_dim=store.dimension if store is not None else None,
        feature_dim=provider.dimension if provider is not None else None,
        seed=train_config.seed)

    log_path = opts.get("log")
    if log_path:
        _write_lines(log_path, (
            json.dumps({"epoch": i + 1, "loss": loss, "accuracy": acc})
            for i, (loss, acc) in enumerate(
                zip(report.epoch_losses, report.epoch_accuracies))
        ))

    print(f"variant: {config.variant}")
    print(f"examples: {len(examples)}")
    print(f"final loss: {report.epoch_losses[-1]:.6f}")
    print(f"final accuracy: {report.final_accuracy:.4f}")
    print(f"checksum: {report.checksum}")
    print(f"checkpoint: {checkpoint_path}")
    return 0


def cmd_eval(opts: Options) -> int:
    model, meta = load_checkpoint(opts.require("checkpoint"))
    config = model.config
    vocabulary = _load_vocabulary(opts)
    if vocabulary.num_predicates != model.num_predicates:
        raise UserError(
            f"checkpoint predicts {model.num_predicates} classes but the "
            f"vocabulary lists {vocabulary.num_predicates} predicates")
    records = _parse_corpus_file(opts.require("annotations"), vocabulary)
    store = _load_store(opts, config)
    if store is not None and meta.get("word_dim") not in (None, store.dimension):
        raise UserError(
            f"checkpoint was trained with {meta['word_dim']}-d word vectors, "
            f"store provides {store.dimension}-d")
    provider = _load_provider(opts, config)
    if provider is not None and meta.get("feature_dim") not in (None, provider.dimension):
        raise UserError(
            f"checkpoint was trained with {meta['feature_dim']}-d features, "
            f"provider yields {provider.dimension}-d")

    task = opts.get("task", "predicate")
    tasks = list(TASKS) if task == "all" else [task]
    for t in tasks:
        if t not in TASKS:
            raise UserError(f"unknown task {t!r}; expected one of {TASKS} or 'all'")
    ns = _int_list(opts.get("n", "50,100"), "--n")
    ks = _int_list(opts.get("k", "1"), "--k")
    rank = opts.get("rank", "product")
    if rank not in RANK_MODES:
        raise UserError(f"unknown rank mode {rank!r}; expected one of {RANK_MODES}")

    zero_shot_keys = None
    if opts.get("zero_shot"):
        train_path = opts.get("train_annotations")
        if train_path is None:
            raise UserError("--zero-shot requires --train-annotations")
        train_records = _parse_corpus_file(train_path, vocabulary)
        zero_shot_keys = {t.key for rec in train_records for t in rec.ground_truth}

    all_reports = []
    for t in tasks:
        all_reports.extend(evaluate_grid(
            records, model, vocabulary, t, ns, ks,
            store=store, provider=provider, zero_shot_keys=zero_shot_keys,
            rank=rank, iou_threshold=float(opts.get("iou_threshold", 0.5)),
            threads=int(opts.get("threads", 1))))

    named = [(config.variant, all_reports)]
    print(format_recall_table(named), end="")
    report_path = opts.get("report")
    if report_path:
        Path(report_path).write_text(reports_to_json(named), encoding="utf-8")
    csv_path = opts.get("csv")
    if csv_path:
        Path(csv_path).write_text(reports_to_csv(named), encoding="utf-8")
    return 0


def cmd_spatial_encode(opts: Options) -> int:
    vocabulary = _load_vocabulary(opts)
    records = _parse_corpus_file(opts.require("annotations"), vocabulary)
    encoder = opts.get("encoder", "spatial")
    if encoder not in ("spatial", "sf"):
        raise UserError(f"unknown encoder {encoder!r} (expected spatial or sf)")
    source = opts.get("source", "objects")
    if source not in ("objects", "detections"):
        raise UserError(f"unknown source {source!r} (expected objects or detections)")

    lines = []
    for rec in records:
        objects = rec.objects if source == "objects" else rec.detections
        if objects is None:
            raise UserError(f"image {rec.image_id!r} has no detections")
        for si, oi in corpus_mod.candidate_pairs(objects):
            subj, obj = objects[si], objects[oi]
            if encoder == "spatial":
                vec = spatial_vector(subj.box, obj.box, rec.dims).to_array()
            else:
                vec = sf_vector(subj.box, obj.box, rec.dims)
            lines.append(json.dumps({
                "image_id": rec.image_id,
                "subject": si,
                "object": oi,
                "vector": [float(v) for v in vec],
            }))
    _write_lines(opts.require("output"), lines)
    print(f"encoded {len(lines)} pairs from {len(records)} images")
    return 0


def cmd_report(opts: Options) -> int:
    named = []
    for path in opts.require("inputs"):
        try:
            named.extend(reports_from_json(Path(path).read_text(encoding="utf-8")))
        except OSError as e:
            raise UserError(f"cannot read report {path}: {e}") from None
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise UserError(f"report {path} is not a vrdkit report file: {e}") from None
    if not named:
        raise UserError("no reports to tabulate")
    print(format_recall_table(named), end="")
    csv_path = opts.get("csv")
    if csv_path:
        Path(csv_path).write_text(reports_to_csv(named), encoding="utf-8")
    return 0


def _add_vocab_args(parser) -> None:
    parser.add_argument("--objects", help="object-category list, one name per line")
    parser.add_argument("--predicates", help="predicate list, one name per line")


def _add_model_input_args(parser) -> None:
    parser.add_argument("--embeddings", help="word2vec-style text embeddings")
    parser.add_argument("--embedding-dim", type=int, dest="embedding_dim",
                        help="word vector dimension (default 300)")
    parser.add_argument("--features", help="precomputed feature file (.jsonl or .npz)")
    parser.add_argument("--synthetic-features", type=int, dest="synthetic_features",
                        metavar="DIM", help="use seeded synthetic features")
    parser.add_argument("--feature-seed", type=int, dest="feature_seed",
                        help="seed for synthetic features (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vrdkit",
                     description="Visual relationship detection toolkit")
    parser.add_argument("--config",
                        help=f"JSON config file (default: ${CONFIG_ENV_VAR})")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest", help="convert annotations to canonical JSONL")
    p.add_argument("--annotations", help="input annotation file")
    p.add_argument("--format", choices=["canonical", "vrd"],
                   help="input layout (default canonical)")
    p.add_argument("--dims", help="image_id -> [width, height] JSON (vrd format)")
    _add_vocab_args(p)
    p.add_argument("--output", help="canonical JSONL output path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split-zeroshot",
                       help="restrict a test corpus to unseen triples")
    p.add_argument("--train", help="training annotations (canonical JSONL)")
    p.add_argument("--test", help="test annotations (canonical JSONL)")
    _add_vocab_args(p)
    p.add_argument("--output", help="filtered JSONL output path")
    p.set_defaults(func=cmd_split_zeroshot)

    p = sub.add_parser("train", help="train a model variant")
    p.add_argument("--variant", help=f"one of {', '.join(ALL_VARIANTS)}")
    p.add_argument("--annotations", help="training annotations (canonical JSONL)")
    _add_vocab_args(p)
    _add_model_input_args(p)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--fusion-space", choices=list(FUSION_SPACES), dest="fusion_space")
    p.add_argument("--class-weights", dest="class_weights",
                   help="JSON list of per-predicate loss weights")
    p.add_argument("--init-from", action="append", dest="init_from", metavar="CKPT",
                   help="warm-start a combined variant from module checkpoints "
                        "(repeat to supply both)")
    p.add_argument("--checkpoint", help="checkpoint output path")
    p.add_argument("--log", help="training log output (JSONL)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the Recall@n evaluation")
    p.add_argument("--checkpoint", help="trained checkpoint path")
    p.add_argument("--annotations", help="test annotations (canonical JSONL)")
    _add_vocab_args(p)
    _add_model_input_args(p)
    p.add_argument("--task", help="predicate, phrase, relationship, or all")
    p.add_argument("--n", help="comma-separated recall cutoffs (default 50,100)")
    p.add_argument("--k", help="comma-separated predictions per pair (default 1)")
    p.add_argument("--rank", choices=list(RANK_MODES),
                   help="prediction ranking key (default product)")
    p.add_argument("--iou-threshold", type=float, dest="iou_threshold")
    p.add_argument("--zero-shot", action="store_const", const=True, dest="zero_shot",
                   help="evaluate only triples unseen in training")
    p.add_argument("--train-annotations", dest="train_annotations",
                   help="training annotations defining seen triples")
    p.add_argument("--threads", type=int, help="worker threads (default 1)")
    p.add_argument("--report", help="JSON report output path")
    p.add_argument("--csv", help="CSV report output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spatial-encode",
                       help="emit spatial vectors for candidate pairs")
    p.add_argument("--annotations", help="annotations (canonical JSONL)")
    _add_vocab_args(p)
    p.add_argument("--encoder", choices=["spatial", "sf"],
                   help="7-d pairwise encoding or 10-d per-box baseline")
    p.add_argument("--source", choices=["objects", "detections"],
                   help="which boxes to pair (default objects)")
    p.add_argument("--output", help="JSONL output path")
    p.set_defaults(func=cmd_spatial_encode)

    p = sub.add_parser("report", help="tabulate saved evaluation reports")
    p.add_argument("inputs", nargs="*", help="report JSON files")
    p.add_argument("--csv", help="CSV output path")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_help()
            return 1
        return args.func(Options(args))
    except UserError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (CorpusError, EmbeddingFormatError, FeatureFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - boundary for invariant violations
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
