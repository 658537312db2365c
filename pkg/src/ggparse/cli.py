"""``ggparse`` command line: train, parse, evaluate, oracle-check, bench.

Exit codes: 0 success, 1 failed check, 2 usage/config error, 3 model error,
4 data error.  Logs go to stderr (level from ``GGPARSE_LOG``); reports and
parses go to stdout or the named files.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ggparse.checkpoint import CheckpointError, load_model, save_model
from ggparse.decoder import DECODERS, TIE_BREAKS, assign_labels, decode
from ggparse.evaluation import (
    attachment_scores,
    benchmark_decode,
    order_accuracy,
    predict,
    render_bench,
)
from ggparse.scorer import ModelDims, load_external_embeddings, score_sentence
from ggparse.scores import dump_scores, load_scores
from ggparse.training import NumericError, TrainConfig, read_config, train
from ggparse.treebank import ConllFormatError, Sentence, Token, misc_value, read_conll, write_conll
from ggparse.trees import DepTree, compute_layers, is_projective, oracle_scores, validate_tree

log = logging.getLogger("ggparse")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_MODEL, EXIT_DATA = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _setup_logging():
    level = os.environ.get("GGPARSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value hyperparameter file")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=("conllu", "conllx"), default="conllu", help="treebank format")
    common.add_argument("--convention", choices=("ud", "ptb"), help="punctuation convention")
    common.add_argument("--jobs", type=int, default=1, help="sentence-level parallelism")
    common.add_argument("--report-format", choices=("table", "kv", "tsv"), default="table")
    common.add_argument("--figures", metavar="DIR", help="write matplotlib figures into DIR")

    p = argparse.ArgumentParser(prog="ggparse", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train a model")
    t.add_argument("--train", required=True)
    t.add_argument("--dev")
    t.add_argument("--model", required=True, help="checkpoint to write")
    t.add_argument("--output", help="also write the per-epoch metric log here")
    t.add_argument("--decoder", choices=DECODERS)
    t.add_argument("--preset", choices=("desk", "large"), default="desk")

    pa = sub.add_parser("parse", parents=[common], help="parse a treebank")
    pa.add_argument("--model")
    pa.add_argument("--test", help="input treebank")
    pa.add_argument("--scores-in", help="decode a score interchange file instead of running a model")
    pa.add_argument("--output", help="CoNLL output (default stdout)")
    pa.add_argument("--decoder", choices=DECODERS)
    pa.add_argument("--scores-out", help="dump the computed score sets")

    e = sub.add_parser("evaluate", parents=[common], help="score predictions against gold")
    e.add_argument("--test", "--gold", dest="test", required=True, help="gold treebank")
    e.add_argument("--pred", required=True, help="predicted treebank")
    e.add_argument("--model", help="model whose order scorer supplies OrderAcc when --pred has no Layer= MISC")
    e.add_argument("--strict-root", action="store_true", help="also report trees without exactly one root child")

    o = sub.add_parser("oracle-check", parents=[common], help="decode oracle scores of gold trees")
    o.add_argument("--test", required=True, help="gold treebank")
    o.add_argument("--decoder", choices=DECODERS)

    b = sub.add_parser("bench", parents=[common], help="decoder operation counts and throughput")
    b.add_argument("--model")
    b.add_argument("--test")
    b.add_argument("--decoder", choices=DECODERS + ("all",), default="all")
    b.add_argument("--repetitions", type=int, default=3)
    b.add_argument("--lengths", default="10,20,40", help="synthetic sentence lengths")
    b.add_argument("--per-length", type=int, default=5)
    return p


def _build_config(args, extra):
    cfg = TrainConfig()
    if getattr(args, "preset", "desk") == "large":
        for k, v in ModelDims.large().to_dict().items():
            if hasattr(cfg, k) and k != "ext_dim":
                setattr(cfg, k, v)
    if args.config:
        try:
            read_config(args.config, cfg)
        except OSError as exc:
            raise CliError(f"cannot read config: {exc}", EXIT_CONFIG) from None
        except ValueError as exc:
            raise CliError(str(exc), EXIT_CONFIG) from None
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise CliError(f"unexpected argument {tok!r}", EXIT_CONFIG)
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
        elif i + 1 < len(extra):
            key, value = tok[2:], extra[i + 1]
            i += 1
        else:
            raise CliError(f"option {tok} needs a value", EXIT_CONFIG)
        try:
            cfg.set(key, value)
        except (KeyError, ValueError) as exc:
            raise CliError(f"bad config override {tok}: {exc}", EXIT_CONFIG) from None
        i += 1
    if args.seed is not None:
        cfg.seed = args.seed
    if args.convention:
        cfg.convention = args.convention
    if getattr(args, "decoder", None) in DECODERS:
        cfg.decoder = args.decoder
    for key, allowed in (("decoder", DECODERS), ("convention", ("ud", "ptb")), ("order_tie_break", TIE_BREAKS)):
        if getattr(cfg, key) not in allowed:
            raise CliError(f"{key.replace('_', '-')} must be one of {', '.join(allowed)}", EXIT_CONFIG)
    return cfg


def _read(path, fmt, code):
    try:
        return read_conll(path, fmt)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", code) from None
    except ConllFormatError as exc:
        raise CliError(str(exc), code) from None


def _load(path, cfg):
    external = None
    if cfg.external_embeddings:
        external, _ = load_external_embeddings(cfg.external_embeddings)
    try:
        return load_model(path, external)
    except OSError as exc:
        raise CliError(f"cannot read model {path}: {exc}", EXIT_MODEL) from None
    except CheckpointError as exc:
        raise CliError(str(exc), EXIT_MODEL) from None


def cmd_train(args, cfg, out):
    train_set = _read(args.train, args.format, EXIT_CONFIG)
    dev_set = _read(args.dev, args.format, EXIT_CONFIG) if args.dev else None
    if not train_set:
        raise CliError(f"{args.train}: no sentences", EXIT_CONFIG)
    for s in train_set:
        check = validate_tree(s.heads)
        if not check:
            raise CliError(f"training sentence {s.source_id}: invalid gold tree ({check.reason})", EXIT_CONFIG)
    external = None
    if cfg.external_embeddings:
        external, _ = load_external_embeddings(cfg.external_embeddings)
    lines = []

    def on_epoch(rec):
        lines.append(rec.line())
        out.write(rec.line() + "\n")
        out.flush()

    try:
        model, history = train(cfg, train_set, dev_set, on_epoch=on_epoch, external=external)
    except NumericError as exc:
        raise CliError(f"training aborted: {exc}", EXIT_FAIL) from None
    save_model(model, args.model, cfg.to_dict())
    if args.output:
        Path(args.output).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if args.figures:
        from ggparse.plotting import plot_training

        plot_training(history, Path(args.figures) / "training.png")
    return EXIT_OK


def cmd_parse(args, cfg, out):
    kind = cfg.decoder
    if args.scores_in:
        try:
            blocks = load_scores(args.scores_in)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read scores: {exc}", EXIT_DATA) from None
        if args.test:
            sentences = _read(args.test, args.format, EXIT_DATA)
        else:
            sentences = [Sentence([Token(i + 1, "_") for i in range(ss.n)], sid) for sid, ss in blocks]
        if len(sentences) != len(blocks) or any(len(s) != ss.n for s, (_, ss) in zip(sentences, blocks)):
            raise CliError("score file and treebank are not aligned", EXIT_DATA)
        trees, layers = [], []
        for _, ss in blocks:
            tree = decode(ss, kind, raw=cfg.order_offset_on_raw, mst_on_prob=cfg.mst_on_prob,
                          tie_break=cfg.order_tie_break)
            trees.append(assign_labels(ss, tree) if ss.label is not None else tree)
            layers.append([int(x) for x in ss.priorities()])
    else:
        if not args.model or not args.test:
            raise CliError("parse needs --model and --test (or --scores-in)", EXIT_CONFIG)
        model, _ = _load(args.model, cfg)
        sentences = _read(args.test, args.format, EXIT_DATA)
        trees, layers, secs = predict(model, sentences, kind, raw=cfg.order_offset_on_raw,
                                      mst_on_prob=cfg.mst_on_prob, jobs=args.jobs, tie_break=cfg.order_tie_break)
        log.info("decoded %d sentences in %.3fs", len(sentences), secs)
        if args.scores_out:
            dump_scores([(s.source_id, score_sentence(s, model, "eval")) for s in sentences], args.scores_out)
    if args.output:
        write_conll(sentences, trees, args.output, layers=layers)
    else:
        from ggparse.treebank import format_conll

        out.write(format_conll(sentences, trees, layers))
    return EXIT_OK


def cmd_evaluate(args, cfg, out):
    gold = _read(args.test, args.format, EXIT_DATA)
    pred_sents = _read(args.pred, args.format, EXIT_DATA)
    if len(gold) != len(pred_sents) or any(len(g) != len(p) for g, p in zip(gold, pred_sents)):
        raise CliError("gold and predicted files are not aligned", EXIT_DATA)
    pred = [DepTree(p.heads, p.labels) for p in pred_sents]
    report = attachment_scores(gold, pred, cfg.convention)
    gold_layers = [compute_layers(g.heads) for g in gold if validate_tree(g.heads)]
    valid_idx = [i for i, g in enumerate(gold) if validate_tree(g.heads)]
    layers = None
    if all(misc_value(t, "Layer") is not None for p in pred_sents for t in p.tokens):
        layers = [[int(misc_value(t, "Layer")) for t in pred_sents[i].tokens] for i in valid_idx]
    elif args.model:
        model, _ = _load(args.model, cfg)
        layers = [[int(x) for x in score_sentence(gold[i], model, "eval").priorities()] for i in valid_idx]
    if layers is not None:
        report.order_acc = order_accuracy(gold_layers, layers)
    out.write(report.render(args.report_format))
    if args.strict_root:
        bad = sum(1 for t in pred if sum(1 for h in t.heads if h == 0) != 1)
        out.write(f"single_root_violations={bad}\n" if args.report_format == "kv"
                  else f"single-root violations: {bad}\n")
    if args.figures:
        from ggparse.plotting import plot_sentence_uas

        plot_sentence_uas(report, Path(args.figures) / "sentence_uas.png")
    return EXIT_OK


def cmd_oracle_check(args, cfg, out):
    gold = _read(args.test, args.format, EXIT_DATA)
    kind = cfg.decoder
    ok = fail = unreachable = invalid = ablated_ok = 0
    failures = []
    for s in gold:
        if not validate_tree(s.heads):
            invalid += 1
            failures.append((s.source_id, "invalid gold tree"))
            continue
        ss = oracle_scores(s.heads)
        if kind == "greedy-projective" and not is_projective(s.heads):
            unreachable += 1
            continue
        if decode(ss, kind).heads == s.heads:
            ok += 1
        else:
            fail += 1
            failures.append((s.source_id, "reconstruction failed"))
        if kind != "mst" and decode(ss, kind, use_order=False).heads == s.heads:
            ablated_ok += 1
    reachable = ok + fail
    rate = ok / reachable if reachable else 1.0
    pairs = [
        ("decoder", kind),
        ("sentences", str(len(gold))),
        ("reconstructed", str(ok)),
        ("failed", str(fail)),
        ("unreachable_nonprojective", str(unreachable)),
        ("invalid_gold", str(invalid)),
        ("reconstruction_rate", f"{100 * rate:.2f}"),
    ]
    if kind != "mst":
        pairs.append(("arc_only_reconstruction_rate",
                      f"{100 * (ablated_ok / reachable if reachable else 1.0):.2f}"))
    _emit_pairs(pairs, args.report_format, out)
    for sid, why in failures:
        out.write(f"FAIL {sid}: {why}\n")
    return EXIT_OK if fail == 0 and invalid == 0 else EXIT_FAIL


def _emit_pairs(pairs, fmt, out):
    if fmt == "kv":
        out.write("".join(f"{k}={v}\n" for k, v in pairs))
    elif fmt == "tsv":
        out.write("\t".join(k for k, _ in pairs) + "\n" + "\t".join(v for _, v in pairs) + "\n")
    else:
        w = max(len(k) for k, _ in pairs)
        out.write("".join(f"{k:<{w}}  {v}\n" for k, v in pairs))


def cmd_bench(args, cfg, out):
    if args.repetitions < 3:
        raise CliError("--repetitions must be at least 3", EXIT_CONFIG)
    kinds = DECODERS if args.decoder == "all" else (args.decoder,)
    model = None
    sentences = []
    lengths = None
    if args.model:
        model, _ = _load(args.model, cfg)
    if args.test:
        sentences = _read(args.test, args.format, EXIT_DATA)
    if model is None and not sentences:
        try:
            lengths = [int(x) for x in args.lengths.split(",") if x.strip()]
        except ValueError:
            raise CliError(f"bad --lengths {args.lengths!r}", EXIT_CONFIG) from None
    elif model is not None and not sentences:
        raise CliError("bench with --model needs --test", EXIT_CONFIG)
    tables = {}
    for kind in kinds:
        _, table = benchmark_decode(model, sentences, kind, args.repetitions, lengths=lengths, seed=cfg.seed,
                                    per_length=args.per_length)
        tables[kind] = table
        text = render_bench(table, kind, args.report_format)
        if args.report_format == "tsv" and kind != kinds[0]:
            text = text.split("\n", 1)[1]
        out.write(text)
    if args.figures:
        from ggparse.plotting import plot_scaling

        plot_scaling(tables, Path(args.figures) / "scaling.png")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "parse": cmd_parse,
    "evaluate": cmd_evaluate,
    "oracle-check": cmd_oracle_check,
    "bench": cmd_bench,
}


def main(argv=None, out=None):
    _setup_logging()
    out = out or sys.stdout
    parser = _parser()
    args, extra = parser.parse_known_args(argv)
    try:
        cfg = _build_config(args, extra)
        if args.jobs < 1:
            raise CliError("--jobs must be >= 1", EXIT_CONFIG)
        return COMMANDS[args.command](args, cfg, out)
    except CliError as exc:
        print(f"ggparse {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
