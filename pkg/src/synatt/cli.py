"""Command-line surface: masking, forward passes, training, and analysis.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure. All
artifacts are plain CSV/JSON and byte-reproducible for a fixed seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import model as m
from .conllu import read_conllu_file
from .errors import DataError, NumericError
from .gradcheck import finite_difference_check, verification_config
from .masks import write_mask_csv, write_mask_sidecar
from .model import (
    AttentionTrace,
    SLAConfig,
    load_checkpoint,
    load_dataset_jsonl,
    save_checkpoint,
    write_metrics_csv,
)
from .synth import generate_dataset, write_jsonl, write_vocab
from .wordpiece import KIND_WORD, Vocabulary, build_alignment

USAGE_EXIT, DATA_EXIT, NUMERIC_EXIT = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _fmt(x: float) -> str:
    return repr(float(x))


def build_parser() -> _Parser:
    parser = _Parser(prog="synatt", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p, vocab=False, conllu=False, checkpoint=False, out=False):
        p.add_argument("--config", help="JSON file with config fields; flags override")
        p.add_argument("--seed", type=int, help="run seed (overrides config)")
        if vocab:
            p.add_argument("--vocab", required=True, help="vocabulary file, one subword per line")
        if conllu:
            p.add_argument("--conllu", required=True, help="CoNLL-U input file")
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint directory")
        if out:
            p.add_argument("--out", required=True, help="output directory (created if absent)")

    p = sub.add_parser("mask", help="export attention masks as allow-bit CSVs")
    common(p, vocab=True, conllu=True, out=True)
    p.add_argument("--mode", choices=["sla", "window", "pair"], default="sla")
    p.add_argument("--m", type=int, help="tree-distance threshold (sla/pair)")
    p.add_argument("--k", type=int, help="window radius (window mode)")
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--lowercase", action="store_true", default=None)
    p.add_argument("--transpose-d", action="store_true", default=None,
                   help="debug: threshold the transposed neighbor distances")

    p = sub.add_parser("forward", help="write final hidden states for each sentence")
    common(p, vocab=True, conllu=True, checkpoint=True, out=True)
    p.add_argument("--mode", choices=list(m.MODES))
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--lowercase", action="store_true", default=None)

    p = sub.add_parser("train", help="train on a JSONL dataset, write checkpoint + metrics")
    common(p, vocab=True, out=True)
    p.add_argument("--train", required=True, dest="train_path", help="training JSONL")
    p.add_argument("--dev", dest="dev_path", help="dev JSONL")
    p.add_argument("--mode", choices=list(m.MODES))
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--task", choices=list(m.TASKS))
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--lowercase", action="store_true", default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a JSONL dataset")
    common(p, vocab=True, checkpoint=True)
    p.add_argument("--data", required=True, help="JSONL dataset")
    p.add_argument("--out", help="optional output directory for eval.json")

    p = sub.add_parser("gradcheck", help="verify analytic gradients with finite differences")
    common(p)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--sample", type=int, help="coordinates per parameter group (default: all)")
    p.add_argument("--threshold", type=float, default=1e-4)

    p = sub.add_parser("gate-stats", help="per-layer mean gate values over a dataset")
    common(p, vocab=True, checkpoint=True, out=True)
    p.add_argument("--data", required=True, help="JSONL dataset")
    p.add_argument("--limit", type=int, help="cap the number of examples")

    p = sub.add_parser("heatmap", help="averaged attention scores for one sentence")
    common(p, vocab=True, conllu=True, checkpoint=True, out=True)
    p.add_argument("--index", type=int, default=0, help="sentence index in the file")

    p = sub.add_parser("synth", help="generate the seeded synthetic dataset")
    common(p, out=True)
    p.add_argument("--n-train", type=int, default=2000, dest="n_train")
    p.add_argument("--n-dev", type=int, default=500, dest="n_dev")
    p.add_argument("--radius", type=int, help="labeling tree-distance radius (default: config m)")
    p.add_argument("--n-min", type=int, default=10, dest="n_min")
    p.add_argument("--n-max", type=int, default=16, dest="n_max")

    return parser


def resolve_config(args) -> SLAConfig:
    """Config file first, then explicit flags override individual fields."""
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as f:
                data = json.load(f)
        except OSError as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid config JSON in {args.config}: {exc}") from exc
    config = SLAConfig.from_dict(data)
    overrides = {}
    for name in (
        "mode", "m", "k", "max_len", "seed", "epochs", "batch_size",
        "learning_rate", "eval_every", "task", "lowercase", "transpose_d",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        config = SLAConfig.from_dict({**config.to_dict(), **overrides})
    return config


def _ensure_out(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def cmd_mask(args) -> int:
    config = resolve_config(args)
    vocab = Vocabulary.from_file(args.vocab)
    sentences = read_conllu_file(args.conllu)
    if not sentences:
        raise DataError(f"no sentences in {args.conllu}")
    out = _ensure_out(args.out)

    if args.mode == "pair":
        if len(sentences) % 2 != 0:
            raise DataError("pair mode needs an even number of sentences")
        groups = [tuple(sentences[i : i + 2]) for i in range(0, len(sentences), 2)]
    else:
        groups = [(s,) for s in sentences]

    for group in groups:
        alignment = build_alignment(group, vocab, config.max_len, config.lowercase)
        sid = "+".join(s.sentence_id for s in group)
        if args.mode == "window":
            mask = m.build_window_mask(alignment, config.k)
            extra = {"k": config.k}
        else:
            distances = [
                m.neighbor_min_distance(m.all_pairs_distance(s)) for s in group
            ]
            if args.mode == "pair":
                mask = m.build_pair_mask(
                    distances[0], distances[1], config.m, alignment, config.transpose_d
                )
            else:
                mask = m.build_sla_mask(
                    distances[0], config.m, alignment, config.transpose_d
                )
            extra = {"m": config.m}
        safe = sid.replace("/", "_")
        write_mask_csv(mask, os.path.join(out, f"mask_{safe}.csv"))
        write_mask_sidecar(
            os.path.join(out, f"mask_{safe}.json"),
            L=mask.L,
            mode=args.mode,
            sentence_id=sid,
            **extra,
        )
    print(f"wrote {len(groups)} mask(s) to {out}")
    return 0


def _params_for(args, config, vocab):
    """Checkpoint parameters when given, otherwise a seeded fresh init."""
    if getattr(args, "checkpoint", None):
        params, ckpt_config = load_checkpoint(args.checkpoint)
        if getattr(args, "config", None) is None:
            merged = ckpt_config.to_dict()
            if getattr(args, "seed", None) is not None:
                merged["seed"] = args.seed
            config = SLAConfig.from_dict(merged)
        return params, config
    params = m.init_params(
        config, len(vocab), config.n_classes or 2, m.make_rng(config.seed, "init")
    )
    return params, config


def cmd_forward(args) -> int:
    config = resolve_config(args)
    vocab = Vocabulary.from_file(args.vocab)
    params, config = _params_for(args, config, vocab)
    sentences = read_conllu_file(args.conllu)
    if not sentences:
        raise DataError(f"no sentences in {args.conllu}")
    out = _ensure_out(args.out)
    for sentence in sentences:
        alignment = build_alignment([sentence], vocab, config.max_len, config.lowercase)
        ids = np.array([vocab.ids(alignment.subwords)])
        segments = np.zeros_like(ids)
        m_glb = m.build_padding_mask(alignment).m_vals
        m_loc = m.local_mask_for(alignment, [sentence], config).m_vals
        h0 = m.embed(params, ids, segments)
        h = m.encode(params, config, h0, m_glb, m_loc)
        path = os.path.join(out, f"hidden_{sentence.sentence_id.replace('/', '_')}.csv")
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["token"] + [f"h{j}" for j in range(config.hidden)])
            for token, row in zip(alignment.subwords, h.data[0]):
                writer.writerow([token] + [_fmt(v) for v in row])
    print(f"wrote {len(sentences)} hidden-state file(s) to {out}")
    return 0


def cmd_train(args) -> int:
    config = resolve_config(args)
    vocab = Vocabulary.from_file(args.vocab)
    train_examples = load_dataset_jsonl(args.train_path)
    dev_examples = load_dataset_jsonl(args.dev_path) if args.dev_path else []
    result = m.train(config, train_examples, dev_examples, vocab, max_steps=args.max_steps)
    out = _ensure_out(args.out)
    save_checkpoint(out, result.params, m.SLAConfig.from_dict({
        **config.to_dict(),
        "n_classes": result.params.head_b.shape[0],
    }))
    write_metrics_csv(os.path.join(out, "metrics.csv"), result.history)
    final_loss = result.history[-1].loss if result.history else float("nan")
    print(
        f"trained {len(result.history)} steps; final loss {final_loss:.6f}; "
        f"best dev {result.best_metric:.6f} at step {result.best_step}"
    )
    return 0


def cmd_eval(args) -> int:
    config = resolve_config(args)
    vocab = Vocabulary.from_file(args.vocab)
    if not args.checkpoint:
        raise DataError("eval requires --checkpoint")
    params, config = _params_for(args, config, vocab)
    examples = load_dataset_jsonl(args.data)
    prepped = m.preprocess(examples, vocab, config)
    metric = m.evaluate(params, config, prepped)
    name = "f1" if config.task == "token-labeling" else "accuracy"
    print(f"{name}: {metric:.6f} over {len(examples)} examples")
    if args.out:
        out = _ensure_out(args.out)
        with open(os.path.join(out, "eval.json"), "w", encoding="utf-8") as f:
            json.dump(
                {"metric": name, "value": metric, "n_examples": len(examples)},
                f,
                indent=2,
                sort_keys=True,
            )
            f.write("\n")
    return 0


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 7
    if args.config:
        config = resolve_config(args)
    else:
        config = verification_config(seed)
    result = finite_difference_check(
        seed=seed, eps=args.eps, sample=args.sample, config=config
    )
    print(
        f"max relative error {result.max_rel_error:.3e} at {result.worst_param} "
        f"({result.n_coordinates} coordinates)"
    )
    if result.max_rel_error >= args.threshold:
        print(
            f"gradient check failed: {result.max_rel_error:.3e} >= {args.threshold:.1e}",
            file=sys.stderr,
        )
        return NUMERIC_EXIT
    return 0


def _traced_forward(params, config, vocab, examples, limit=None):
    prepped = m.preprocess(examples[:limit] if limit else examples, vocab, config)
    trace = AttentionTrace()
    m.evaluate(params, config, prepped, trace=trace)
    return prepped, trace


def cmd_gate_stats(args) -> int:
    config = resolve_config(args)
    vocab = Vocabulary.from_file(args.vocab)
    if not args.checkpoint:
        raise DataError("gate-stats requires --checkpoint")
    params, config = _params_for(args, config, vocab)
    examples = load_dataset_jsonl(args.data)
    _, trace = _traced_forward(params, config, vocab, examples, args.limit)
    means = m.gate_statistics(trace)
    out = _ensure_out(args.out)
    path = os.path.join(out, "gate_stats.csv")
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["layer", "mean_gate"])
        for layer, value in enumerate(means):
            writer.writerow([layer, _fmt(value)])
    print(f"wrote {path}")
    return 0


def cmd_heatmap(args) -> int:
    config = resolve_config(args)
    vocab = Vocabulary.from_file(args.vocab)
    if not args.checkpoint:
        raise DataError("heatmap requires --checkpoint")
    params, config = _params_for(args, config, vocab)
    sentences = read_conllu_file(args.conllu)
    if not 0 <= args.index < len(sentences):
        raise DataError(f"--index {args.index} out of range for {len(sentences)} sentences")
    sentence = sentences[args.index]
    alignment = build_alignment([sentence], vocab, config.max_len, config.lowercase)
    ids = np.array([vocab.ids(alignment.subwords)])
    segments = np.zeros_like(ids)
    trace = AttentionTrace()
    h0 = m.embed(params, ids, segments)
    m.encode(
        params,
        config,
        h0,
        m.build_padding_mask(alignment).m_vals,
        m.local_mask_for(alignment, [sentence], config).m_vals,
        trace=trace,
        kinds=alignment.kinds()[None, :],
    )
    matrix = m.attention_heatmap(trace)
    keep = np.flatnonzero(alignment.kinds() == KIND_WORD)
    labels = [alignment.subwords[p] for p in keep]
    out = _ensure_out(args.out)
    path = os.path.join(out, "heatmap.csv")
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([""] + labels)
        for label, row in zip(labels, matrix):
            writer.writerow([label] + [_fmt(v) for v in row])
    print(f"wrote {path}")
    return 0


def cmd_synth(args) -> int:
    config = resolve_config(args)
    seed = config.seed
    radius = args.radius if args.radius is not None else config.m
    if args.n_min < 1 or args.n_max < args.n_min:
        raise DataError("need 1 <= n-min <= n-max")
    train, dev = generate_dataset(
        seed, args.n_train, args.n_dev, radius, args.n_min, args.n_max
    )
    out = _ensure_out(args.out)
    write_jsonl(os.path.join(out, "train.jsonl"), train)
    write_jsonl(os.path.join(out, "dev.jsonl"), dev)
    write_vocab(os.path.join(out, "vocab.txt"))
    print(f"wrote train.jsonl ({len(train)}), dev.jsonl ({len(dev)}), vocab.txt to {out}")
    return 0


COMMANDS = {
    "mask": cmd_mask,
    "forward": cmd_forward,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "gate-stats": cmd_gate_stats,
    "heatmap": cmd_heatmap,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"synatt: data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except NumericError as exc:
        print(f"synatt: numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


def entry_point():
    raise SystemExit(main())


if __name__ == "__main__":
    entry_point()
