"""Command-line harness: corpus generation, training, evaluation, inference.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig
from .data import (
    STYLES,
    generate_corpus,
    image_to_input,
    load_corpus,
    read_pgm,
    write_pgm,
)
from .encoders import Vocabulary
from .model import SegModel
from .metrics import MetricReport
from .evaluate import evaluate_split
from .train import load_checkpoint, read_checkpoint, train
from .uncertainty import mc_infer, scale_to_uint8


def _build_model(cfg: RunConfig, vocab: Vocabulary) -> SegModel:
    cfg.set("vocab_size", vocab.size)
    return SegModel(cfg.model_config(), seed=cfg.seed, dtype=cfg.np_dtype)


def cmd_gen(args) -> int:
    out = args.out
    if os.path.isdir(out) and os.listdir(out) and not args.force:
        print(f"error: output directory {out!r} is not empty (use --force)",
              file=sys.stderr)
        return 2
    counts = generate_corpus(args.seed, args.n_train, args.n_test, args.ood,
                             out, style=args.style)
    for split, n in counts.items():
        print(f"{split}: {n} samples")
    print(f"wrote corpus to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = RunConfig.from_file(args.config, args.set or [])
    samples = load_corpus(args.data, splits={"train"})
    if not samples:
        print("error: no training samples found", file=sys.stderr)
        return 1
    vocab = Vocabulary.build(s.text for s in samples)
    os.makedirs(args.out, exist_ok=True)
    vocab.save(os.path.join(args.out, "vocab.txt"))
    model = _build_model(cfg, vocab)
    cfg.save(os.path.join(args.out, "config.txt"))
    history = train(model, samples, vocab, cfg.train_config(), out_dir=args.out,
                    config_hash=cfg.arch_hash())
    last = history[-1]
    print(f"trained {len(history)} steps; final total loss {last.total_loss:.6f} "
          f"(seg {last.seg_loss:.6f}, con {last.con_loss:.6f})")
    print(f"checkpoint: {os.path.join(args.out, 'ckpt.bin')}")
    return 0


def _load_model_for_inference(cfg: RunConfig, ckpt_path: str) -> tuple[SegModel, Vocabulary]:
    vocab_path = os.path.join(os.path.dirname(ckpt_path) or ".", "vocab.txt")
    if not os.path.exists(vocab_path):
        raise IOError(f"no vocab.txt next to checkpoint {ckpt_path}")
    vocab = Vocabulary.load(vocab_path)
    _, stored_hash = read_checkpoint(ckpt_path)
    model = _build_model(cfg, vocab)
    if stored_hash and stored_hash != cfg.arch_hash():
        raise ConfigError(
            f"checkpoint architecture hash {stored_hash[:12]} does not match "
            f"the evaluation config hash {cfg.arch_hash()[:12]}")
    load_checkpoint(ckpt_path, model)
    return model, vocab


def cmd_eval(args) -> int:
    cfg = RunConfig.from_file(args.config, args.set or [])
    if args.mc_samples:
        cfg.set("mc_samples", args.mc_samples)
    model, vocab = _load_model_for_inference(cfg, args.ckpt)
    wanted = [s.strip() for s in args.splits.split(",") if s.strip()]
    all_samples = load_corpus(args.data)
    by_split = {}
    for s in all_samples:
        by_split.setdefault(s.split, []).append(s)
    report = MetricReport(config_hash=cfg.arch_hash(), pairs=[("test", "test_ood")])
    found = 0
    for split in wanted:
        if split not in by_split:
            print(f"warning: split {split!r} missing from {args.data}, skipped",
                  file=sys.stderr)
            continue
        found += 1
        evaluate_split(
            model, by_split[split], vocab, report, split,
            mc_samples=cfg.mc_samples, seed=cfg.seed,
            nsd_tol_px=cfg.nsd_tol_px, brier_band_px=cfg.brier_band_px,
            region=cfg.eval_region, sample_values=not cfg.deterministic_values,
            batch_size=cfg.eval_batch, spearman_scope=cfg.spearman_scope)
    if not found:
        print("error: every requested split is missing", file=sys.stderr)
        return 1
    if args.report:
        with open(args.report + ".txt", "w", encoding="utf-8") as fh:
            fh.write(report.to_text())
        with open(args.report + ".tsv", "w", encoding="utf-8") as fh:
            fh.write(report.to_tsv())
        print(f"report written to {args.report}.txt / .tsv")
    sys.stdout.write(report.to_tsv())
    return 0


def cmd_infer(args) -> int:
    cfg = RunConfig.from_file(args.config, args.set or [])
    if args.mc_samples:
        cfg.set("mc_samples", args.mc_samples)
    model, vocab = _load_model_for_inference(cfg, args.ckpt)
    img = read_pgm(args.image)
    if vocab.known_fraction(args.prompt) == 0.0:
        print("warning: every prompt token is unknown to the vocabulary",
              file=sys.stderr)
    ids = vocab.encode(args.prompt, cfg.max_text_len)
    res = mc_infer(model, image_to_input(img).astype(model.dtype), ids,
                   cfg.mc_samples, cfg.seed,
                   sample=not cfg.deterministic_values)
    prefix = args.out_prefix
    write_pgm(prefix + "_mask.pgm", np.where(res.prediction, 255, 0).astype(np.uint8))
    prob_img, prob_lo, prob_hi = scale_to_uint8(res.mean_prob)
    ent_img, ent_lo, ent_hi = scale_to_uint8(res.entropy)
    write_pgm(prefix + "_prob.pgm", prob_img)
    write_pgm(prefix + "_entropy.pgm", ent_img)
    with open(prefix + "_scale.txt", "w", encoding="utf-8") as fh:
        fh.write(f"config_hash: {cfg.arch_hash()}\n")
        fh.write(f"prob_min: {prob_lo:.8f}\nprob_max: {prob_hi:.8f}\n")
        fh.write(f"entropy_min: {ent_lo:.8f}\nentropy_max: {ent_hi:.8f}\n")
        fh.write(f"mc_samples: {res.n_samples}\n")
    print(f"wrote {prefix}_mask.pgm, {prefix}_prob.pgm, {prefix}_entropy.pgm")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvlseg",
        description="Prompt-conditioned segmentation with probabilistic "
                    "vision-language adapters")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--ood", action="store_true", help="also write the shifted test split")
    p.add_argument("--style", default="original", choices=STYLES)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on corpus splits")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--splits", default="test,test_ood")
    p.add_argument("--mc-samples", type=int, default=0,
                   help="override the configured Monte-Carlo pass count")
    p.add_argument("--report", default="", help="output path prefix for the report")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", help="segment one image given a text prompt")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--mc-samples", type=int, default=0)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(fn=cmd_infer)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IOError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
