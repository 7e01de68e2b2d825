"""Command-line entry point: ``synthattr <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from ..analysis import EmbeddingSet, separation_report, tsne_embed, write_embedding_csv, write_scatter_svg
from ..augment import KINDS as AUG_KINDS
from ..augment import AugmentationSpec, expand_with_augmentations
from ..errors import ConfigError, SynthAttrError
from ..features import mel_spectrogram, log_mel, mfcc, stft_power, write_feature_bin, write_feature_csv
from .config import config_keys, load_config
from .evaluate import collect_embeddings, evaluate, load_predictor, predict_unlabeled
from .fixture import generate_fixture_corpus, scaled_durations
from .manifest import read_manifest, stratified_split, write_manifest
from .train import train_model

log = logging.getLogger("synthattr")


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_fixture(args) -> int:
    durations = scaled_durations(args.duration_scale)
    manifest = generate_fixture_corpus(_ints(args.classes), args.per_class, args.seed, args.out, durations, args.sample_rate)
    print(f"wrote {len(manifest)} clips and manifest.csv to {args.out}")
    return 0


def cmd_split(args) -> int:
    fractions = tuple(_floats(args.fractions))
    if len(fractions) != 3:
        raise ConfigError("--fractions needs three comma-separated values")
    manifest = read_manifest(args.manifest, seed=args.seed)
    out = stratified_split(manifest, fractions, args.seed)
    write_manifest(out, args.out or args.manifest)
    print(" ".join(f"{k}={v}" for k, v in sorted(out.counts().items())))
    return 0


def cmd_augment(args) -> int:
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    for k in kinds:
        if k not in AUG_KINDS:
            raise ConfigError(f"unknown augmentation kind {k!r}")
    manifest = read_manifest(args.manifest, seed=args.seed)
    out = expand_with_augmentations(manifest, [AugmentationSpec(k) for k in kinds], args.sample_rate)
    write_manifest(out, args.out or args.manifest)
    print(" ".join(f"{k}={v}" for k, v in sorted(out.counts().items())))
    return 0


def cmd_features(args) -> int:
    from .data import load_entry

    manifest = read_manifest(args.manifest, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = manifest.subset(args.split) if args.split else manifest.entries
    for entry in entries:
        clip = load_entry(manifest, entry, args.sample_rate, args.clip_seconds)
        if args.kind == "mfcc":
            feat = mfcc(clip)
        else:
            feat = stft_power(clip)
            if args.kind in ("mel_spectrogram", "log_mel"):
                feat = mel_spectrogram(feat)
            if args.kind == "log_mel":
                feat = log_mel(feat)
        name = entry.relative_path.replace("/", "__").replace("@", "_")
        if args.format == "csv":
            write_feature_csv(feat, out_dir / f"{name}.{args.kind}.csv")
        else:
            write_feature_bin(feat, out_dir / f"{name}.{args.kind}.bin")
    print(f"wrote {len(entries)} {args.kind} files to {out_dir}")
    return 0


def _train_config(args):
    overrides = {k: getattr(args, k) for k in config_keys() if getattr(args, k, None) is not None}
    return load_config(args.config, overrides, args.profile)


def cmd_train(args) -> int:
    config = _train_config(args)
    manifest = read_manifest(config.manifest, config.data_root or None, config.seed)
    result = train_model(config, manifest, on_epoch=lambda r: print(
        f"epoch {r['epoch']} lr {r['lr']:.3g} loss {r['train_loss']:.4f} "
        f"train {r['train_accuracy']:.2f} val {r['val_accuracy']:.2f}", flush=True))
    print(f"run directory: {result.run_dir}")
    return 0


def _run_manifest(args, predictor):
    config = predictor.config
    path = args.manifest or config.manifest
    return read_manifest(path, config.data_root or None, config.seed)


def cmd_evaluate(args) -> int:
    predictor = load_predictor(args.run, args.checkpoint)
    manifest = _run_manifest(args, predictor)
    if args.augmented:
        from .data import prepare_manifest

        manifest = prepare_manifest(manifest, True)
    result = evaluate(predictor, manifest, args.split, args.run, include_augmented=args.augmented)
    print(f"accuracy {result.accuracy:.2f} on {result.confusion.total} {args.split} clips")
    print(result.confusion.to_csv(), end="")
    return 0


def cmd_embed(args) -> int:
    run = Path(args.run)
    predictor = None if args.mfcc else load_predictor(run, args.checkpoint)
    if predictor is not None:
        manifest = _run_manifest(args, predictor)
        source = predictor.config.model
        vecs, labels = collect_embeddings(predictor, manifest, args.split)
    else:
        if not args.manifest:
            raise ConfigError("--mfcc needs --manifest")
        manifest = read_manifest(args.manifest)
        source = "mfcc"
        vecs, labels = collect_embeddings(None, manifest, args.split, args.clip_seconds)
    report = separation_report(EmbeddingSet(vecs, labels, source))
    points = tsne_embed(vecs, args.perplexity, args.iterations, args.seed)
    run.mkdir(parents=True, exist_ok=True)
    write_embedding_csv(run / "embeddings.csv", points, labels, source)
    write_scatter_svg(run / "tsne.svg", points, labels, f"t-SNE of {source} embeddings ({args.split})")
    print(f"silhouette {report.silhouette:.3f}, mean intra-class dispersion {report.mean_intra_dispersion:.3f}")
    return 0


def cmd_predict(args) -> int:
    predictor = load_predictor(args.run, args.checkpoint)
    manifest = _run_manifest(args, predictor)
    out = Path(args.out) if args.out else Path(args.run) / "predictions.csv"
    rows = predict_unlabeled(predictor, manifest, out, args.split)
    failed = sum(1 for _, p in rows if p == "failed")
    print(f"wrote {len(rows)} predictions to {out} ({failed} failed)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synthattr", description="Synthetic speech attribution experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="generate the synthetic stand-in corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--classes", default="0,1,2,3,4,5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration-scale", type=float, default=1.0, help="shrink the per-class duration model")
    p.add_argument("--sample-rate", type=int, default=16000)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("split", help="stratified train/val/test assignment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--fractions", default="0.72,0.08,0.20")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", help="append augmented variants to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--kinds", default=",".join(AUG_KINDS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("features", help="dump per-clip feature matrices")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("stft_power", "mel_spectrogram", "log_mel", "mfcc"), default="mfcc")
    p.add_argument("--format", choices=("csv", "bin"), default="bin")
    p.add_argument("--split")
    p.add_argument("--clip-seconds", type=float, default=6.0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train a model; every config key is also a flag")
    p.add_argument("--config", help="key = value file")
    p.add_argument("--profile", choices=("paper", "desk"))
    for key in config_keys():
        p.add_argument(f"--{key}", dest=key, metavar="VALUE")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (
        ("evaluate", cmd_evaluate, "accuracy and confusion matrix of a run"),
        ("embed", cmd_embed, "dump embeddings and a t-SNE map"),
        ("predict", cmd_predict, "label the eval split"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--run", required=True, help="run directory")
        p.add_argument("--checkpoint", help="defaults to <run>/checkpoint.bin")
        p.add_argument("--manifest", help="defaults to the manifest named in the run config")
        p.set_defaults(func=func)
        if name == "evaluate":
            p.add_argument("--split", default="test")
            p.add_argument("--augmented", action="store_true", help="also score augmented variants")
        elif name == "embed":
            p.add_argument("--split", default="test")
            p.add_argument("--mfcc", action="store_true", help="use pooled MFCC vectors instead of a network")
            p.add_argument("--clip-seconds", type=float, default=3.0)
            p.add_argument("--perplexity", type=float, default=30.0)
            p.add_argument("--iterations", type=int, default=1000)
            p.add_argument("--seed", type=int, default=0)
        else:
            p.add_argument("--split", default="eval")
            p.add_argument("--out")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SynthAttrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
