"""Command line entry point.

Subcommands: synth, train, infer, eval, ablate, gradcheck.  Every run that
trains writes a reproducibility record (resolved config, seed, corpus hash,
package version) next to its outputs.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys

from . import __version__
from .checkpoint import load_arrays, load_checkpoint, save_arrays
from .config import ConfigError, config_as_dict, load_config, parse_threshold_range
from .datasets import load_corpus, load_manifest, write_features, write_manifest
from .evaluate import frame_accuracy, map_evaluate
from .experiments import ablation_table, infer_video
from .localize import LocalizeConfig, ground_truth_detections, load_segments, localize, write_segments
from .synthetic import SyntheticCorpusSpec, corpus_fingerprint, generate_corpus
from .train import run_gradient_check, train


def _write_run_record(out_dir, cfg, corpus_hash):
    record = {
        "version": __version__,
        "seed": cfg.train.seed,
        "corpus_hash": corpus_hash,
        "config": config_as_dict(cfg),
    }
    with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_experiment_corpus(cfg):
    """Resolve the config's data section into (train videos, test videos, categories)."""
    cfg.require_data()
    if cfg.synthetic is not None:
        corpus = generate_corpus(cfg.synthetic)
        return list(corpus.train), list(corpus.test), list(corpus.categories)
    train_videos, categories = load_corpus(cfg.manifest, cfg.train.snippets)
    test_videos = []
    if cfg.test_manifest:
        test_videos, test_categories = load_corpus(cfg.test_manifest, cfg.train.snippets)
        if test_categories != categories:
            raise ConfigError("train and test manifests declare different categories")
    return train_videos, test_videos, categories


def cmd_synth(args):
    spec = SyntheticCorpusSpec(
        num_classes=args.classes,
        feature_dim=args.dim,
        snippets=args.snippets,
        n_train=args.train_videos,
        n_test=args.test_videos,
        action_snr=args.snr,
        max_instances_per_video=args.max_instances,
        seed=args.seed,
    )
    corpus = generate_corpus(spec)
    feat_dir = os.path.join(args.out, "features")
    os.makedirs(feat_dir, exist_ok=True)

    def dump(videos, manifest_name):
        records = []
        for video in videos:
            rel = os.path.join("features", f"{video.record.video_id}.ecmf")
            write_features(os.path.join(args.out, rel), video.features)
            records.append(dataclasses.replace(video.record, feature_path=rel))
        write_manifest(os.path.join(args.out, manifest_name), corpus.categories, records)
        return records

    dump(corpus.train, "train.jsonl")
    test_records = dump(corpus.test, "test.jsonl")
    write_segments(os.path.join(args.out, "groundtruth.json"), ground_truth_detections(test_records))
    print(f"wrote {spec.n_train}+{spec.n_test} videos, {spec.num_classes} categories -> {args.out}")
    return 0


def cmd_train(args):
    cfg = load_config(args.config, _overrides(args))
    out_dir = args.out or cfg.out
    if not out_dir:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    os.makedirs(out_dir, exist_ok=True)
    train_videos, _, categories = _load_experiment_corpus(cfg)
    result = train(train_videos, categories, cfg.train, out_dir=out_dir)
    _write_run_record(out_dir, cfg, corpus_fingerprint(train_videos))
    last = result.epoch_log[-1]
    print(
        f"trained {cfg.train.epochs} epochs; final loss {last.total:.4f} "
        f"(best epoch {result.best_epoch}); outputs in {out_dir}"
    )
    return 0


def cmd_infer(args):
    params, meta = load_checkpoint(args.checkpoint)
    categories = meta["categories"]
    train_meta = meta.get("config", {})
    k_ratio = train_meta.get("k_ratio", 1.0 / 8.0)
    snippets = train_meta.get("snippets")
    score_head = "pre" if train_meta.get("use_pre_stream", True) else "post"
    videos, manifest_cats = load_corpus(args.manifest, snippets)
    if list(manifest_cats) != list(categories):
        print("error: manifest categories do not match the checkpoint", file=sys.stderr)
        return 2
    loc_cfg = LocalizeConfig(tau=args.tau, nms_iou=args.nms_iou)
    cas_by_video = {}
    scores_by_video = {}
    detections = []
    for video in videos:
        rec = video.record
        cas, s_e = infer_video(video, params, k_ratio, score_head)
        cas_by_video[rec.video_id] = cas
        scores_by_video[rec.video_id] = s_e
        detections.extend(localize(cas, s_e, rec.video_id, rec.duration, categories, loc_cfg))
    write_segments(args.out, detections)
    if args.dump_cas:
        arrays = {}
        for vid, cas in cas_by_video.items():
            arrays[f"cas/{vid}"] = cas
            arrays[f"scores/{vid}"] = scores_by_video[vid]
        save_arrays(args.dump_cas, arrays, {"categories": list(categories), "tau": args.tau})
    print(f"wrote {len(detections)} detections -> {args.out}")
    return 0


def cmd_eval(args):
    detections = load_segments(args.detections)
    gts = load_segments(args.groundtruth)
    thresholds = parse_threshold_range(args.thresholds)
    report = map_evaluate(detections, gts, thresholds)

    acc = None
    if args.cas and args.manifest:
        arrays, meta = load_arrays(args.cas)
        manifest = load_manifest(args.manifest)
        cas_by_video = {k[len("cas/"):]: v for k, v in arrays.items() if k.startswith("cas/")}
        scores_by_video = {k[len("scores/"):]: v for k, v in arrays.items() if k.startswith("scores/")}
        acc = frame_accuracy(cas_by_video, scores_by_video, manifest.records, meta["categories"], args.tau)

    writer = csv.writer(sys.stdout)
    writer.writerow(["threshold", "mAP"])
    for thr in thresholds:
        writer.writerow([thr, f"{report.map_by_threshold[thr]:.4f}"])
    writer.writerow(["average", f"{report.average_map:.4f}"])
    if acc is not None:
        writer.writerow(["frame_accuracy", f"{acc:.4f}"])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["threshold", "mAP"])
            for thr in thresholds:
                out.writerow([thr, report.map_by_threshold[thr]])
            out.writerow(["average", report.average_map])
            if acc is not None:
                out.writerow(["frame_accuracy", acc])
        per_class = os.path.join(os.path.dirname(args.out) or ".", "per_class_ap.csv")
        with open(per_class, "w", newline="") as fh:
            out = csv.writer(fh)
            classes = sorted({g.label for g in gts})
            out.writerow(["threshold"] + classes)
            for thr in thresholds:
                out.writerow([thr] + [report.ap_table[thr][c] for c in classes])
    return 0


def cmd_ablate(args):
    cfg = load_config(args.config, _overrides(args))
    out_dir = args.out or cfg.out
    if not out_dir:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    os.makedirs(out_dir, exist_ok=True)
    train_videos, test_videos, categories = _load_experiment_corpus(cfg)
    if not test_videos:
        raise ConfigError("ablate needs a test split (synthetic corpus or test_manifest)")
    rows = ablation_table(train_videos, test_videos, categories, cfg.train, cfg.localize)
    path = os.path.join(out_dir, "ablation.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "pre_stream", "post_stream", "share_classifier", "use_a2c", "use_c2c", "map@0.5", "frame_accuracy"])
        for name, flags, map50, acc in rows:
            writer.writerow(
                [name, flags["pre_stream"], flags["post_stream"], flags["share_classifier"],
                 flags["use_a2c"], flags["use_c2c"], f"{map50:.4f}", f"{acc:.4f}"]
            )
    _write_run_record(out_dir, cfg, corpus_fingerprint(train_videos))
    for name, _, map50, acc in rows:
        print(f"{name:>14s}  mAP@0.5={map50:.4f}  frame_acc={acc:.4f}")
    print(f"table -> {path}")
    return 0


def cmd_gradcheck(args):
    results = run_gradient_check(seed=args.seed, epsilon=args.epsilon)
    worst = 0.0
    for flags, err in results:
        tag = "share" if flags["share_classifier"] else "unshared"
        print(
            f"{tag:>9s} c2c={int(flags['use_c2c'])} a2c={int(flags['use_a2c'])}: "
            f"max rel err {err:.3e}"
        )
        worst = max(worst, err)
    ok = worst <= args.tolerance
    print(f"worst case {worst:.3e} ({'PASS' if ok else 'FAIL'} at {args.tolerance:g})")
    return 0 if ok else 1


def _overrides(args):
    mapping = {
        "seed": "train.seed",
        "epochs": "train.epochs",
        "hidden": "train.hidden",
        "batch_size": "train.batch_size",
        "learning_rate": "train.learning_rate",
    }
    out = {}
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="weaktal", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with known ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--snippets", type=int, default=60)
    p.add_argument("--train-videos", type=int, default=160)
    p.add_argument("--test-videos", type=int, default=40)
    p.add_argument("--snr", type=float, default=4.0)
    p.add_argument("--max-instances", type=int, default=3)
    p.set_defaults(func=cmd_synth)

    for name, fn, help_text in (
        ("train", cmd_train, "train a model from a config file"),
        ("ablate", cmd_ablate, "run the six-variant component ablation grid"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--hidden", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.set_defaults(func=fn)

    p = sub.add_parser("infer", help="localize actions with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=0.25)
    p.add_argument("--nms-iou", dest="nms_iou", type=float, default=0.5)
    p.add_argument("--dump-cas", dest="dump_cas")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--detections", required=True)
    p.add_argument("--groundtruth", required=True)
    p.add_argument("--thresholds", default="0.1:0.1:0.7")
    p.add_argument("--out")
    p.add_argument("--cas", help="array dump from 'infer --dump-cas' for frame accuracy")
    p.add_argument("--manifest", help="manifest with ground truth, needed with --cas")
    p.add_argument("--tau", type=float, default=0.25)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the training gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
