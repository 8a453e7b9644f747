"""Experiment drivers: train a model variant, localize a test split, score it.

The variant grid mirrors the component ablation: each single stream alone,
the shared two-stream model, the shared model plus the a2c term, the full
objective without classifier sharing, and the full model.  The ensemble
helpers fuse two independently trained single-stream models, either by
merging their detections or by mixing their class activation sequences.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import model as M
from .evaluate import frame_accuracy, fuse_cas, map_evaluate, merge_detections
from .localize import ground_truth_detections, localize
from .train import train

# Ablation grid in presentation order.
VARIANTS = {
    "pre_only": {"use_post_stream": False, "use_c2c": False, "use_a2c": False},
    "post_only": {"use_pre_stream": False, "use_c2c": False, "use_a2c": False},
    "shared": {"use_c2c": False, "use_a2c": False},
    "shared_a2c": {"use_c2c": False},
    "unshared_full": {"share_classifier": False},
    "full": {},
}


def variant_config(base_cfg, name):
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
    return replace(base_cfg, **VARIANTS[name])


@dataclass(eq=False)
class VariantResult:
    name: str
    train_result: object
    cas_by_video: dict           # video_id -> (T, C) CAS on the test split
    scores_by_video: dict        # video_id -> (C,) video-level scores
    detections: list
    map50: float
    frame_acc: float


def infer_video(video, params, k_ratio, score_head="pre"):
    """CAS and video-level scores for one video under trained parameters.

    score_head selects which stream's video-level probabilities gate the
    localization: "pre" (top-k pooled softmax, the normal protocol) or
    "post" (softmax over the aggregated-feature logits, the natural gate for
    a model trained without the pre-stream loss).
    """
    fwd = M.forward_video(np.asarray(video.features, dtype=np.float64), params, k_ratio)
    if score_head == "post":
        return fwd.cas, M.softmax(fwd.logits_post)
    return fwd.cas, fwd.s_e


def localization_scores(cas_by_video, scores_by_video, test_videos, categories, loc_cfg):
    """Detections plus mAP@0.5 for a set of per-video CAS/score pairs."""
    detections = []
    for video in test_videos:
        rec = video.record
        detections.extend(
            localize(
                cas_by_video[rec.video_id],
                scores_by_video[rec.video_id],
                rec.video_id,
                rec.duration,
                categories,
                loc_cfg,
            )
        )
    gts = ground_truth_detections([v.record for v in test_videos])
    report = map_evaluate(detections, gts, [0.5])
    return detections, report.map_by_threshold[0.5]


def run_variant(name, train_videos, test_videos, categories, base_cfg, loc_cfg):
    """Train one ablation variant and evaluate it on the test split."""
    cfg = variant_config(base_cfg, name)
    result = train(train_videos, categories, cfg)
    params = result.best_params
    score_head = "pre" if cfg.use_pre_stream else "post"
    cas_by_video = {}
    scores_by_video = {}
    for video in test_videos:
        cas, s_e = infer_video(video, params, cfg.k_ratio, score_head)
        cas_by_video[video.record.video_id] = cas
        scores_by_video[video.record.video_id] = s_e
    detections, map50 = localization_scores(cas_by_video, scores_by_video, test_videos, categories, loc_cfg)
    acc = frame_accuracy(cas_by_video, scores_by_video, [v.record for v in test_videos], categories, loc_cfg.tau)
    return VariantResult(name, result, cas_by_video, scores_by_video, detections, map50, acc)


def ensemble_scores(pre, post, test_videos, categories, loc_cfg, k_ratio, lambdas=(0.2, 0.4, 0.6, 0.8)):
    """Model-ensemble baselines built from two independently trained streams.

    Returns {"merge": mAP, "fuse@<lam>": mAP, ...} where "merge" pools both
    models' detections through NMS and "fuse" mixes their CAS before
    localization (video-level scores re-pooled from the fused CAS).
    """
    out = {}
    merged = merge_detections(pre.detections, post.detections, loc_cfg.nms_iou)
    gts = ground_truth_detections([v.record for v in test_videos])
    out["merge"] = map_evaluate(merged, gts, [0.5]).map_by_threshold[0.5]

    for lam in lambdas:
        cas_by_video = {}
        scores_by_video = {}
        for video in test_videos:
            vid = video.record.video_id
            fused = fuse_cas(pre.cas_by_video[vid], post.cas_by_video[vid], lam)
            _, s_e = M.pre_stream_score(fused, k_ratio)
            cas_by_video[vid] = fused
            scores_by_video[vid] = s_e
        _, map50 = localization_scores(cas_by_video, scores_by_video, test_videos, categories, loc_cfg)
        out[f"fuse@{lam}"] = map50
    return out


def ablation_table(train_videos, test_videos, categories, base_cfg, loc_cfg):
    """Run all six variants; returns [(name, flags, map50, frame_acc), ...]."""
    rows = []
    for name in VARIANTS:
        res = run_variant(name, train_videos, test_videos, categories, base_cfg, loc_cfg)
        cfg = variant_config(base_cfg, name)
        rows.append(
            (
                name,
                {
                    "pre_stream": cfg.use_pre_stream,
                    "post_stream": cfg.use_post_stream,
                    "share_classifier": cfg.share_classifier,
                    "use_a2c": cfg.use_a2c,
                    "use_c2c": cfg.use_c2c,
                },
                res.map50,
                res.frame_acc,
            )
        )
    return rows
