"""Detection metrics: temporal IoU matching, per-class AP, mAP tables,
frame accuracy, and the two model-ensemble fusion baselines.

AP follows the interpolated (precision envelope) convention with greedy
one-to-one matching by descending score, the protocol of the standard
untrimmed-video evaluation toolkits.  Classes without ground-truth instances
are excluded from the mAP mean.
"""

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .localize import nms, temporal_iou

__all__ = [
    "EvalReport",
    "average_precision",
    "map_evaluate",
    "frame_accuracy",
    "fuse_cas",
    "merge_detections",
    "temporal_iou",
]


@dataclass(frozen=True)
class EvalReport:
    map_by_threshold: dict       # {iou threshold: mAP}
    ap_table: dict               # {iou threshold: {class name: AP}}
    average_map: float           # mean of map_by_threshold values
    frame_acc: float | None = None


def average_precision(detections, ground_truth, iou_thr):
    """Interpolated AP for one category across videos.

    Detections are matched in descending score order to the not-yet-matched
    ground-truth segment of the same video with the highest IoU >= iou_thr.
    Returns 0.0 when there is no ground truth.
    """
    n_gt = len(ground_truth)
    if n_gt == 0:
        return 0.0
    if not detections:
        return 0.0
    gts_by_video = defaultdict(list)
    for g in ground_truth:
        gts_by_video[g.video_id].append(g)
    matched = {id(g): False for g in ground_truth}

    order = sorted(detections, key=lambda d: (-d.score, d.video_id, d.start, d.end))
    tp = np.zeros(len(order))
    for i, det in enumerate(order):
        best_iou = 0.0
        best = None
        for g in gts_by_video.get(det.video_id, ()):
            if matched[id(g)]:
                continue
            iou = temporal_iou((det.start, det.end), (g.start, g.end))
            if iou >= iou_thr and iou > best_iou:
                best_iou = iou
                best = g
        if best is not None:
            matched[id(best)] = True
            tp[i] = 1.0
    tp_cum = np.cumsum(tp)
    recall = tp_cum / n_gt
    precision = tp_cum / np.arange(1, len(order) + 1)
    # precision envelope, then area under the envelope/recall curve
    mprec = np.concatenate(([0.0], precision, [0.0]))
    mrec = np.concatenate(([0.0], recall, [1.0]))
    for i in range(len(mprec) - 2, -1, -1):
        mprec[i] = max(mprec[i], mprec[i + 1])
    steps = np.flatnonzero(mrec[1:] != mrec[:-1]) + 1
    return float(np.sum((mrec[steps] - mrec[steps - 1]) * mprec[steps]))


def map_evaluate(detections, ground_truth, thresholds, frame_acc=None):
    """mAP at each IoU threshold plus the per-class AP table.

    Classes are taken from the ground truth; classes with zero ground-truth
    instances do not enter the mean.
    """
    classes = sorted({g.label for g in ground_truth})
    dets_by_class = defaultdict(list)
    for d in detections:
        dets_by_class[d.label].append(d)
    gts_by_class = defaultdict(list)
    for g in ground_truth:
        gts_by_class[g.label].append(g)

    map_by_threshold = {}
    ap_table = {}
    for thr in thresholds:
        aps = {
            cls: average_precision(dets_by_class[cls], gts_by_class[cls], thr) for cls in classes
        }
        ap_table[thr] = aps
        map_by_threshold[thr] = float(np.mean(list(aps.values()))) if aps else 0.0
    average_map = float(np.mean(list(map_by_threshold.values()))) if map_by_threshold else 0.0
    return EvalReport(map_by_threshold, ap_table, average_map, frame_acc)


def _segment_snippets(seg, t_len, duration):
    """Snippets whose centers fall inside [start, end)."""
    centers = (np.arange(t_len) + 0.5) * duration / t_len
    return np.flatnonzero((centers >= seg.start) & (centers < seg.end))


def frame_accuracy(cas_by_video, scores_by_video, records, categories, tau):
    """Point-wise classification accuracy over ground-truth action snippets.

    Per video, categories scoring below tau are rejected; each action snippet
    is predicted as the argmax over the surviving CAS columns (ties break
    toward the lower category index).  Background snippets are ignored.  If
    no category survives, all of that video's action snippets count as wrong.
    """
    index = {name: i for i, name in enumerate(categories)}
    correct = 0
    total = 0
    for rec in records:
        if rec.video_id not in cas_by_video or not rec.ground_truth:
            continue
        cas = cas_by_video[rec.video_id]
        scores = scores_by_video[rec.video_id]
        t_len = cas.shape[0]
        survivors = np.flatnonzero(np.asarray(scores) >= tau)
        for seg in rec.ground_truth:
            snippets = _segment_snippets(seg, t_len, rec.duration)
            total += len(snippets)
            if survivors.size == 0:
                continue
            sub = cas[np.ix_(snippets, survivors)]
            pred = survivors[np.argmax(sub, axis=1)]
            correct += int(np.sum(pred == index[seg.label]))
    return correct / total if total else 0.0


def fuse_cas(cas_a, cas_b, lam):
    """Convex combination lam * cas_a + (1 - lam) * cas_b."""
    if cas_a.shape != cas_b.shape:
        raise ValueError(f"shape mismatch: {cas_a.shape} vs {cas_b.shape}")
    if not (0 <= lam <= 1):
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return lam * np.asarray(cas_a) + (1.0 - lam) * np.asarray(cas_b)


def merge_detections(dets_a, dets_b, nms_iou):
    """Pool two detection sets, then per-(video, category) NMS."""
    groups = defaultdict(list)
    for d in list(dets_a) + list(dets_b):
        groups[(d.video_id, d.label)].append(d)
    merged = []
    for key in sorted(groups):
        merged.extend(nms(groups[key], nms_iou))
    return merged
