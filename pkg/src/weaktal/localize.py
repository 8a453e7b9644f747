"""Turn class activation sequences into scored temporal detections.

Pipeline per video: drop categories whose video-level score falls below tau,
min-max normalize each surviving CAS column over time, collect maximal
above-threshold snippet runs for every threshold in the grid, score each run
by its mean normalized activation times the video-level category score, and
prune with per-category NMS.
"""

import json
from dataclasses import dataclass

import numpy as np

from .datasets import snippet_span


@dataclass(frozen=True)
class Detection:
    video_id: str
    start: float
    end: float
    label: str
    score: float


@dataclass(frozen=True)
class LocalizeConfig:
    tau: float = 0.25
    tag_thresholds: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 10))
    nms_iou: float = 0.5

    def __post_init__(self):
        if not (0 < self.tau < 1):
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        ths = self.tag_thresholds
        if not ths or any(not (0 < t < 1) for t in ths) or list(ths) != sorted(ths):
            raise ValueError("tag thresholds must be sorted and strictly inside (0, 1)")
        if not (0 < self.nms_iou < 1):
            raise ValueError(f"nms_iou must lie in (0, 1), got {self.nms_iou}")


def temporal_iou(a, b):
    """Intersection over union of two (start, end) intervals on the time axis."""
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union if union > 0 else 0.0


def select_categories(s_e, tau):
    """Indices of categories whose video-level score reaches tau."""
    return [int(c) for c in np.flatnonzero(np.asarray(s_e) >= tau)]


def minmax_normalize(column):
    """Map a length-T column to [0, 1]; a constant column maps to all zeros."""
    column = np.asarray(column, dtype=np.float64)
    lo = column.min()
    hi = column.max()
    if hi == lo:
        return np.zeros_like(column)
    return (column - lo) / (hi - lo)


def threshold_runs(activation, threshold):
    """Maximal runs of consecutive snippets with activation >= threshold.

    Returns [(first_snippet, end_snippet_exclusive), ...] in temporal order.
    """
    above = np.asarray(activation) >= threshold
    flags = np.concatenate(([0], above.astype(np.int8), [0]))
    edges = np.diff(flags)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def tag_group(activation, thresholds, duration):
    """Candidate segments in seconds from a normalized activation column.

    Runs are collected independently per threshold; duplicates across
    thresholds are kept (NMS prunes them later).
    """
    t_len = len(activation)
    segments = []
    for threshold in thresholds:
        for lo, hi in threshold_runs(activation, threshold):
            start, _ = snippet_span(lo, t_len, duration)
            _, end = snippet_span(hi - 1, t_len, duration)
            segments.append((start, end))
    return segments


def score_proposal(run, activation, video_score):
    """Mean activation over the run's snippets, scaled by the category score."""
    lo, hi = run
    if hi <= lo:
        raise ValueError(f"empty proposal [{lo}, {hi})")
    return float(np.asarray(activation)[lo:hi].mean() * video_score)


def nms(detections, iou_thr):
    """Greedy non-maximum suppression within one (video, category) group.

    Keeps the highest-scoring detection, removes others overlapping it with
    IoU strictly above iou_thr, repeats.  Ties break by earlier start.
    """
    remaining = sorted(detections, key=lambda d: (-d.score, d.start, d.end))
    kept = []
    while remaining:
        best = remaining.pop(0)
        kept.append(best)
        remaining = [
            d for d in remaining if temporal_iou((best.start, best.end), (d.start, d.end)) <= iou_thr
        ]
    return kept


def localize(cas, s_e, video_id, duration, categories, cfg):
    """Full localization pipeline for one video.

    cas: (T, C) class activation sequence from the trained classifier;
    s_e: (C,) video-level category scores.  Returns a list of Detections.
    """
    t_len = cas.shape[0]
    detections = []
    for c in select_categories(s_e, cfg.tau):
        activation = minmax_normalize(cas[:, c])
        proposals = []
        for threshold in cfg.tag_thresholds:
            for run in threshold_runs(activation, threshold):
                score = score_proposal(run, activation, float(s_e[c]))
                start, _ = snippet_span(run[0], t_len, duration)
                _, end = snippet_span(run[1] - 1, t_len, duration)
                proposals.append(Detection(video_id, start, end, categories[c], score))
        detections.extend(nms(proposals, cfg.nms_iou))
    return detections


def ground_truth_detections(records):
    """Flatten records' ground-truth segments into the shared segment schema."""
    out = []
    for rec in records:
        for seg in rec.ground_truth:
            out.append(Detection(rec.video_id, seg.start, seg.end, seg.label, 1.0))
    return out


def write_segments(path, detections):
    """Write detections (or ground truth) as a JSON array of segment records."""
    rows = [
        {"video_id": d.video_id, "start": d.start, "end": d.end, "label": d.label, "score": d.score}
        for d in detections
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=1)
        fh.write("\n")


def load_segments(path):
    """Read a JSON segment-record file written by write_segments."""
    with open(path, "r", encoding="utf-8") as fh:
        rows = json.load(fh)
    return [
        Detection(str(r["video_id"]), float(r["start"]), float(r["end"]), str(r["label"]), float(r.get("score", 1.0)))
        for r in rows
    ]
