"""Corpus ingestion: video records, manifests, feature files, resampling.

A corpus is a manifest (JSON lines, header record first) plus one binary
feature file per video.  Feature files hold the per-snippet feature matrix
for one video:

    magic  b"ECMF"        4 bytes
    T      uint32 LE      snippet count
    D      uint32 LE      feature dimension
    data   T * D float32 LE, row major

Manifest format, one JSON object per line:

    {"categories": ["run", "jump"]}                          <- header
    {"video_id": "...", "duration": 12.5,
     "feature_path": "features/v0.ecmf", "labels": ["run"],
     "segments": [{"start": 1.0, "end": 3.5, "label": "run"}]}

Ground-truth segments and detections share one record schema
{video_id, start, end, label, score}; see localize.py for the file helpers.
"""

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

FEATURE_MAGIC = b"ECMF"

# Snippet counts used by the common untrimmed-video benchmarks.
SNIPPET_PRESETS = {
    "thumos14": 750,
    "activitynet12": 100,
    "activitynet13": 100,
}


class ManifestError(ValueError):
    """Raised for malformed or inconsistent manifest content."""


class FeatureFileError(ValueError):
    """Raised for malformed feature files."""


@dataclass(frozen=True)
class GroundTruthSegment:
    start: float
    end: float
    label: str


@dataclass(frozen=True)
class VideoRecord:
    """Per-video metadata; feature payload lives in a separate file."""

    video_id: str
    duration: float
    feature_path: str | None
    labels: tuple[str, ...]
    ground_truth: tuple[GroundTruthSegment, ...] = ()

    def __post_init__(self):
        if self.duration <= 0:
            raise ManifestError(f"{self.video_id}: duration must be positive, got {self.duration}")
        label_set = set(self.labels)
        for seg in self.ground_truth:
            if not (0 <= seg.start < seg.end <= self.duration):
                raise ManifestError(
                    f"{self.video_id}: segment [{seg.start}, {seg.end}] outside [0, {self.duration}]"
                )
            if seg.label not in label_set:
                raise ManifestError(
                    f"{self.video_id}: segment label {seg.label!r} not in video labels {sorted(label_set)}"
                )


@dataclass(frozen=True, eq=False)
class Video:
    """A record together with its loaded feature sequence (T, D)."""

    record: VideoRecord
    features: np.ndarray

    def __post_init__(self):
        check_feature_sequence(self.features)
        self.features.setflags(write=False)


@dataclass(frozen=True)
class Manifest:
    categories: tuple[str, ...]
    records: tuple[VideoRecord, ...]


def check_feature_sequence(values):
    """Validate a (T, D) snippet feature matrix; returns it unchanged."""
    if values.ndim != 2:
        raise FeatureFileError(f"feature sequence must be 2-D, got shape {values.shape}")
    if values.shape[0] < 3:
        raise FeatureFileError(f"need at least 3 snippets, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise FeatureFileError("feature sequence contains non-finite values")
    return values


def snippet_span(t, snippet_count, duration):
    """Seconds covered by 0-based snippet t: [t*duration/T, (t+1)*duration/T]."""
    return t * duration / snippet_count, (t + 1) * duration / snippet_count


def write_features(path, values):
    """Write a (T, D) feature matrix in the binary feature-file format."""
    values = np.ascontiguousarray(values, dtype=np.float32)
    check_feature_sequence(values)
    t_len, dim = values.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", t_len, dim))
        fh.write(values.tobytes(order="C"))


def read_features(path):
    """Read a feature file; returns a float32 (T, D) matrix."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != FEATURE_MAGIC:
        raise FeatureFileError(f"{path}: bad magic {blob[:4]!r}, expected {FEATURE_MAGIC!r}")
    if len(blob) < 12:
        raise FeatureFileError(f"{path}: truncated header")
    t_len, dim = struct.unpack("<II", blob[4:12])
    payload = np.frombuffer(blob[12:], dtype="<f4")
    if payload.size != t_len * dim:
        raise FeatureFileError(
            f"{path}: payload holds {payload.size} floats, header says {t_len}x{dim}={t_len * dim}"
        )
    values = payload.reshape(t_len, dim).copy()
    check_feature_sequence(values)
    return values


def load_features(record, root=None):
    """Load the feature sequence for a record; relative paths resolve under root."""
    if not record.feature_path:
        raise FeatureFileError(f"{record.video_id}: record has no feature path")
    path = record.feature_path
    if root is not None and not os.path.isabs(path):
        path = os.path.join(root, path)
    return read_features(path)


def resample_snippets(values, target):
    """Row-select a (T, D) sequence to exactly `target` rows.

    Row i of the output is input row floor(i * (T - 1) / (target - 1) + 0.5),
    i.e. nearest-index selection on a uniform grid.  Identity when target == T.
    """
    if target < 3:
        raise ValueError(f"target snippet count must be >= 3, got {target}")
    t_len = values.shape[0]
    if target == t_len:
        return values
    idx = np.floor(np.arange(target) * (t_len - 1) / (target - 1) + 0.5).astype(np.intp)
    return values[idx]


def _parse_segment(obj, line_no):
    try:
        start = float(obj["start"])
        end = float(obj["end"])
        label = str(obj["label"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"malformed segment, line {line_no}: {exc}") from None
    if end <= start:
        raise ManifestError(f"segment end before start, line {line_no}")
    return GroundTruthSegment(start, end, label)


def _parse_record(obj, categories, line_no):
    try:
        video_id = str(obj["video_id"])
        duration = float(obj["duration"])
        feature_path = obj.get("feature_path")
        labels = tuple(str(lab) for lab in obj["labels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"malformed record, line {line_no}: {exc}") from None
    known = set(categories)
    for lab in labels:
        if lab not in known:
            raise ManifestError(f"unknown category {lab!r}, line {line_no}")
    segments = tuple(_parse_segment(s, line_no) for s in obj.get("segments", ()))
    try:
        return VideoRecord(video_id, duration, feature_path, labels, segments)
    except ManifestError as exc:
        raise ManifestError(f"{exc}, line {line_no}") from None


def load_manifest(path):
    """Parse a manifest file into a Manifest(categories, records)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"manifest not found: {path}")
    categories = None
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON, line {line_no}: {exc}") from None
            if categories is None:
                if "categories" not in obj:
                    raise ManifestError(f"first record must declare categories, line {line_no}")
                categories = tuple(str(c) for c in obj["categories"])
                if len(set(categories)) != len(categories):
                    raise ManifestError(f"duplicate category names, line {line_no}")
                continue
            records.append(_parse_record(obj, categories, line_no))
    if categories is None:
        raise ManifestError(f"{path}: empty manifest, missing header record")
    return Manifest(categories, tuple(records))


def write_manifest(path, categories, records):
    """Write a Manifest-compatible JSONL file."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"categories": list(categories)}) + "\n")
        for rec in records:
            obj = {
                "video_id": rec.video_id,
                "duration": rec.duration,
                "feature_path": rec.feature_path,
                "labels": list(rec.labels),
                "segments": [
                    {"start": seg.start, "end": seg.end, "label": seg.label}
                    for seg in rec.ground_truth
                ],
            }
            fh.write(json.dumps(obj) + "\n")


def encode_labels(labels, categories):
    """Binary label vector (C,) for a video's category-name labels."""
    index = {name: i for i, name in enumerate(categories)}
    y = np.zeros(len(categories), dtype=np.float64)
    for lab in labels:
        y[index[lab]] = 1.0
    return y


def load_corpus(manifest_path, snippets=None):
    """Load every video referenced by a manifest.

    Returns (videos, categories) with features optionally resampled to a
    common snippet count.
    """
    manifest = load_manifest(manifest_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    videos = []
    for rec in manifest.records:
        values = load_features(rec, root=root)
        if snippets is not None:
            values = resample_snippets(values, snippets)
        videos.append(Video(rec, values))
    return videos, list(manifest.categories)
