"""Synthetic corpora with planted action instances and known ground truth.

Videos alternate background and action stretches.  Action snippets are a
class prototype plus Gaussian noise scaled by 1 / action_snr; background
snippets use a dedicated background prototype.  Prototypes are unit vectors
drawn once per corpus, so class separability is controlled entirely by
action_snr.  Everything is deterministic given the spec seed.
"""

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .datasets import GroundTruthSegment, Video, VideoRecord

# Planted instances span a bounded snippet range so localization quality,
# not instance size, separates the model variants; several instances of one
# category per video is the usual structure of untrimmed sports footage.
INSTANCE_SNIPPET_RANGE = (5, 10)
MIN_GAP_SNIPPETS = 2


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    num_classes: int = 5
    feature_dim: int = 32
    snippets: int = 60
    n_train: int = 160
    n_test: int = 40
    action_snr: float = 4.0
    max_instances_per_video: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 categories")
        if self.feature_dim < 2:
            raise ValueError("need feature_dim >= 2")
        if self.snippets < 9:
            raise ValueError("need at least 9 snippets per video")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("video counts must be >= 1")
        if self.action_snr <= 0:
            raise ValueError("action_snr must be positive")
        if self.max_instances_per_video < 1:
            raise ValueError("max_instances_per_video must be >= 1")


@dataclass(frozen=True)
class SyntheticCorpus:
    spec: SyntheticCorpusSpec
    categories: tuple[str, ...]
    prototypes: np.ndarray  # (C, D) class prototypes, unit rows
    background: np.ndarray  # (D,) background prototype
    train: tuple[Video, ...]
    test: tuple[Video, ...]


def _unit_rows(rng, n, dim):
    vecs = rng.standard_normal((n, dim))
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def _draw_prototypes(rng, num_classes, dim):
    # Redraw until pairwise non-collinear; a single draw succeeds in practice.
    while True:
        protos = _unit_rows(rng, num_classes + 1, dim)
        gram = np.abs(protos @ protos.T)
        np.fill_diagonal(gram, 0.0)
        if gram.max() < 0.999:
            return protos[:num_classes], protos[num_classes]


def _plan_instances(rng, t_len, max_instances):
    """Place n in [1, max_instances] non-overlapping instances in t_len snippets.

    Instance lengths are drawn uniformly from INSTANCE_SNIPPET_RANGE; the
    remaining snippets become background, spread randomly over the gaps
    (inner gaps stay >= MIN_GAP_SNIPPETS).  Returns (start, end) snippet
    pairs in temporal order.
    """
    lo, hi = INSTANCE_SNIPPET_RANGE
    n_inst = int(rng.integers(1, max_instances + 1))
    while n_inst > 1 and n_inst * lo + (n_inst - 1) * MIN_GAP_SNIPPETS > t_len:
        n_inst -= 1
    max_len = min(hi, (t_len - (n_inst - 1) * MIN_GAP_SNIPPETS) // n_inst)
    lengths = rng.integers(lo, max_len + 1, size=n_inst)
    slack = t_len - int(lengths.sum()) - (n_inst - 1) * MIN_GAP_SNIPPETS
    n_gaps = n_inst + 1
    extras = rng.multinomial(slack, np.full(n_gaps, 1.0 / n_gaps))
    spans = []
    cursor = extras[0]
    for i, length in enumerate(lengths):
        spans.append((int(cursor), int(cursor + length)))
        cursor += length
        if i < n_inst - 1:
            cursor += MIN_GAP_SNIPPETS + extras[i + 1]
    return spans


def _make_video(rng, spec, categories, prototypes, background, video_id):
    t_len, dim = spec.snippets, spec.feature_dim
    spans = _plan_instances(rng, t_len, spec.max_instances_per_video)
    cat = int(rng.integers(0, spec.num_classes))  # one category per video
    action = np.zeros(t_len, dtype=bool)
    for lo, hi in spans:
        action[lo:hi] = True

    noise = rng.standard_normal((t_len, dim)) / spec.action_snr
    values = background[None, :] + noise
    values[action] = prototypes[cat] + noise[action]
    values = values.astype(np.float32)

    duration = float(t_len)  # one second per snippet
    segments = tuple(
        GroundTruthSegment(float(lo), float(hi), categories[cat]) for lo, hi in spans
    )
    record = VideoRecord(video_id, duration, None, (categories[cat],), segments)
    return Video(record, values)


def generate_corpus(spec):
    """Deterministically generate a SyntheticCorpus from a spec."""
    rng = np.random.default_rng(spec.seed)
    categories = tuple(f"action{i:02d}" for i in range(spec.num_classes))
    prototypes, background = _draw_prototypes(rng, spec.num_classes, spec.feature_dim)
    train = tuple(
        _make_video(rng, spec, categories, prototypes, background, f"train_{i:04d}")
        for i in range(spec.n_train)
    )
    test = tuple(
        _make_video(rng, spec, categories, prototypes, background, f"test_{i:04d}")
        for i in range(spec.n_test)
    )
    return SyntheticCorpus(spec, categories, prototypes, background, train, test)


def reseeded(spec, seed):
    """Copy of a spec with a different seed."""
    return replace(spec, seed=seed)


def corpus_fingerprint(videos):
    """SHA-256 over record metadata and feature bytes; order sensitive."""
    h = hashlib.sha256()
    for video in videos:
        rec = video.record
        h.update(rec.video_id.encode())
        h.update(repr(rec.duration).encode())
        h.update(repr(rec.labels).encode())
        for seg in rec.ground_truth:
            h.update(repr((seg.start, seg.end, seg.label)).encode())
        h.update(np.ascontiguousarray(video.features, dtype=np.float32).tobytes())
    return h.hexdigest()
