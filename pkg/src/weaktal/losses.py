"""Loss terms for the two-stream training objective.

Four terms enter the total: a video-level classification loss per stream
(cross entropy against the L1-normalized label vector), a consistency loss
between the two streams' class probabilities (c2c), and a consistency loss
tying the attention-aggregated presence/absence scores to the label (a2c).

    total = cls_e + cls_o + alpha * c2c + beta * a2c
"""

from dataclasses import dataclass

import numpy as np

PROB_EPS = 1e-7  # clamp for logs inside the a2c term


@dataclass(frozen=True)
class LossBreakdown:
    cls_e: float
    cls_o: float
    c2c: float
    a2c: float
    alpha: float
    beta: float

    @property
    def total(self):
        return self.cls_e + self.cls_o + self.alpha * self.c2c + self.beta * self.a2c

    def as_row(self):
        return [self.cls_e, self.cls_o, self.c2c, self.a2c, self.total]


CSV_FIELDS = ("cls_e", "cls_o", "c2c", "a2c", "total")


def mean_breakdown(parts):
    """Componentwise mean of LossBreakdowns (alpha/beta taken from the first)."""
    if not parts:
        raise ValueError("cannot average an empty loss list")
    return LossBreakdown(
        cls_e=float(np.mean([p.cls_e for p in parts])),
        cls_o=float(np.mean([p.cls_o for p in parts])),
        c2c=float(np.mean([p.c2c for p in parts])),
        a2c=float(np.mean([p.a2c for p in parts])),
        alpha=parts[0].alpha,
        beta=parts[0].beta,
    )


def log_softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def classification_loss(logits, label):
    """Cross entropy of softmax(logits) against the L1-normalized label vector."""
    label = np.asarray(label, dtype=np.float64)
    k = label.sum()
    if k <= 0:
        raise ValueError("classification loss needs at least one positive label")
    return float(-(label / k * log_softmax(logits)).sum())


def consistency_c2c(s_a, s_b):
    """Mean squared difference between two streams' probability vectors."""
    s_a = np.asarray(s_a, dtype=np.float64)
    s_b = np.asarray(s_b, dtype=np.float64)
    if s_a.shape != s_b.shape:
        raise ValueError(f"shape mismatch: {s_a.shape} vs {s_b.shape}")
    return float(np.mean((s_a - s_b) ** 2))


def consistency_a2c(s_o, s_absent, label):
    """Presence/absence consistency over the positive categories.

    -(1 / 2k) * sum over positives of [log s_o + log(1 - s_absent)], with the
    probabilities clamped to [PROB_EPS, 1 - PROB_EPS].
    """
    label = np.asarray(label, dtype=np.float64)
    pos = label > 0
    k = int(pos.sum())
    if k == 0:
        raise ValueError("a2c loss needs at least one positive label")
    so = np.clip(np.asarray(s_o, dtype=np.float64)[pos], PROB_EPS, 1.0 - PROB_EPS)
    sa = np.clip(np.asarray(s_absent, dtype=np.float64)[pos], PROB_EPS, 1.0 - PROB_EPS)
    return float(-(np.log(so).sum() + np.log1p(-sa).sum()) / (2.0 * k))


def combine_losses(cls_e, cls_o, c2c, a2c, alpha, beta):
    """Assemble a LossBreakdown; rejects non-finite components."""
    parts = (cls_e, cls_o, c2c, a2c)
    if not all(np.isfinite(p) for p in parts):
        raise ValueError(f"non-finite loss component: {parts}")
    return LossBreakdown(float(cls_e), float(cls_o), float(c2c), float(a2c), float(alpha), float(beta))
