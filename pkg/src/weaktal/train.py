"""Training loop, fused loss/gradient computation, and the gradient checker.

The optimizer is adaptive per-parameter moment estimation (bias-corrected
first/second moments) with decoupled weight decay applied to weight tensors
only, never to biases.  Everything is float64 and deterministic given the
config seed: parameter init, shuffle order and batch assembly all derive
from named sub-seeds of the one seed.
"""

import csv
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import model as M
from .checkpoint import save_checkpoint
from .datasets import encode_labels, resample_snippets
from .losses import CSV_FIELDS, PROB_EPS, LossBreakdown, mean_breakdown

ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite loss appears; carries diagnostics."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 2e-4
    weight_decay: float = 5e-4
    epochs: int = 150
    alpha: float = 0.05
    beta: float = 5.0
    k_ratio: float = 1.0 / 8.0
    seed: int = 0
    hidden: int = 512
    snippets: int | None = None
    adam_betas: tuple[float, float] = (0.9, 0.999)
    # ablation switches
    share_classifier: bool = True
    use_pre_stream: bool = True
    use_post_stream: bool = True
    use_c2c: bool = True
    use_a2c: bool = True
    class_agnostic_weights: bool = False

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.hidden < 1:
            raise ValueError("batch_size, epochs and hidden must be positive")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("bad optimizer hyperparameters")
        if not (0 < self.k_ratio <= 1):
            raise ValueError("k_ratio must lie in (0, 1]")
        if not (self.use_pre_stream or self.use_post_stream):
            raise ValueError("at least one stream must be enabled")
        if self.use_c2c and not (self.use_pre_stream and self.use_post_stream):
            raise ValueError("the c2c term needs both streams")
        if self.use_a2c and not self.use_post_stream:
            raise ValueError("the a2c term needs the post stream")


def loss_and_grads(x, labels, params, cfg):
    """Mean total loss over a (N, T, D) batch and its parameter gradients.

    labels is the (N, C) binary label matrix.  Disabled terms (per the
    ablation switches) are reported as 0 and contribute no gradient.
    """
    n = x.shape[0]
    labels = np.asarray(labels, dtype=np.float64)
    k_pos = labels.sum(axis=1)
    if np.any(k_pos <= 0):
        raise ValueError("every video in a batch needs at least one positive label")
    yhat = labels / k_pos[:, None]

    fwd = M.forward_batch(x, params, cfg.k_ratio)
    p_e, p_o = fwd.s_e, fwd.p_o
    s_o, s_abs = fwd.s_o, fwd.s_tilde_o

    g_pre = np.zeros_like(fwd.logits_pre)
    g_post = np.zeros_like(fwd.logits_post)
    g_abs = np.zeros_like(fwd.logits_absent)

    cls_e = cls_o = c2c = a2c = 0.0
    logp_e = fwd.logits_pre - fwd.logits_pre.max(axis=1, keepdims=True)
    logp_e = logp_e - np.log(np.exp(logp_e).sum(axis=1, keepdims=True))
    logp_o = fwd.logits_post - fwd.logits_post.max(axis=1, keepdims=True)
    logp_o = logp_o - np.log(np.exp(logp_o).sum(axis=1, keepdims=True))

    if cfg.use_pre_stream:
        cls_e = float(-(yhat * logp_e).sum() / n)
        g_pre += (p_e - yhat) / n
    if cfg.use_post_stream:
        cls_o = float(-(yhat * logp_o).sum() / n)
        g_post += (p_o - yhat) / n

    if cfg.use_c2c:
        c = labels.shape[1]
        diff = p_e - p_o
        c2c = float((diff**2).mean(axis=1).sum() / n)
        v_e = cfg.alpha * 2.0 * diff / (c * n)
        g_pre += p_e * (v_e - (v_e * p_e).sum(axis=1, keepdims=True))
        v_o = -v_e
        g_post += p_o * (v_o - (v_o * p_o).sum(axis=1, keepdims=True))

    if cfg.use_a2c:
        pos = labels > 0
        so_c = np.clip(s_o, PROB_EPS, 1.0 - PROB_EPS)
        sa_c = np.clip(s_abs, PROB_EPS, 1.0 - PROB_EPS)
        per_video = -(
            (np.log(so_c) * pos).sum(axis=1) + (np.log1p(-sa_c) * pos).sum(axis=1)
        ) / (2.0 * k_pos)
        a2c = float(per_video.sum() / n)
        # clamped entries contribute no gradient
        in_o = (s_o > PROB_EPS) & (s_o < 1.0 - PROB_EPS)
        in_a = (s_abs > PROB_EPS) & (s_abs < 1.0 - PROB_EPS)
        scale = cfg.beta / (2.0 * k_pos[:, None] * n)
        g_post += np.where(pos & in_o, -(1.0 - s_o) * scale, 0.0)
        g_abs += np.where(pos & in_a, s_abs * scale, 0.0)

    breakdown = LossBreakdown(cls_e, cls_o, c2c, a2c, cfg.alpha, cfg.beta)
    if not math.isfinite(breakdown.total):
        raise TrainingDiverged(f"non-finite loss: {breakdown}")
    grads = M.backward_batch(fwd, params, g_pre, g_post, g_abs)
    return breakdown, grads


# ---------------------------------------------------------------------------
# optimizer


class MomentOptimizer:
    """Adam-style update with decoupled weight decay on weight tensors only."""

    def __init__(self, params, cfg):
        self.cfg = cfg
        self.step_count = 0
        self.m = {name: np.zeros_like(arr) for name, arr in M.param_items(params)}
        self.v = {name: np.zeros_like(arr) for name, arr in M.param_items(params)}

    @staticmethod
    def is_weight(name):
        return name.rsplit(".", 1)[1].startswith("w")

    def step(self, params, grads):
        self.step_count += 1
        b1, b2 = self.cfg.adam_betas
        lr = self.cfg.learning_rate
        bias1 = 1.0 - b1**self.step_count
        bias2 = 1.0 - b2**self.step_count
        for name, arr in M.param_items(params):
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = lr * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)
            if self.is_weight(name):
                update = update + lr * self.cfg.weight_decay * arr
            arr -= update


# ---------------------------------------------------------------------------
# training loop


@dataclass(eq=False)
class TrainResult:
    params: M.ModelParams         # final parameters
    best_params: M.ModelParams    # snapshot of the lowest-loss epoch
    best_epoch: int
    step_log: list                # one LossBreakdown per optimizer step
    epoch_log: list               # per-epoch mean LossBreakdown
    config: TrainConfig
    categories: list


def _batch_tensor(videos, snippets):
    t_target = snippets if snippets is not None else videos[0].features.shape[0]
    rows = []
    for v in videos:
        feats = np.asarray(v.features, dtype=np.float64)
        rows.append(resample_snippets(feats, t_target))
    return np.stack(rows)


def train(videos, categories, cfg, out_dir=None):
    """Optimize the shared parameters over a corpus.

    videos: list of datasets.Video; categories: ordered category names.
    When out_dir is given, writes checkpoints/{best,final}.ckpt and loss.csv.
    Deterministic given cfg.seed.
    """
    if not videos:
        raise ValueError("empty corpus")
    for v in videos:
        if not v.record.labels:
            raise ValueError(f"{v.record.video_id}: training video has no labels")

    feature_dim = videos[0].features.shape[1]
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    init_rng = np.random.default_rng(seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])

    params = M.init_model(
        feature_dim,
        cfg.hidden,
        len(categories),
        init_rng,
        share_classifier=cfg.share_classifier,
        class_agnostic=cfg.class_agnostic_weights,
    )
    opt = MomentOptimizer(params, cfg)

    label_matrix = np.stack([encode_labels(v.record.labels, categories) for v in videos])

    step_log = []
    epoch_log = []
    best_epoch = -1
    best_total = math.inf
    best_params = params.copy()

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(videos))
        epoch_parts = []
        for lo in range(0, len(videos), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            batch = _batch_tensor([videos[i] for i in idx], cfg.snippets)
            try:
                breakdown, grads = loss_and_grads(batch, label_matrix[idx], params, cfg)
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"epoch {epoch}, step {len(step_log)}: {exc}") from None
            opt.step(params, grads)
            step_log.append(breakdown)
            epoch_parts.append(breakdown)
        epoch_mean = mean_breakdown(epoch_parts)
        epoch_log.append(epoch_mean)
        if epoch_mean.total < best_total:
            best_total = epoch_mean.total
            best_epoch = epoch
            best_params = params.copy()

    result = TrainResult(params, best_params, best_epoch, step_log, epoch_log, cfg, list(categories))
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def write_outputs(result, out_dir):
    """Write checkpoints and the per-step loss CSV under out_dir."""
    ckpt_dir = os.path.join(out_dir, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    meta = {"categories": result.categories, "config": _config_meta(result.config)}
    save_checkpoint(os.path.join(ckpt_dir, "final.ckpt"), result.params, meta)
    save_checkpoint(
        os.path.join(ckpt_dir, "best.ckpt"),
        result.best_params,
        {**meta, "epoch": result.best_epoch},
    )
    with open(os.path.join(out_dir, "loss.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("step",) + CSV_FIELDS)
        for i, part in enumerate(result.step_log):
            writer.writerow([i, *part.as_row()])


def _config_meta(cfg):
    out = asdict(cfg)
    out["adam_betas"] = list(cfg.adam_betas)
    return out


# ---------------------------------------------------------------------------
# finite-difference verification


def gradient_check(params, batch_x, batch_labels, cfg, epsilon=1e-5):
    """Max relative error between analytic gradients and central differences."""

    def total_loss():
        breakdown, _ = loss_and_grads(batch_x, batch_labels, params, cfg)
        return breakdown.total

    _, grads = loss_and_grads(batch_x, batch_labels, params, cfg)
    worst = 0.0
    for name, arr in M.param_items(params):
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            up = total_loss()
            flat[i] = original - epsilon
            down = total_loss()
            flat[i] = original
            fd = (up - down) / (2.0 * epsilon)
            denom = max(abs(gflat[i]), abs(fd), 1e-8)
            worst = max(worst, abs(gflat[i] - fd) / denom)
    return worst


def ablation_flag_grid():
    """All 8 combinations of the share_classifier / use_c2c / use_a2c switches.

    Both streams stay active; the class-agnostic weight variant is exercised
    separately by the unit tests.
    """
    combos = []
    for share in (True, False):
        for use_c2c in (True, False):
            for use_a2c in (True, False):
                combos.append(
                    {
                        "share_classifier": share,
                        "use_c2c": use_c2c,
                        "use_a2c": use_a2c,
                        "class_agnostic_weights": False,
                    }
                )
    return combos


def run_gradient_check(seed=0, epsilon=1e-5, num_classes=3, feature_dim=5, snippets=9, hidden=4):
    """Gradient check over the ablation-flag grid on a tiny configuration.

    Returns a list of (flags, max relative error) pairs.
    """
    rng = np.random.default_rng(seed)
    batch = rng.standard_normal((2, snippets, feature_dim))
    labels = np.zeros((2, num_classes))
    labels[0, 0] = 1.0
    labels[1, 1] = 1.0
    labels[1, 2] = 1.0

    results = []
    for flags in ablation_flag_grid():
        cfg = TrainConfig(
            batch_size=2,
            epochs=1,
            hidden=hidden,
            seed=seed,
            **flags,
        )
        params = M.init_model(
            feature_dim,
            hidden,
            num_classes,
            np.random.default_rng(seed + 1),
            share_classifier=flags["share_classifier"],
            class_agnostic=flags["class_agnostic_weights"],
        )
        err = gradient_check(params, batch, labels, cfg, epsilon)
        results.append((flags, err))
    return results
