"""Two-stream network around one shared snippet classifier.

The classifier is a stack of three temporal convolutions (kernel sizes 3, 3,
1, rectifier between layers) mapping a (T, D) snippet sequence to per-snippet
per-category scores (the class activation sequence, CAS).

Pre-classification stream: run the classifier on the raw sequence, then pool
each category column with a top-k mean into a video-level score.

Post-classification stream: turn the CAS into per-category action weights
through a kernel-1 convolution plus sigmoid (background weights are their
complement), aggregate the snippet features into a length-3 sequence per
category by fold-wise weighted averaging (folds = snippet index mod 3), and
run the SAME classifier on each aggregate, reading out that category's
channel.

Everything is plain numpy + the kernels module; backward passes are written
out by hand so training needs nothing beyond this package.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

FOLD_EPS = 1e-8


# ---------------------------------------------------------------------------
# parameters


@dataclass(eq=False)
class ClassifierParams:
    """Three temporal conv layers; w* are (K, C_in, C_out), b* are (C_out,)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @property
    def feature_dim(self):
        return self.w1.shape[1]

    @property
    def hidden(self):
        return self.w1.shape[2]

    @property
    def num_classes(self):
        return self.w3.shape[2]

    def copy(self):
        return ClassifierParams(*(getattr(self, f).copy() for f in ("w1", "b1", "w2", "b2", "w3", "b3")))


@dataclass(eq=False)
class TransitionParams:
    """Kernel-1 conv from CAS channels to weight channels, sigmoid applied after.

    Output channels equal the category count, or 1 in the class-agnostic
    variant (the single row is then broadcast to every category).
    """

    w: np.ndarray  # (1, C, M)
    b: np.ndarray  # (M,)

    @property
    def class_agnostic(self):
        return self.w.shape[2] == 1

    def copy(self):
        return TransitionParams(self.w.copy(), self.b.copy())


@dataclass(eq=False)
class ModelParams:
    """All trainable state.

    post_classifier is None when the two streams share one classifier (the
    normal configuration); the sharing is structural, both streams then read
    the same arrays.  The unshared ablation carries an independent copy.
    """

    classifier: ClassifierParams
    transition: TransitionParams
    post_classifier: ClassifierParams | None = None

    @property
    def shared(self):
        return self.post_classifier is None

    def post_params(self):
        return self.classifier if self.post_classifier is None else self.post_classifier

    def copy(self):
        return ModelParams(
            self.classifier.copy(),
            self.transition.copy(),
            None if self.post_classifier is None else self.post_classifier.copy(),
        )


def _uniform_fan_in(rng, k, c_in, c_out):
    bound = 1.0 / math.sqrt(k * c_in)
    return rng.uniform(-bound, bound, size=(k, c_in, c_out))


def init_classifier(feature_dim, hidden, num_classes, rng):
    return ClassifierParams(
        w1=_uniform_fan_in(rng, 3, feature_dim, hidden),
        b1=np.zeros(hidden),
        w2=_uniform_fan_in(rng, 3, hidden, hidden),
        b2=np.zeros(hidden),
        w3=_uniform_fan_in(rng, 1, hidden, num_classes),
        b3=np.zeros(num_classes),
    )


def init_transition(num_classes, rng, class_agnostic=False):
    out = 1 if class_agnostic else num_classes
    return TransitionParams(w=_uniform_fan_in(rng, 1, num_classes, out), b=np.zeros(out))


def init_model(feature_dim, hidden, num_classes, rng, share_classifier=True, class_agnostic=False):
    classifier = init_classifier(feature_dim, hidden, num_classes, rng)
    transition = init_transition(num_classes, rng, class_agnostic)
    post = None if share_classifier else init_classifier(feature_dim, hidden, num_classes, rng)
    return ModelParams(classifier, transition, post)


_CLS_FIELDS = ("w1", "b1", "w2", "b2", "w3", "b3")


def param_items(params):
    """Ordered (name, array) pairs over all trainable arrays."""
    items = [(f"classifier.{f}", getattr(params.classifier, f)) for f in _CLS_FIELDS]
    items.append(("transition.w", params.transition.w))
    items.append(("transition.b", params.transition.b))
    if params.post_classifier is not None:
        items.extend((f"post_classifier.{f}", getattr(params.post_classifier, f)) for f in _CLS_FIELDS)
    return items


def set_param(params, name, value):
    owner_name, field = name.split(".")
    owner = getattr(params, owner_name)
    getattr(owner, field)[...] = value


# ---------------------------------------------------------------------------
# elementary pieces


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[np.logical_not(pos)])
    out[np.logical_not(pos)] = ez / (1.0 + ez)
    return out


def _stack_forward(x, cp):
    """Classifier stack on a (N, T, D) batch; returns logits and the cache."""
    z1 = kernels.conv1d_forward(x, cp.w1, cp.b1)
    a1 = np.maximum(z1, 0.0)
    z2 = kernels.conv1d_forward(a1, cp.w2, cp.b2)
    a2 = np.maximum(z2, 0.0)
    y = kernels.conv1d_forward(a2, cp.w3, cp.b3)
    return y, (x, z1, a1, z2, a2)


def _stack_backward(cache, cp, gy):
    """Backward through the stack: returns (gx, grads dict keyed like _CLS_FIELDS)."""
    x, z1, a1, z2, a2 = cache
    ga2, gw3, gb3 = kernels.conv1d_backward(a2, cp.w3, gy)
    gz2 = ga2 * (z2 > 0)
    ga1, gw2, gb2 = kernels.conv1d_backward(a1, cp.w2, gz2)
    gz1 = ga1 * (z1 > 0)
    gx, gw1, gb1 = kernels.conv1d_backward(x, cp.w1, gz1)
    return gx, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2, "w3": gw3, "b3": gb3}


def classifier_forward(x, cp):
    """Class activation sequence for one (T, D) video or a (N, T, D) batch."""
    single = x.ndim == 2
    xb = x[None] if single else x
    y, _ = _stack_forward(np.asarray(xb, dtype=np.float64), cp)
    return y[0] if single else y


def top_k_count(t_len, k_ratio):
    if not (0 < k_ratio <= 1):
        raise ValueError(f"k_ratio must lie in (0, 1], got {k_ratio}")
    return max(1, math.ceil(k_ratio * t_len))


def pre_stream_score(cas, k_ratio):
    """Top-k mean pooling per category column followed by softmax.

    cas is (T, C) or (N, T, C); returns (logits, probabilities) with the same
    leading batch shape.
    """
    single = cas.ndim == 2
    casb = cas[None] if single else cas
    t_len = casb.shape[1]
    k = top_k_count(t_len, k_ratio)
    part = np.partition(casb, t_len - k, axis=1)[:, t_len - k :, :]
    logits = part.mean(axis=1)
    probs = softmax(logits, axis=-1)
    return (logits[0], probs[0]) if single else (logits, probs)


def weight_transition(cas, tp, num_classes=None):
    """Action/background aggregation weights from the CAS.

    Returns (w_action, w_background) of shape (C, T) for a single video or
    (N, C, T) for a batch; w_action + w_background == 1 elementwise.
    """
    single = cas.ndim == 2
    casb = cas[None] if single else cas
    if num_classes is None:
        num_classes = casb.shape[2]
    act = sigmoid(casb @ tp.w[0] + tp.b)  # (N, T, M)
    w_act = np.swapaxes(act, 1, 2)  # (N, M, T)
    if tp.class_agnostic:
        w_act = np.broadcast_to(w_act, (casb.shape[0], num_classes, casb.shape[1])).copy()
    w_bg = 1.0 - w_act
    return (w_act[0], w_bg[0]) if single else (w_act, w_bg)


def aggregate_features(x, w):
    """Fold-wise weighted average of snippet features.

    x is (T, D), w is (C, T) nonnegative; fold j holds snippets with index
    j mod 3.  Output (C, 3, D); entry [c, j] is the w-weighted average of
    fold j, guarded by FOLD_EPS when a fold's weight mass vanishes, so every
    output vector stays inside the fold's coordinatewise feature range.
    """
    if np.any(w < 0):
        raise ValueError("aggregation weights must be nonnegative")
    out, _ = _aggregate_batch(np.asarray(x, dtype=np.float64)[None], np.asarray(w, dtype=np.float64)[None])
    return out[0]


def _aggregate_batch(x, w):
    """Batched fold aggregation: (N, T, D), (N, C, T) -> (N, C, 3, D).

    Also returns the raw per-fold weight masses (N, C, 3) needed by the
    backward pass.
    """
    n, t_len, dim = x.shape
    c = w.shape[1]
    out = np.empty((n, c, 3, dim))
    masses = np.empty((n, c, 3))
    for j in range(3):
        xf = x[:, j::3, :]
        wf = w[:, :, j::3]
        s = wf.sum(axis=2)
        num = np.einsum("nct,ntd->ncd", wf, xf, optimize=True)
        out[:, :, j, :] = num / np.maximum(s, FOLD_EPS)[..., None]
        masses[:, :, j] = s
    return out, masses


def _aggregate_backward(x, w, masses, gout):
    """Gradient of _aggregate_batch w.r.t. the weights (features are data)."""
    gw = np.zeros_like(w)
    for j in range(3):
        xf = x[:, j::3, :]
        wf = w[:, :, j::3]
        s = masses[:, :, j]
        m = np.maximum(s, FOLD_EPS)
        gf = gout[:, :, j, :]  # (N, C, D)
        fold_out = np.einsum("nct,ntd->ncd", wf, xf, optimize=True) / m[..., None]
        # d out / d w_t = (x_t - out) / m, with the mass term gated off when
        # the raw sum sits below the epsilon guard.
        gate = (s > FOLD_EPS).astype(np.float64)
        g_m = -(gf * fold_out).sum(axis=2) / m * gate  # (N, C)
        gw[:, :, j::3] = np.einsum("ncd,ntd->nct", gf, xf, optimize=True) / m[..., None] + g_m[..., None]
    return gw


def post_stream_score(agg_action, agg_background, cp):
    """Video-level scores from (C, 3, D) aggregated features.

    Each category's 3-snippet aggregate runs through the classifier; the
    category's own output channel is averaged over the 3 temporal positions.
    Returns (logits for action presence, sigmoid of those, sigmoid action
    absence scores).
    """
    for name, agg in (("action", agg_action), ("background", agg_background)):
        if agg.ndim != 3 or agg.shape[1] != 3:
            raise ValueError(f"{name} aggregate must be (C, 3, D), got {agg.shape}")
    logits_post, _, _ = _post_logits_batch(np.asarray(agg_action, dtype=np.float64)[None], cp)
    logits_absent, _, _ = _post_logits_batch(np.asarray(agg_background, dtype=np.float64)[None], cp)
    return logits_post[0], sigmoid(logits_post[0]), sigmoid(logits_absent[0])


def _post_logits_batch(agg, cp):
    """(N, C, 3, D) -> per-category logits (N, C), stack cache, stack output shape."""
    n, c, three, dim = agg.shape
    flat = np.ascontiguousarray(agg.reshape(n * c, three, dim))
    y, cache = _stack_forward(flat, cp)  # (N*C, 3, C)
    y4 = y.reshape(n, c, three, c)
    diag = np.diagonal(y4, axis1=1, axis2=3)  # (N, 3, C)
    return diag.mean(axis=1), cache, y4.shape


def _post_logits_backward(glogits, y4_shape):
    """Scatter per-category logit gradients back onto the stack output."""
    n, c, three, _ = y4_shape
    gy4 = np.zeros(y4_shape)
    idx = np.arange(c)
    gy4[:, idx, :, idx] = np.transpose(glogits[..., None] / three, (1, 0, 2))
    return gy4.reshape(n * c, three, c)


# ---------------------------------------------------------------------------
# full forward pass


@dataclass(eq=False)
class ForwardOutput:
    """Everything the losses and the localizer consume, for one video."""

    cas: np.ndarray          # (T, C) class activation sequence
    w_action: np.ndarray     # (C, T)
    w_background: np.ndarray # (C, T)
    agg_action: np.ndarray   # (C, 3, D)
    agg_background: np.ndarray
    logits_pre: np.ndarray   # (C,) top-k pooled
    s_e: np.ndarray          # (C,) softmax of logits_pre
    logits_post: np.ndarray  # (C,) action presence, pre-sigmoid
    s_o: np.ndarray          # (C,) sigmoid of logits_post
    logits_absent: np.ndarray
    s_tilde_o: np.ndarray


@dataclass(eq=False)
class BatchForward:
    """Batched forward state, including the caches the backward pass needs."""

    x: np.ndarray
    cas: np.ndarray
    pre_cache: tuple
    topk_idx: np.ndarray
    k: int
    logits_pre: np.ndarray
    s_e: np.ndarray
    act: np.ndarray          # (N, T, M) transition sigmoid output
    w_action: np.ndarray     # (N, C, T)
    w_background: np.ndarray
    agg_action: np.ndarray   # (N, C, 3, D)
    agg_background: np.ndarray
    masses_action: np.ndarray
    masses_background: np.ndarray
    post_cache_action: tuple
    post_cache_background: tuple
    y4_shape: tuple
    logits_post: np.ndarray
    s_o: np.ndarray
    p_o: np.ndarray          # softmax over logits_post
    logits_absent: np.ndarray
    s_tilde_o: np.ndarray


def forward_batch(x, params, k_ratio):
    """Run both streams on a (N, T, D) float64 batch, keeping backward caches."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    n, t_len, _ = x.shape
    c = params.classifier.num_classes

    cas, pre_cache = _stack_forward(x, params.classifier)

    k = top_k_count(t_len, k_ratio)
    order = np.argpartition(cas, t_len - k, axis=1)[:, t_len - k :, :]  # (N, k, C)
    topk_vals = np.take_along_axis(cas, order, axis=1)
    logits_pre = topk_vals.mean(axis=1)
    s_e = softmax(logits_pre, axis=-1)

    tp = params.transition
    act = sigmoid(cas @ tp.w[0] + tp.b)  # (N, T, M)
    w_action = np.swapaxes(act, 1, 2)
    if tp.class_agnostic:
        w_action = np.broadcast_to(w_action, (n, c, t_len)).copy()
    w_background = 1.0 - w_action

    agg_a, masses_a = _aggregate_batch(x, w_action)
    agg_b, masses_b = _aggregate_batch(x, w_background)

    post_params = params.post_params()
    logits_post, cache_a, y4_shape = _post_logits_batch(agg_a, post_params)
    logits_absent, cache_b, _ = _post_logits_batch(agg_b, post_params)

    return BatchForward(
        x=x,
        cas=cas,
        pre_cache=pre_cache,
        topk_idx=order,
        k=k,
        logits_pre=logits_pre,
        s_e=s_e,
        act=act,
        w_action=w_action,
        w_background=w_background,
        agg_action=agg_a,
        agg_background=agg_b,
        masses_action=masses_a,
        masses_background=masses_b,
        post_cache_action=cache_a,
        post_cache_background=cache_b,
        y4_shape=y4_shape,
        logits_post=logits_post,
        s_o=sigmoid(logits_post),
        p_o=softmax(logits_post, axis=-1),
        logits_absent=logits_absent,
        s_tilde_o=sigmoid(logits_absent),
    )


def forward_video(x, params, k_ratio):
    """Single-video forward pass returning a ForwardOutput."""
    fwd = forward_batch(np.asarray(x, dtype=np.float64)[None], params, k_ratio)
    return ForwardOutput(
        cas=fwd.cas[0],
        w_action=fwd.w_action[0],
        w_background=fwd.w_background[0],
        agg_action=fwd.agg_action[0],
        agg_background=fwd.agg_background[0],
        logits_pre=fwd.logits_pre[0],
        s_e=fwd.s_e[0],
        logits_post=fwd.logits_post[0],
        s_o=fwd.s_o[0],
        logits_absent=fwd.logits_absent[0],
        s_tilde_o=fwd.s_tilde_o[0],
    )


def backward_batch(fwd, params, g_logits_pre, g_logits_post, g_logits_absent):
    """Backpropagate upstream gradients on the three logit heads into parameters.

    Returns {param name: gradient array} matching param_items(params).  The
    weight-transition path always feeds the pre-stream classifier's CAS, so
    even with an unshared post classifier the pre classifier receives
    gradients from the post-stream losses.
    """
    post_params = params.post_params()
    tp = params.transition

    # post stream: logits -> stack output -> aggregated features
    gy_a = _post_logits_backward(g_logits_post, fwd.y4_shape)
    gy_b = _post_logits_backward(g_logits_absent, fwd.y4_shape)
    gagg_a_flat, post_grads_a = _stack_backward(fwd.post_cache_action, post_params, gy_a)
    gagg_b_flat, post_grads_b = _stack_backward(fwd.post_cache_background, post_params, gy_b)
    n, c, three, dim = fwd.agg_action.shape
    gagg_a = gagg_a_flat.reshape(n, c, three, dim)
    gagg_b = gagg_b_flat.reshape(n, c, three, dim)

    # aggregation -> attention weights
    gw_action = _aggregate_backward(fwd.x, fwd.w_action, fwd.masses_action, gagg_a)
    gw_background = _aggregate_backward(fwd.x, fwd.w_background, fwd.masses_background, gagg_b)
    g_wa = gw_action - gw_background  # d/d w_action with w_background = 1 - w_action

    # attention weights -> transition conv -> CAS
    if tp.class_agnostic:
        g_act = g_wa.sum(axis=1)[..., None]  # (N, T, 1)
    else:
        g_act = np.swapaxes(g_wa, 1, 2)  # (N, T, C)
    g_u = g_act * fwd.act * (1.0 - fwd.act)
    g_tw = np.einsum("ntc,ntm->cm", fwd.cas, g_u, optimize=True)[None]
    g_tb = g_u.sum(axis=(0, 1))
    g_cas = g_u @ tp.w[0].T

    # pre stream: top-k mean pooling scatter
    t_len = fwd.cas.shape[1]
    g_topk = np.zeros_like(fwd.cas)
    np.put_along_axis(
        g_topk,
        fwd.topk_idx,
        np.broadcast_to((g_logits_pre / fwd.k)[:, None, :], fwd.topk_idx.shape),
        axis=1,
    )
    g_cas = g_cas + g_topk

    _, pre_grads = _stack_backward(fwd.pre_cache, params.classifier, g_cas)

    grads = {}
    if params.shared:
        for f in _CLS_FIELDS:
            grads[f"classifier.{f}"] = pre_grads[f] + post_grads_a[f] + post_grads_b[f]
    else:
        for f in _CLS_FIELDS:
            grads[f"classifier.{f}"] = pre_grads[f]
            grads[f"post_classifier.{f}"] = post_grads_a[f] + post_grads_b[f]
    grads["transition.w"] = g_tw
    grads["transition.b"] = g_tb
    return grads
