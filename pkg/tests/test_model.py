"""Model forward contracts: shapes, invariants, hand-computed fixtures."""

import numpy as np
import pytest

from weaktal import model as M

RNG = np.random.default_rng(1234)


def tiny_params(d=4, h=3, c=2, seed=0, share=True, agnostic=False):
    return M.init_model(d, h, c, np.random.default_rng(seed),
                        share_classifier=share, class_agnostic=agnostic)


def zero_classifier(d, h, c):
    return M.ClassifierParams(
        w1=np.zeros((3, d, h)), b1=np.zeros(h),
        w2=np.zeros((3, h, h)), b2=np.zeros(h),
        w3=np.zeros((1, h, c)), b3=np.zeros(c),
    )


# --------------------------------------------------------------------- classifier


def test_zero_params_zero_input_gives_zero_logits():
    cp = zero_classifier(4, 3, 2)
    out = M.classifier_forward(np.zeros((7, 4)), cp)
    np.testing.assert_array_equal(out, np.zeros((7, 2)))


def test_length_three_input_keeps_length():
    cp = tiny_params().classifier
    out = M.classifier_forward(RNG.standard_normal((3, 4)), cp)
    assert out.shape == (3, 2)


@pytest.mark.parametrize("t_len", [3, 9, 100])
def test_output_length_equals_input_length(t_len):
    cp = tiny_params().classifier
    out = M.classifier_forward(RNG.standard_normal((t_len, 4)), cp)
    assert out.shape == (t_len, 2)


def test_identity_stack_reduces_to_linear_map():
    # Layer 1 copies the input into the first D hidden channels (center tap),
    # layer 2 passes them through, layer 3 applies a plain matrix.  With
    # nonnegative input the rectifiers are inactive and the stack must equal
    # the direct product x @ m.
    d, c = 3, 2
    h = d
    w1 = np.zeros((3, d, h))
    w1[1] = np.eye(d)
    w2 = np.zeros((3, h, h))
    w2[1] = np.eye(h)
    m = np.abs(RNG.standard_normal((h, c)))
    cp = M.ClassifierParams(w1, np.zeros(h), w2, np.zeros(h), m[None], np.zeros(c))
    x = np.abs(RNG.standard_normal((11, d)))  # nonnegative keeps relus open
    np.testing.assert_allclose(M.classifier_forward(x, cp), x @ m, atol=1e-12)


# --------------------------------------------------------------------- pre stream


def test_topk_constant_column():
    cas = np.full((10, 3), 2.5)
    logits, probs = M.pre_stream_score(cas, 0.5)
    np.testing.assert_allclose(logits, [2.5, 2.5, 2.5])
    np.testing.assert_allclose(probs.sum(), 1.0)


def test_topk_quarter_ratio():
    cas = np.arange(1.0, 9.0)[:, None]  # column 1..8
    logits, _ = M.pre_stream_score(cas, 0.25)  # k = 2 -> mean of {8, 7}
    assert logits[0] == pytest.approx(7.5)


def test_topk_monotone_and_permutation_invariant():
    rng = np.random.default_rng(9)
    for _ in range(50):
        cas = rng.standard_normal((12, 4))
        logits, _ = M.pre_stream_score(cas, 1 / 8)
        perm = rng.permutation(12)
        logits_p, _ = M.pre_stream_score(cas[perm], 1 / 8)
        np.testing.assert_allclose(logits, logits_p)
        # raising an entry never lowers its category's logit
        t, c = rng.integers(0, 12), rng.integers(0, 4)
        bumped = cas.copy()
        bumped[t, c] += abs(rng.standard_normal()) + 0.1
        logits_b, _ = M.pre_stream_score(bumped, 1 / 8)
        assert logits_b[c] >= logits[c] - 1e-12


def test_topk_rejects_bad_ratio():
    with pytest.raises(ValueError):
        M.pre_stream_score(np.zeros((5, 2)), 0.0)
    with pytest.raises(ValueError):
        M.pre_stream_score(np.zeros((5, 2)), 1.5)


# --------------------------------------------------------------------- transition


def test_transition_zero_params_gives_half():
    tp = M.TransitionParams(w=np.zeros((1, 3, 3)), b=np.zeros(3))
    cas = RNG.standard_normal((6, 3))
    w_act, w_bg = M.weight_transition(cas, tp)
    np.testing.assert_allclose(w_act, 0.5)
    np.testing.assert_allclose(w_bg, 0.5)


def test_transition_weights_sum_to_one():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        c = int(rng.integers(2, 6))
        tp = M.init_transition(c, rng)
        cas = rng.standard_normal((int(rng.integers(3, 20)), c)) * 3
        w_act, w_bg = M.weight_transition(cas, tp)
        np.testing.assert_allclose(w_act + w_bg, 1.0, atol=1e-15)
        assert w_act.min() >= 0 and w_act.max() <= 1


def test_transition_diagonal_conv_is_category_specific():
    # With an identity kernel, perturbing CAS column c changes only row c of
    # the action weights.
    c = 4
    tp = M.TransitionParams(w=np.eye(c)[None], b=np.zeros(c))
    cas = RNG.standard_normal((8, c))
    w0, _ = M.weight_transition(cas, tp)
    bumped = cas.copy()
    bumped[:, 2] += 1.0
    w1, _ = M.weight_transition(bumped, tp)
    changed = np.abs(w1 - w0).sum(axis=1) > 0
    assert changed.tolist() == [False, False, True, False]


def test_transition_class_agnostic_broadcasts_one_row():
    tp = M.TransitionParams(w=RNG.standard_normal((1, 3, 1)), b=np.zeros(1))
    cas = RNG.standard_normal((7, 3))
    w_act, _ = M.weight_transition(cas, tp, num_classes=3)
    assert w_act.shape == (3, 7)
    assert np.all(w_act == w_act[0])


# --------------------------------------------------------------------- aggregation


def test_aggregate_uniform_weights_give_fold_means():
    x = RNG.standard_normal((9, 5))
    w = np.full((2, 9), 0.7)
    agg = M.aggregate_features(x, w)
    for j in range(3):
        np.testing.assert_allclose(agg[:, j, :], np.tile(x[j::3].mean(axis=0), (2, 1)), atol=1e-12)


def test_aggregate_one_hot_selects_snippet():
    x = RNG.standard_normal((6, 3))
    w = np.zeros((1, 6))
    w[0, 4] = 1.0  # snippet 4 lives in fold 1
    agg = M.aggregate_features(x, w)
    np.testing.assert_allclose(agg[0, 1, :], x[4], atol=1e-12)
    # empty-mass folds fall back to the epsilon guard (stay finite)
    assert np.all(np.isfinite(agg))


def test_aggregate_hand_computed_folds():
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])[:, None]
    w = np.ones((1, 6))
    agg = M.aggregate_features(x, w)
    np.testing.assert_allclose(agg[0, :, 0], [2.5, 3.5, 4.5])


def test_aggregate_convex_hull_bounds():
    for seed in range(30):
        rng = np.random.default_rng(seed)
        t_len = int(rng.integers(3, 25))
        x = rng.standard_normal((t_len, 4))
        w = rng.uniform(0.05, 1.0, size=(3, t_len))  # bounded away from zero mass
        agg = M.aggregate_features(x, w)
        for j in range(3):
            fold = x[j::3]
            lo = fold.min(axis=0) - 1e-9
            hi = fold.max(axis=0) + 1e-9
            assert np.all(agg[:, j, :] >= lo) and np.all(agg[:, j, :] <= hi)


def test_aggregate_rejects_negative_weights():
    with pytest.raises(ValueError):
        M.aggregate_features(np.zeros((6, 2)), np.array([[1.0, -0.1, 0, 0, 0, 0]]))


# --------------------------------------------------------------------- post stream


def test_post_stream_same_inputs_same_scores():
    params = tiny_params(seed=3)
    agg = RNG.standard_normal((2, 3, 4))
    logits, s_o, s_tilde = M.post_stream_score(agg, agg, params.classifier)
    np.testing.assert_allclose(s_o, s_tilde)
    np.testing.assert_allclose(s_o, M.sigmoid(logits))


def test_post_stream_zero_params_give_half():
    cp = zero_classifier(4, 3, 2)
    agg = RNG.standard_normal((2, 3, 4))
    _, s_o, s_tilde = M.post_stream_score(agg, agg, cp)
    np.testing.assert_allclose(s_o, 0.5)
    np.testing.assert_allclose(s_tilde, 0.5)


def test_post_stream_wrong_length_rejected():
    cp = zero_classifier(4, 3, 2)
    with pytest.raises(ValueError):
        M.post_stream_score(np.zeros((2, 4, 4)), np.zeros((2, 4, 4)), cp)


def test_post_stream_uses_only_own_channel():
    # Zeroing the layer-3 filter of category c' != c leaves s_o[c] unchanged.
    params = tiny_params(d=4, h=3, c=3, seed=7)
    agg_a = RNG.standard_normal((3, 3, 4))
    agg_b = RNG.standard_normal((3, 3, 4))
    logits_before, _, _ = M.post_stream_score(agg_a, agg_b, params.classifier)
    params.classifier.w3[:, :, 1] = 0.0
    params.classifier.b3[1] = 0.0
    logits_after, _, _ = M.post_stream_score(agg_a, agg_b, params.classifier)
    assert logits_after[0] == pytest.approx(logits_before[0])
    assert logits_after[2] == pytest.approx(logits_before[2])


# --------------------------------------------------------------------- full forward


def test_forward_is_pure():
    params = tiny_params(seed=11)
    x = RNG.standard_normal((9, 4))
    a = M.forward_video(x, params, 1 / 8)
    b = M.forward_video(x, params, 1 / 8)
    np.testing.assert_array_equal(a.cas, b.cas)
    np.testing.assert_array_equal(a.s_o, b.s_o)
    np.testing.assert_array_equal(a.s_e, b.s_e)


def test_forward_shares_classifier_storage():
    params = tiny_params(seed=13)
    x = RNG.standard_normal((9, 4))
    before = M.forward_video(x, params, 1 / 8)
    params.classifier.w3 += 0.25  # one mutation reaches both streams
    after = M.forward_video(x, params, 1 / 8)
    assert params.post_params() is params.classifier
    assert np.abs(after.cas - before.cas).max() > 0
    assert np.abs(after.logits_post - before.logits_post).max() > 0


def test_forward_output_invariants():
    params = tiny_params(d=5, h=4, c=3, seed=17)
    x = RNG.standard_normal((12, 5))
    out = M.forward_video(x, params, 1 / 8)
    assert out.s_e.sum() == pytest.approx(1.0)
    assert np.all((out.s_o > 0) & (out.s_o < 1))
    assert np.all((out.s_tilde_o > 0) & (out.s_tilde_o < 1))
    np.testing.assert_allclose(out.w_action + out.w_background, 1.0, atol=1e-15)
    assert out.agg_action.shape == (3, 3, 5)


def test_unshared_copy_is_independent():
    params = tiny_params(seed=19, share=False)
    assert params.post_params() is not params.classifier
    x = RNG.standard_normal((9, 4))
    before = M.forward_video(x, params, 1 / 8)
    params.post_classifier.w3 += 0.5
    after = M.forward_video(x, params, 1 / 8)
    np.testing.assert_array_equal(after.cas, before.cas)  # pre stream untouched
    assert np.abs(after.logits_post - before.logits_post).max() > 0
