"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s`.  The directional
reproduction criteria (5-7) share one training fixture: four model variants
trained on the default synthetic corpus for three seeds; budget is a few
minutes of CPU.
"""

import math
import time

import numpy as np
import pytest

from weaktal import model as M
from weaktal.cli import main as cli_main
from weaktal.evaluate import average_precision
from weaktal.localize import Detection, LocalizeConfig, nms, temporal_iou, threshold_runs
from weaktal.losses import LossBreakdown, consistency_a2c, consistency_c2c
from weaktal.synthetic import SyntheticCorpusSpec, generate_corpus
from weaktal.train import TrainConfig, run_gradient_check
from weaktal.experiments import ensemble_scores, run_variant

# Protocol for criteria 5-7: the default synthetic corpus and a fixed
# training recipe.  The floor is the frozen regression bound: the reference
# run of this exact pipeline gave a seed-median full-model mAP@0.5 of 0.699
# (per-seed 0.697 / 0.839 / 0.699); 0.65 leaves margin for BLAS-level
# reduction differences while staying above the 0.60 target level.
ACCEPT_SEEDS = (0, 1, 2)
ACCEPT_EPOCHS = 120
ACCEPT_HIDDEN = 64
ACCEPT_LR = 1e-3
FULL_MAP50_FLOOR = 0.65


def _report(num, ok, text):
    print(f"\ncriterion {num}: {'PASS' if ok else 'FAIL'} - {text}")
    assert ok, f"criterion {num} failed: {text}"


# ------------------------------------------------------------------ 1


def test_criterion_1_gradient_correctness():
    start = time.time()
    results = run_gradient_check(seed=0, epsilon=1e-5)
    elapsed = time.time() - start
    worst = max(err for _, err in results)
    ok = len(results) == 8 and worst <= 1e-4 and elapsed < 60
    _report(1, ok, f"8 flag combos, max rel err {worst:.2e} (<= 1e-4), {elapsed:.1f}s (< 60s)")


# ------------------------------------------------------------------ 2


def test_criterion_2_loss_closed_forms():
    errs = []
    errs.append(abs(consistency_c2c(np.array([1.0, 0.0]), np.array([0.0, 1.0])) - 1.0))
    errs.append(abs(consistency_c2c(np.array([0.5, 0.3, 0.2]), np.array([0.2, 0.3, 0.5])) - 0.06))
    errs.append(
        abs(
            consistency_a2c(np.array([0.5, 0.9]), np.array([0.5, 0.9]), np.array([1, 0]))
            - math.log(2)
        )
    )
    a2c_expected = -(math.log(0.9) + math.log(0.8) + math.log(0.9) + math.log(0.8)) / 4
    errs.append(
        abs(
            consistency_a2c(
                np.array([0.9, 0.8, 0.3]), np.array([0.1, 0.2, 0.7]), np.array([1, 1, 0])
            )
            - a2c_expected
        )
    )
    breakdown = LossBreakdown(1.0, 1.0, 1.0, 1.0, alpha=0.05, beta=5.0)
    exact = breakdown.total == 1.0 + 1.0 + 0.05 * 1.0 + 5.0 * 1.0
    ok = max(errs) <= 1e-9 and exact
    _report(2, ok, f"hand-computed losses, max abs err {max(errs):.2e} (<= 1e-9), Eq-total exact={exact}")


# ------------------------------------------------------------------ 3


def test_criterion_3_structural_invariants():
    rng = np.random.default_rng(0)
    worst_sum = 0.0
    for _ in range(1000):
        c = int(rng.integers(2, 7))
        t_len = int(rng.integers(3, 40))
        tp = M.init_transition(c, rng)
        cas = rng.standard_normal((t_len, c)) * rng.uniform(0.5, 4.0)
        w_act, w_bg = M.weight_transition(cas, tp)
        worst_sum = max(worst_sum, float(np.abs(w_act + w_bg - 1.0).max()))
    hull_ok = True
    for _ in range(200):
        t_len = int(rng.integers(3, 30))
        x = rng.standard_normal((t_len, 5))
        w = rng.uniform(0.01, 1.0, size=(4, t_len))
        agg = M.aggregate_features(x, w)
        for j in range(3):
            fold = x[j::3]
            if not (
                np.all(agg[:, j, :] >= fold.min(axis=0) - 1e-9)
                and np.all(agg[:, j, :] <= fold.max(axis=0) + 1e-9)
            ):
                hull_ok = False
    cp = M.init_classifier(6, 4, 3, rng)
    lengths_ok = all(
        M.classifier_forward(rng.standard_normal((t, 6)), cp).shape == (t, 3)
        for t in (3, 9, 100)
    )
    ok = worst_sum <= 1e-12 and hull_ok and lengths_ok
    _report(
        3,
        ok,
        f"|Wa+Wb-1| max {worst_sum:.1e} (<= 1e-12) over 1000 inputs; "
        f"convex hull bounds {hull_ok}; length preservation {lengths_ok}",
    )


# ------------------------------------------------------------------ 4


def _enumerate_runs(activation, threshold):
    out, start = [], None
    for i, val in enumerate(activation):
        if val >= threshold and start is None:
            start = i
        if val < threshold and start is not None:
            out.append((start, i))
            start = None
    if start is not None:
        out.append((start, len(activation)))
    return out


def _greedy_nms_oracle(dets, thr):
    pool = sorted(dets, key=lambda d: (-d.score, d.start, d.end))
    kept = []
    while pool:
        best = pool[0]
        kept.append(best)
        pool = [d for d in pool[1:] if temporal_iou((best.start, best.end), (d.start, d.end)) <= thr]
    return kept


def test_criterion_4_oracle_equivalence():
    rng = np.random.default_rng(1)
    tag_ok = True
    for trial in range(1000):
        t_len = int(rng.integers(1, 13))
        activation = (
            rng.uniform(0, 1, t_len) if trial % 2 else rng.integers(0, 2, t_len).astype(float)
        )
        threshold = float(rng.uniform(0.05, 0.95))
        if threshold_runs(activation, threshold) != _enumerate_runs(activation, threshold):
            tag_ok = False
    nms_ok = True
    for _ in range(1000):
        dets = []
        for _ in range(int(rng.integers(0, 9))):
            start = float(rng.uniform(0, 10))
            dets.append(
                Detection("v", round(start, 3), round(start + float(rng.uniform(0.3, 5)), 3), "a",
                          round(float(rng.uniform(0, 1)), 3))
            )
        thr = float(rng.choice([0.3, 0.5, 0.7]))
        if nms(dets, thr) != _greedy_nms_oracle(dets, thr):
            nms_ok = False
    iou_ok = (
        temporal_iou((1.0, 3.0), (1.0, 3.0)) == 1.0
        and temporal_iou((0.0, 1.0), (2.0, 3.0)) == 0.0
        and abs(temporal_iou((0.0, 4.0), (2.0, 6.0)) - 1.0 / 3.0) < 1e-15
    )
    gt = [Detection("v", 1, 3, "a", 1.0)]
    ap_ok = (
        average_precision([Detection("v", 1, 3, "a", 0.9)], gt, 0.5) == 1.0
        and average_precision(
            [Detection("v", 10, 12, "a", 0.9), Detection("v", 1, 3, "a", 0.8)], gt, 0.5
        )
        == pytest.approx(0.5)
        and average_precision([], gt, 0.5) == 0.0
    )
    ok = tag_ok and nms_ok and iou_ok and ap_ok
    _report(
        4,
        ok,
        f"tag grouping vs enumeration {tag_ok}; nms vs greedy oracle {nms_ok}; "
        f"IoU fixtures {iou_ok}; AP fixtures {ap_ok}",
    )


# ------------------------------------------------------------------ 5-7 shared fixture


@pytest.fixture(scope="module")
def trained_grid():
    loc = LocalizeConfig()
    start = time.time()
    grid = {}
    for seed in ACCEPT_SEEDS:
        corpus = generate_corpus(SyntheticCorpusSpec(seed=seed))
        cats = list(corpus.categories)
        cfg = TrainConfig(epochs=ACCEPT_EPOCHS, hidden=ACCEPT_HIDDEN, seed=seed,
                          learning_rate=ACCEPT_LR)
        per_seed = {}
        for name in ("full", "pre_only", "post_only", "unshared_full"):
            per_seed[name] = run_variant(
                name, list(corpus.train), list(corpus.test), cats, cfg, loc
            )
        per_seed["ensemble"] = ensemble_scores(
            per_seed["pre_only"], per_seed["post_only"], list(corpus.test), cats, loc, cfg.k_ratio
        )
        grid[seed] = per_seed
    grid["elapsed"] = time.time() - start
    return grid


def _median(grid, name, attr):
    return float(np.median([getattr(grid[s][name], attr) for s in ACCEPT_SEEDS]))


def test_criterion_5_directional_ablation(trained_grid):
    full = _median(trained_grid, "full", "map50")
    pre = _median(trained_grid, "pre_only", "map50")
    post = _median(trained_grid, "post_only", "map50")
    unshared = _median(trained_grid, "unshared_full", "map50")
    elapsed = trained_grid["elapsed"]
    ok = (
        full > pre
        and full > post
        and full > unshared
        and full >= FULL_MAP50_FLOOR
        and elapsed < 900
    )
    _report(
        5,
        ok,
        f"median mAP@0.5 full={full:.3f} > pre={pre:.3f}, post={post:.3f}, "
        f"unshared={unshared:.3f}; floor {FULL_MAP50_FLOOR} met; grid took {elapsed:.0f}s (< 900s)",
    )


def test_criterion_6_frame_accuracy_ordering(trained_grid):
    full = _median(trained_grid, "full", "frame_acc")
    pre = _median(trained_grid, "pre_only", "frame_acc")
    post = _median(trained_grid, "post_only", "frame_acc")
    ok = full >= pre and full >= post
    _report(6, ok, f"median frame accuracy full={full:.3f} >= pre={pre:.3f} and >= post={post:.3f}")


def test_criterion_7_ensemble_inferiority(trained_grid):
    best_ens = float(
        np.median([max(trained_grid[s]["ensemble"].values()) for s in ACCEPT_SEEDS])
    )
    full = _median(trained_grid, "full", "map50")
    ok = best_ens < full
    _report(7, ok, f"best ensemble median mAP@0.5 {best_ens:.3f} < full {full:.3f}")


# ------------------------------------------------------------------ 8


def test_criterion_8_determinism(tmp_path):
    corpus_dir = tmp_path / "corpus"
    synth = [
        "synth", "--out", str(corpus_dir), "--seed", "5", "--classes", "3", "--dim", "6",
        "--snippets", "18", "--train-videos", "8", "--test-videos", "3", "--snr", "8.0",
    ]
    assert cli_main(synth) == 0
    cfg = {
        "data": {"manifest": str(corpus_dir / "train.jsonl")},
        "train": {"epochs": 3, "hidden": 8, "batch_size": 4, "seed": 7},
    }
    import json as _json

    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(_json.dumps(cfg))
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli_main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
        dets = tmp_path / f"dets_{run}.json"
        metrics = tmp_path / f"metrics_{run}.csv"
        assert cli_main([
            "infer", "--checkpoint", str(out / "checkpoints" / "final.ckpt"),
            "--manifest", str(corpus_dir / "test.jsonl"), "--out", str(dets),
        ]) == 0
        assert cli_main([
            "eval", "--detections", str(dets), "--groundtruth", str(corpus_dir / "groundtruth.json"),
            "--thresholds", "0.1:0.2:0.7", "--out", str(metrics),
        ]) == 0
        outputs.append(
            (
                (out / "checkpoints" / "final.ckpt").read_bytes(),
                (out / "checkpoints" / "best.ckpt").read_bytes(),
                metrics.read_bytes(),
            )
        )
    ok = outputs[0] == outputs[1]
    _report(8, ok, "two identical runs: checkpoints and metrics.csv byte-identical")
