"""Acceptance gate: the primary verification criteria, one test each.

Fast criteria (gradients, normalization, equivariance, degeneration,
evaluator oracle, protocol constants) always run. The training-based
criteria (convergence, ablation ordering, heterogeneous-vs-homogeneous)
run real multi-minute training jobs and are marked ``slow``.
"""

import time

import numpy as np
import pytest

from hoigraph import autodiff as ad
from hoigraph.cli import main as cli_main
from hoigraph.config import TrainConfig
from hoigraph.evaluation import (HoiGroundTruth, HoiPrediction, evaluate_map,
                                 ground_truth_from_scenes, predict_scenes,
                                 split_by_complexity)
from hoigraph.model import (baseline_forward, compute_context_vectors, forward,
                            init_graph, init_params, interactiveness_weights,
                            intra_attention)
from hoigraph.scene import SceneInput
from hoigraph.spatial import BoundingBox
from hoigraph.synth import SynthConfig, generate_synthetic_scenes
from hoigraph.training import learning_rate, train

from test_evaluation import oracle_ap

BENCH_SPEC = SynthConfig(noise=0.1, n_classes=4)


def small_scenes(count, seed, n_classes=3, feature_len=8):
    spec = SynthConfig(n_classes=n_classes, feature_len=feature_len)
    return generate_synthetic_scenes(count, seed, spec)


# ------------------------------------------------------------------ gradients

def test_gradient_integrity():
    """Full-model finite-difference check on an N=2, M=2, D=4, A=3 scene:
    max relative error < 1e-4, in under 30 seconds."""
    t0 = time.time()
    # Seed pinned: finite differences are unreliable within eps of a ReLU
    # or max-tie kink, and some random scenes land on one.
    rc = cli_main(["gradcheck", "--n", "2", "--m", "2", "--d", "4", "--a", "3",
                   "--seed", "1"])
    elapsed = time.time() - t0
    assert rc == 0
    assert elapsed < 30.0


# -------------------------------------------------------------- normalization

def test_attention_and_softmax_rows_normalized():
    """Over 100 random scenes every non-empty intra-attention row and every
    inter-message softmax row sums to 1 within 1e-12."""
    cfg = TrainConfig(D=8, A=3, F=8)
    store = init_params(cfg, seed=7)
    for item in small_scenes(100, 42):
        g = init_graph(item.scene, store, cfg)
        compute_context_vectors(g, store)
        for r, k in ((g.r_sub, g.n), (g.r_obj, g.m)):
            alpha = intra_attention(r, True).data
            if k > 1:
                np.testing.assert_allclose(alpha.sum(axis=1), 1.0,
                                           rtol=0, atol=1e-12)
            else:
                assert not alpha.any()     # singleton: empty neighborhood
        w = interactiveness_weights(g, store)
        beta_sub = ad.softmax(w, axis=1).data
        beta_obj = ad.softmax(w, axis=0).data
        np.testing.assert_allclose(beta_sub.sum(axis=1), 1.0, rtol=0, atol=1e-12)
        np.testing.assert_allclose(beta_obj.sum(axis=0), 1.0, rtol=0, atol=1e-12)


# --------------------------------------------------------------- equivariance

def test_permutation_equivariance():
    """Permuting a scene's subjects and objects permutes the prediction grid
    and nothing else, within 1e-9, over 50 random scenes."""
    cfg = TrainConfig(D=8, A=3, F=8)
    store = init_params(cfg, seed=3)
    rng = np.random.default_rng(17)
    for item in small_scenes(50, 7):
        sc = item.scene
        ps = rng.permutation(sc.n)
        po = rng.permutation(sc.m)
        permuted = SceneInput(image_id=sc.image_id,
                              subjects=[sc.subjects[i] for i in ps],
                              objects=[sc.objects[j] for j in po],
                              width=sc.width, height=sc.height)
        y = forward(sc, store, cfg).y.data
        y_perm = forward(permuted, store, cfg).y.data
        np.testing.assert_allclose(y_perm, y[ps][:, po], rtol=0, atol=1e-9)


# ------------------------------------------------------- degenerate baseline

def test_degenerates_to_baseline_bit_for_bit():
    """With both message types disabled and the update map zeroed, the full
    forward pass equals the standalone baseline classifier exactly."""
    cfg = TrainConfig(D=8, A=3, F=8, use_intra=False, use_inter=False,
                      use_interactiveness_weight=False)
    store = init_params(cfg, seed=11)
    store["mu.W"].data[:] = 0.0
    store["mu.b"].data[:] = 0.0
    for item in small_scenes(20, 23):
        y_full = forward(item.scene, store, cfg).y.data
        y_base = baseline_forward(item.scene, store, cfg).data
        assert np.array_equal(y_full, y_base)


# ------------------------------------------------------------------ evaluator

def test_evaluator_matches_brute_force_oracle():
    """evaluate_map equals a from-scratch PR oracle (< 1e-12) on 200
    randomized micro-instances with up to 10 predictions each."""
    rng = np.random.default_rng(321)
    boxes = [BoundingBox(10 * k, 0, 10 * k + 12, 15) for k in range(6)]
    for _ in range(200):
        imgs = [f"im{k}" for k in range(int(rng.integers(1, 4)))]
        preds = [HoiPrediction(imgs[rng.integers(len(imgs))],
                               boxes[rng.integers(6)], boxes[rng.integers(6)],
                               int(rng.integers(2)), float(rng.uniform()))
                 for _ in range(int(rng.integers(0, 11)))]
        gts = [HoiGroundTruth(imgs[rng.integers(len(imgs))],
                              boxes[rng.integers(6)], boxes[rng.integers(6)],
                              int(rng.integers(2)))
               for _ in range(int(rng.integers(1, 6)))]
        rep = evaluate_map(preds, gts)
        for cls, ap in rep.per_class_ap.items():
            want = oracle_ap([p for p in preds if p.action == cls],
                             [g for g in gts if g.action == cls])
            assert abs(ap - want) < 1e-12


def test_evaluator_hand_case():
    """TP(0.9), FP(0.8), TP(0.7) against 2 ground truths: AP = 5/6."""
    a = BoundingBox(0, 0, 10, 10)
    b = BoundingBox(100, 100, 120, 130)
    far = BoundingBox(200, 0, 230, 30)
    preds = [HoiPrediction("i", a, b, 0, 0.9),
             HoiPrediction("i", far, far, 0, 0.8),
             HoiPrediction("i", b, a, 0, 0.7)]
    gts = [HoiGroundTruth("i", a, b, 0), HoiGroundTruth("i", b, a, 0)]
    assert evaluate_map(preds, gts).map_ == pytest.approx(5 / 6, abs=1e-12)


# ------------------------------------------------------------------ constants

def test_default_protocol_constants():
    """The default config carries the reference training protocol, and the
    step schedule produces the expected decayed rates."""
    cfg = TrainConfig()
    assert cfg.lam == 6.0
    assert cfg.T == 2
    assert cfg.lr0 == 0.001
    assert cfg.decay == 0.6
    assert cfg.decay_every == 10
    assert cfg.batch_size == 4
    assert cfg.epochs == 40
    assert learning_rate(10, cfg) == pytest.approx(0.0006, rel=1e-12)
    assert learning_rate(25, cfg) == pytest.approx(0.00036, rel=1e-12)


# ------------------------------------------------------- training benchmark

def benchmark_data():
    train_set = generate_synthetic_scenes(500, 0, BENCH_SPEC)
    test_set = generate_synthetic_scenes(200, 1000, BENCH_SPEC)
    return train_set, test_set, ground_truth_from_scenes(test_set)


@pytest.mark.slow
def test_synthetic_convergence():
    """The full model reaches test mAP >= 0.90 on the 500/200 synthetic
    benchmark within 40 epochs and under 5 minutes of training."""
    train_set, test_set, gts = benchmark_data()
    cfg = TrainConfig(epochs=20, seed=0)          # well within the 40 allowed
    t0 = time.time()
    store, _ = train(train_set, cfg)
    elapsed = time.time() - t0
    rep = evaluate_map(predict_scenes(test_set, store, cfg), gts)
    assert elapsed < 300.0
    assert rep.map_ >= 0.90


ABLATION_VARIANTS = {
    "full": {},
    "intra-only": {"use_inter": False},
    "inter-only": {"use_intra": False},
    "baseline": {"use_intra": False, "use_inter": False},
    "no-attention": {"use_intra_attention": False,
                     "use_interactiveness_weight": False},
    "homogeneous-intra": {"homogeneous_mode": "intra"},
    "homogeneous-inter": {"homogeneous_mode": "inter"},
}
ABLATION_SEEDS = (0, 1, 2)
ABLATION_EPOCHS = 8


@pytest.fixture(scope="module")
def ablation_results():
    """3-seed mean test mAP per variant on the shared benchmark, plus the
    complex/simple breakdown. One multi-minute training run per
    (seed, variant)."""
    train_set, test_set, gts = benchmark_data()
    complex_scenes, _ = split_by_complexity(test_set)
    complex_ids = {s.scene.image_id for s in complex_scenes}
    gt_cx = [g for g in gts if g.image_id in complex_ids]
    gt_sx = [g for g in gts if g.image_id not in complex_ids]
    assert gt_cx and gt_sx
    per_seed = {v: [] for v in ABLATION_VARIANTS}
    for seed in ABLATION_SEEDS:
        for name, kw in ABLATION_VARIANTS.items():
            cfg = TrainConfig(epochs=ABLATION_EPOCHS, seed=seed, **kw)
            store, _ = train(train_set, cfg)
            preds = predict_scenes(test_set, store, cfg)
            per_seed[name].append((
                evaluate_map(preds, gts).map_,
                evaluate_map([p for p in preds if p.image_id in complex_ids],
                             gt_cx).map_,
                evaluate_map([p for p in preds if p.image_id not in complex_ids],
                             gt_sx).map_))
    return {name: tuple(np.mean(rows, axis=0))
            for name, rows in per_seed.items()}


@pytest.mark.slow
def test_ablation_ordering_intra(ablation_results):
    """3-seed means: full > intra-only > baseline."""
    r = {k: v[0] for k, v in ablation_results.items()}
    assert r["full"] > r["intra-only"] > r["baseline"]


@pytest.mark.slow
def test_ablation_ordering_inter(ablation_results):
    """3-seed means: full > inter-only > baseline."""
    r = {k: v[0] for k, v in ablation_results.items()}
    assert r["full"] > r["inter-only"] > r["baseline"]


@pytest.mark.slow
def test_attention_removal_costs_two_points(ablation_results):
    """Removing both attention mechanisms (uniform intra weights, uniform
    inter weights, no interactiveness loss) costs >= 2 mAP points."""
    assert (ablation_results["full"][0]
            - ablation_results["no-attention"][0]) >= 0.02


@pytest.mark.slow
def test_intra_gain_is_larger_on_complex_scenes(ablation_results):
    """Intra-class messages help most where same-kind neighbors exist:
    the intra-only gain over baseline is larger on multi-entity scenes
    than on single-pair scenes."""
    gain_cx = ablation_results["intra-only"][1] - ablation_results["baseline"][1]
    gain_sx = ablation_results["intra-only"][2] - ablation_results["baseline"][2]
    assert gain_cx > gain_sx


@pytest.mark.slow
def test_heterogeneous_beats_homogeneous(ablation_results):
    """Typed nodes with kind-specific functions beat both collapsed
    homogeneous-graph modes, 3-seed mean."""
    assert ablation_results["full"][0] > ablation_results["homogeneous-intra"][0]
    assert ablation_results["full"][0] > ablation_results["homogeneous-inter"][0]
