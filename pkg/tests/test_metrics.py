import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import accuracy_bruteforce, ap_bruteforce, iou_bruteforce, two_afc_bruteforce
from warpforge.metrics import (MetricConfig, ScoredSample, accuracy, average_precision,
                               best_threshold_accuracy, delta_psnr, epe_metric,
                               iou_at_threshold, psnr, psnr_scale_sweep, two_afc)
from warpforge.synth import synthesize_example


def _samples(scores, labels):
    return [ScoredSample(str(i), s, lab) for i, (s, lab) in enumerate(zip(scores, labels))]


def test_psnr_values():
    a = np.zeros((4, 4))
    assert psnr(a, a) == 99.0
    assert psnr(a, a + 0.1) == pytest.approx(20.0)
    assert psnr(a, a, MetricConfig(psnr_cap=50)) == 50.0
    with pytest.raises(ValueError):
        psnr(a, np.zeros((4, 5)))


def test_delta_psnr(face):
    img, mesh = face
    assert delta_psnr(img, img, img) == 0.0
    warped, flow, _ = synthesize_example(img, mesh, 0)
    from warpforge.flow import warp_image

    assert delta_psnr(img, warped, warp_image(warped, flow)) > 0


def test_epe_metric():
    gt = np.zeros((3, 3, 2))
    pred = np.zeros((3, 3, 2))
    pred[...] = [3.0, 4.0]
    assert epe_metric(pred, gt) == 5.0
    mask = np.zeros((3, 3))
    mask[0, 0] = 1
    assert epe_metric(pred, gt, mask) == pytest.approx(5.0 / 9)


def test_iou_cases():
    z = np.zeros((10, 10, 2))
    assert iou_at_threshold(z, z) == 1.0
    gt = z.copy()
    gt[2:6, 2:4, 0] = 4.0  # 8 px
    assert iou_at_threshold(gt, gt) == 1.0
    assert iou_at_threshold(z, gt) == 0.0
    shifted = z.copy()
    shifted[4:8, 2:4, 0] = 4.0  # overlaps 4 of 8, union 12
    assert iou_at_threshold(shifted, gt) == pytest.approx(1 / 3)
    assert iou_at_threshold(gt, shifted) == iou_at_threshold(shifted, gt)
    edge = z.copy()
    edge[0, 0] = [3.0, 0.0]  # magnitude exactly at threshold counts
    assert iou_at_threshold(edge, edge + 0) == 1.0 and iou_at_threshold(z, edge) == 0.0
    with pytest.raises(ValueError):
        iou_at_threshold(z, z, tau=0)


def test_ap_example():
    scores = [0.9, 0.8, 0.7, 0.6]
    labels = ["fake", "real", "fake", "real"]
    ap = average_precision(_samples(scores, labels))
    assert ap == pytest.approx((1 + 2 / 3) / 2)
    assert ap == ap_bruteforce(scores, labels)
    assert average_precision(_samples([1, 0], ["fake", "real"])) == 1.0
    with pytest.raises(ValueError):
        average_precision(_samples([1, 0], ["fake", "fake"]))


def test_ap_ties_follow_input_order():
    assert average_precision(_samples([0.5, 0.5], ["real", "fake"])) == 0.5
    assert average_precision(_samples([0.5, 0.5], ["fake", "real"])) == 1.0


def test_two_afc():
    assert two_afc([(0.1, 0.9)]) == 1.0
    assert two_afc([(0.9, 0.1)]) == 0.0
    assert two_afc([(0.3, 0.3)] * 5) == 0.5
    assert two_afc([(0, 1), (1, 0), (2, 2)]) == 0.5
    with pytest.raises(ValueError):
        two_afc([])


def test_accuracy_example():
    total, orig, mod = accuracy(_samples([0.2, 0.6, 0.9, 0.7], ["real", "real", "fake", "fake"]))
    assert (total, orig, mod) == (75.0, 50.0, 100.0)
    total, orig, mod = accuracy(_samples([0.2, 0.4], ["real", "real"]))
    assert total == 100.0 and orig == 100.0 and math.isnan(mod)
    # score equal to the threshold is called real
    assert accuracy(_samples([0.5], ["real"]))[0] == 100.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 8).map(lambda k: k / 8), st.booleans()),
                min_size=1, max_size=40))
def test_classification_matches_bruteforce(items):
    scores = [s for s, _ in items]
    labels = ["fake" if f else "real" for _, f in items]
    samples = _samples(scores, labels)
    got = accuracy(samples)
    want = accuracy_bruteforce(scores, labels, 0.5)
    assert all((a == b) or (math.isnan(a) and math.isnan(b)) for a, b in zip(got, want))
    n_fake = sum(lab == "fake" for lab in labels)
    # total accuracy is the count-weighted mean of the class accuracies
    if 0 < n_fake < len(labels):
        mix = (got[2] * n_fake + got[1] * (len(labels) - n_fake)) / len(labels)
        assert got[0] == pytest.approx(mix)
        assert average_precision(samples) == ap_bruteforce(scores, labels)
    pairs = list(zip(scores, reversed(scores)))
    assert two_afc(pairs) == two_afc_bruteforce(pairs)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.booleans()), min_size=2, max_size=30),
       st.floats(0.1, 10), st.floats(-3, 3))
def test_ranking_metrics_invariant_to_monotone_maps(items, scale, shift):
    scores = np.array([s for s, _ in items])
    labels = ["fake" if f else "real" for _, f in items]
    if len(set(labels)) < 2:
        return
    mapped = scale * scores ** 3 + shift
    # strictly increasing maps can merge scores through rounding; skip those draws
    if len(np.unique(mapped)) != len(np.unique(scores)):
        return
    a = average_precision(_samples(scores, labels))
    b = average_precision(_samples(mapped, labels))
    assert a == pytest.approx(b, abs=1e-12)
    pairs = list(zip(scores[::2], scores[1::2]))
    mpairs = list(zip(mapped[::2], mapped[1::2]))
    if pairs:
        assert two_afc(pairs) == two_afc(mpairs)


def test_iou_matches_bruteforce(rng):
    for _ in range(20):
        pred = rng.normal(0, 3, (7, 9, 2))
        gt = rng.normal(0, 3, (7, 9, 2))
        tau = float(rng.uniform(0.5, 5))
        assert iou_at_threshold(pred, gt, tau) == iou_bruteforce(pred, gt, tau)


def test_best_threshold():
    samples = _samples([0.1, 0.2, 0.3, 0.4], ["real", "real", "fake", "fake"])
    t, (total, orig, mod) = best_threshold_accuracy(samples)
    assert 0.2 <= t < 0.3 and total == 100.0
    samples = _samples([0.9, 0.8, 0.1], ["real", "real", "fake"])
    assert best_threshold_accuracy(samples)[1][0] == pytest.approx(200 / 3)


def test_psnr_sweep(face):
    img, mesh = face
    warped, flow, _ = synthesize_example(img, mesh, 5)
    scales = [0.0, 0.5, 1.0, 1.5]
    sweep = dict(psnr_scale_sweep(img, warped, flow, scales))
    assert sweep[0.0] == psnr(img, warped)
    assert max(sweep, key=sweep.get) == 1.0
    ident = psnr_scale_sweep(img, img, np.zeros_like(flow), [0.0, 1.0])
    assert ident == [(0.0, 99.0), (1.0, 99.0)]
    with pytest.raises(ValueError):
        psnr_scale_sweep(img, img, flow, [])


def test_scored_sample_validation():
    with pytest.raises(ValueError):
        ScoredSample("a", float("nan"), "fake")
    with pytest.raises(ValueError):
        ScoredSample("a", 0.3, "maybe")
