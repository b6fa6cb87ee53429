import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from ecogspeech.errors import (
    InvalidInputError,
    UndefinedTaskError,
    UndefinedTestError,
)
from ecogspeech.evaluation import (
    accuracy,
    chance_accuracy,
    channel_capacity_exact,
    channel_capacity_wolpaw,
    channel_report,
    confusion_from_probs,
    itr,
    mutual_information,
    restrict_to_task,
    scaling_slope,
    soft_confusion,
    timepoint_decoding,
    wsrt_bonferroni,
)
from ecogspeech.dataset import cv_inventory
from ecogspeech.models import NetworkParams, NetworkSpec, TrainConfig, TrainedModel
from ecogspeech.signal_processing import SpectralTensor
from oracles import binary_entropy, grid_capacity, simplex_grid

BSC = np.array([[0.9, 0.1], [0.1, 0.9]])


def symmetric_channel(n, acc):
    c = np.full((n, n), (1 - acc) / (n - 1))
    np.fill_diagonal(c, acc)
    return c


def random_channel(rng, n, m=None):
    c = rng.random((n, m or n)) ** 3
    return c / c.sum(axis=1, keepdims=True)


def test_accuracy():
    assert accuracy([1, 2], [1, 2]) == 1.0
    assert accuracy([0, 0], [1, 1]) == 0.0
    assert accuracy([1, 2, 3, 4], [1, 2, 3, 0]) == 0.75
    with pytest.raises(InvalidInputError):
        accuracy([], [])


def test_chance_single_class():
    assert chance_accuracy({"a": 5}, ["a"] * 4).mean == 1.0


@pytest.mark.parametrize("k,expected,tol", [(57, 1 / 57, 0.003), (19, 0.053, 0.005)])
def test_chance_uniform(k, expected, tol):
    names = [f"c{i}" for i in range(k)]
    est = chance_accuracy(Counter(names * 20), names * 10, seed=1)
    assert est.n_resamples == 100 and len(est.values) == 100
    assert est.mean == pytest.approx(expected, abs=tol)


def test_chance_empty():
    with pytest.raises(InvalidInputError):
        chance_accuracy({}, ["a"])


def test_restrict_to_task():
    assert restrict_to_task(["bi"], ["ba"], "consonant") == 1.0
    assert restrict_to_task(["ba"], ["da"], "vowel") == 1.0
    assert restrict_to_task(["bi"], ["da"], "vowel") == 0.0
    inv = list(cv_inventory())
    for task in ("consonant", "vowel", "location", "degree"):
        assert restrict_to_task(inv, inv, task) == 1.0
    assert restrict_to_task(["ha", "ba"], ["fa", "pa"], "location") == 1.0
    with pytest.raises(UndefinedTaskError):
        restrict_to_task(["ba"], ["ha"], "degree")


def test_restriction_never_lowers_accuracy(rng):
    inv = np.array(cv_inventory())
    truth = inv[rng.integers(0, 57, 300)]
    pred = np.where(rng.random(300) < 0.4, truth, inv[rng.integers(0, 57, 300)])
    for task in ("consonant", "vowel", "location", "degree"):
        from ecogspeech.dataset import EXCLUDED, derive_task_labels
        kept = [derive_task_labels(t, task) is not EXCLUDED for t in truth]
        full = accuracy(pred[kept], truth[kept])
        assert restrict_to_task(pred.tolist(), truth.tolist(), task) >= full


def test_confusion_rows():
    probs = np.array([[0.7, 0.3], [0.4, 0.6], [0.2, 0.8]])
    summary = confusion_from_probs(probs, [0, 0, 1], ("a", "b"))
    np.testing.assert_array_equal(summary.hard, [[1, 1], [0, 1]])
    np.testing.assert_allclose(summary.soft, [[0.55, 0.45], [0.2, 0.8]])
    assert summary.accuracy == pytest.approx(2 / 3)
    with pytest.warns(UserWarning):
        s = confusion_from_probs(probs, [0, 0, 0], ("a", "b"))
    assert s.excluded == ("b",) and s.soft.shape == (1, 2)


def _fixed_model(weights, bias, classes):
    w = np.asarray(weights, dtype=float)
    spec = NetworkSpec(w.shape[0], w.shape[1])
    return TrainedModel(spec, NetworkParams([w], [np.asarray(bias, dtype=float)]),
                        TrainConfig(), classes)


def test_soft_confusion_one_hot_and_uniform(rng):
    x = np.repeat(np.eye(3), 4, axis=0)
    y = np.repeat(np.arange(3), 4)
    one_hot = _fixed_model(100 * np.eye(3), np.zeros(3), ("a", "b", "c"))
    np.testing.assert_allclose(soft_confusion(one_hot, x, y).soft, np.eye(3), atol=1e-12)
    uniform = _fixed_model(np.zeros((3, 3)), np.zeros(3), ("a", "b", "c"))
    np.testing.assert_allclose(soft_confusion(uniform, x, y).soft, 1 / 3)
    noisy = _fixed_model(rng.standard_normal((3, 3)), rng.standard_normal(3), ("a", "b", "c"))
    s = soft_confusion(noisy, rng.standard_normal((30, 3)), rng.integers(0, 3, 30))
    np.testing.assert_allclose(s.soft.sum(axis=1), 1.0, atol=1e-6)


def test_diagonal_hard_confusion_has_diagonal_soft_max(rng):
    for _ in range(20):
        logits = rng.standard_normal((40, 4))
        y = np.argmax(logits, axis=1)
        if len(set(y)) < 4:
            continue
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        s = confusion_from_probs(probs, y, tuple("abcd"))
        assert np.all(np.argmax(s.soft, axis=1) == np.arange(4))


def test_mutual_information_cases():
    assert mutual_information(np.eye(4), np.full(4, 0.25)) == pytest.approx(2.0)
    assert mutual_information(np.tile([0.2, 0.8], (3, 1)), [0.3, 0.3, 0.4]) == pytest.approx(0.0)
    assert mutual_information(BSC, [0.5, 0.5]) == pytest.approx(1 - binary_entropy(0.1))
    assert 1 - binary_entropy(0.1) == pytest.approx(0.5310, abs=1e-4)
    with pytest.raises(InvalidInputError):
        mutual_information([[0.5, 0.6]], [1.0])
    with pytest.raises(InvalidInputError):
        mutual_information(np.eye(2), [0.7, 0.7])


def test_capacity_identity_and_bsc():
    for k in range(2, 58):
        cap, prior = channel_capacity_exact(np.eye(k))
        assert abs(cap - math.log2(k)) < 1e-9
    cap, prior = channel_capacity_exact(BSC)
    assert cap == pytest.approx(0.5310, abs=1e-4)
    np.testing.assert_allclose(prior, [0.5, 0.5], atol=1e-6)


def test_capacity_matches_grid_oracle():
    rng = np.random.default_rng(0)
    grid = simplex_grid(1e-3)
    for _ in range(20):
        cond = random_channel(rng, 3)
        cap, prior = channel_capacity_exact(cond)
        assert abs(cap - grid_capacity(cond, grid)) < 1e-4
        assert mutual_information(cond, prior) == pytest.approx(cap, abs=1e-6)


def test_capacity_bounds_mutual_information(rng):
    for _ in range(50):
        n, m = rng.integers(2, 7, size=2)
        cond = random_channel(rng, n, m)
        cap, _ = channel_capacity_exact(cond)
        prior = rng.dirichlet(np.ones(n))
        assert cap >= mutual_information(cond, prior) - 1e-9
        assert 0 <= cap <= math.log2(min(n, m)) + 1e-9


def test_capacity_permutation_invariant(rng):
    cond = random_channel(rng, 5)
    perm_rows, perm_cols = rng.permutation(5), rng.permutation(5)
    a, _ = channel_capacity_exact(cond)
    b, _ = channel_capacity_exact(cond[perm_rows][:, perm_cols])
    assert a == pytest.approx(b, abs=1e-8)


def test_wolpaw_values():
    assert channel_capacity_wolpaw(57, 0.383) == pytest.approx(1.29, abs=0.02)
    assert channel_capacity_wolpaw(8, 1.0) == pytest.approx(3.0)
    assert channel_capacity_wolpaw(5, 0.2) == pytest.approx(0.0, abs=1e-12)
    assert channel_capacity_wolpaw(2, 0.0) == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        channel_capacity_wolpaw(1, 0.5)


def test_wolpaw_vowel_row_uses_formula():
    # N=3 at 0.711 gives 0.43 bits by the formula.
    assert channel_capacity_wolpaw(3, 0.711) == pytest.approx(0.43, abs=0.01)


@pytest.mark.parametrize("n,acc", [(2, 0.8), (5, 0.5), (57, 0.383)])
def test_wolpaw_equals_exact_on_symmetric_channel(n, acc):
    cap, _ = channel_capacity_exact(symmetric_channel(n, acc))
    assert abs(cap - channel_capacity_wolpaw(n, acc)) < 1e-9


def test_itr():
    assert itr(1.3) == pytest.approx(1.0)
    assert itr(0.0) == 0.0
    assert itr(3.09) == pytest.approx(2.377, abs=1e-3)
    with pytest.raises(InvalidInputError):
        itr(1.0, 0.0)


def test_channel_report_perfect_and_hard_variant():
    probs = np.repeat(np.eye(4), 3, axis=0)
    summary = confusion_from_probs(probs, np.repeat(np.arange(4), 3), tuple("abcd"))
    for use in ("soft", "hard"):
        rep = channel_report(summary, use)
        assert rep.capacity == pytest.approx(2.0, abs=1e-9)
        assert rep.wolpaw == pytest.approx(2.0)
        assert rep.mutual_information == pytest.approx(2.0)
    with pytest.raises(InvalidInputError):
        channel_report(summary, "both")
    assert set(rep.to_dict()) >= {"capacity_bits", "wolpaw_bits", "itr_bits_per_s"}


def test_scaling_slope_cases(rng):
    n = np.array([100, 200, 300, 400])
    slope, se = scaling_slope(n, 1 + 0.005 * n)
    assert slope == pytest.approx(5.0) and se == pytest.approx(0.0, abs=1e-9)
    assert scaling_slope(n, np.full(4, 2.0))[0] == pytest.approx(0.0)
    x = rng.uniform(0, 2000, 10_000)
    y = 0.5 + 0.002 * x + rng.normal(0, 0.3, x.size)
    slope, se = scaling_slope(x, y)
    assert abs(slope - 2.0) < 2 * se
    with pytest.raises(InvalidInputError):
        scaling_slope([5, 5, 5], [1, 2, 3])


def test_wsrt_floor():
    a = np.arange(1, 11) + 0.5
    t, p = wsrt_bonferroni(a, np.zeros(10))
    assert t == 55
    assert p == pytest.approx(2 / 1024)
    assert wsrt_bonferroni(np.zeros(10), a)[1] == pytest.approx(2 / 1024)
    assert wsrt_bonferroni(a, np.zeros(10), alternative="greater")[1] == pytest.approx(1 / 1024)
    assert wsrt_bonferroni(a, np.zeros(10), alternative="less")[1] == pytest.approx(1.0)


def test_wsrt_sign_direction(rng):
    a = rng.permutation(np.arange(12.0))
    _, p_up = wsrt_bonferroni(a + 1.0, a, alternative="greater")
    _, p_down = wsrt_bonferroni(a - 1.0, a, alternative="greater")
    assert p_up < 0.01 and p_down == 1.0


def test_wsrt_bonferroni_cap():
    rng = np.random.default_rng(11)
    for _ in range(100):
        a, b = rng.standard_normal(12), rng.standard_normal(12)
        _, p = wsrt_bonferroni(a, b)
        _, p4 = wsrt_bonferroni(a, b, n_corrections=4)
        assert p4 == pytest.approx(min(1.0, 4 * p))
        if 0.25 < p < 1:
            assert p4 == 1.0
            break
    else:
        pytest.fail("no sample with p in (0.25, 1)")


@pytest.mark.parametrize("n", [6, 15, 25])
def test_wsrt_exact_matches_scipy(n, rng):
    for _ in range(10):
        a, b = rng.standard_normal(n) + 0.3, rng.standard_normal(n)
        ours = wsrt_bonferroni(a, b)
        ref = stats.wilcoxon(a, b, method="exact")
        assert ours[1] == pytest.approx(ref.pvalue, rel=1e-9)


def test_wsrt_normal_approximation_matches_scipy(rng):
    a, b = rng.standard_normal(40) + 0.2, rng.standard_normal(40)
    ref = stats.wilcoxon(a, b, method="approx", correction=False)
    assert wsrt_bonferroni(a, b)[1] == pytest.approx(ref.pvalue, rel=1e-9)


def test_wsrt_errors():
    with pytest.raises(UndefinedTestError):
        wsrt_bonferroni(np.ones(6), np.ones(6))
    with pytest.raises(InvalidInputError):
        wsrt_bonferroni(np.ones(4), np.zeros(4))


# -- time-resolved decoding --------------------------------------------------

def _time_tensor(rng, signal_window=None, labels_random=False, n_classes=4, trials=20):
    t = np.round(np.arange(-0.5, 0.8001, 0.05), 10)
    n = n_classes * trials
    labels = [str(c) for c in range(n_classes) for _ in range(trials)]
    x = rng.standard_normal((n, 6, len(t)))
    if signal_window is not None:
        inside = (t >= signal_window[0] - 1e-9) & (t <= signal_window[1] + 1e-9)
        pattern = 3.0 * np.eye(n_classes, 6)
        x[:, :, inside] += pattern[[int(lab) for lab in labels]][:, :, None]
    if labels_random:
        labels = list(np.asarray(labels)[rng.permutation(n)])
    return SpectralTensor({"high_gamma": x}, {"high_gamma": t}, {"high_gamma": 20.0}), labels, t


def test_timepoint_signal_window():
    tensor, labels, t = _time_tensor(np.random.default_rng(0), (0.0, 0.2))
    res = timepoint_decoding(tensor, labels, task="cv", seed=0)
    acc = np.array(res["accuracy"])
    assert len(acc) == len(t)
    inside = (t >= -1e-9) & (t <= 0.2 + 1e-9)
    near = (t >= -0.05 - 1e-9) & (t <= 0.25 + 1e-9)
    assert np.all(acc[inside] >= 0.75)
    assert np.all(acc[~near] < 0.5)
    assert np.mean(res["chance"]) == pytest.approx(0.25, abs=0.05)


def test_timepoint_null_is_near_chance():
    tensor, labels, _ = _time_tensor(np.random.default_rng(1))
    res = timepoint_decoding(tensor, labels, time_indices=range(0, 27, 3), seed=1)
    assert abs(np.mean(res["accuracy"]) - 0.25) < 0.06


def test_timepoint_perfect_separation():
    rng = np.random.default_rng(2)
    tensor, labels, _ = _time_tensor(rng, n_classes=2)
    y = np.array([int(lab) for lab in labels])
    tensor.values["high_gamma"][:, 0, 10] = np.where(y == 1, 5.0, -5.0)
    res = timepoint_decoding(tensor, labels, time_indices=[10], seed=0)
    assert res["accuracy"] == [1.0]
