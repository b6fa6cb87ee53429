import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from ecogspeech import xfreq
from ecogspeech.errors import InvalidInputError
from ecogspeech.signal_processing import FilterTensor, SpectralTensor, average_tensor, get_band
from ecogspeech.synth import GroundTruth, SynthConfig, synth_generate, synth_linear, synth_xor

SIX = ("ba", "pa", "da", "ta", "ga", "ka")


def test_config_validation():
    with pytest.raises(InvalidInputError):
        SynthConfig(snr=0.0)
    with pytest.raises(InvalidInputError):
        SynthConfig(classes=("ba", "ba"))
    with pytest.raises(InvalidInputError):
        SynthConfig(n_electrodes=4)
    with pytest.raises(InvalidInputError):
        SynthConfig(resolution="wavelet")
    with pytest.raises(InvalidInputError):
        SynthConfig(level_weights=(1.0,))
    assert SynthConfig().n_classes == 57


def test_band_output_shapes_and_labels():
    cfg = SynthConfig(classes=SIX, trials_per_class=5, n_electrodes=8, seed=2)
    tensor, labels, truth = synth_generate(cfg)
    assert isinstance(tensor, SpectralTensor)
    assert tensor.n_trials == 30 and tensor.n_electrodes == 8
    assert labels.count("ba") == 5 and len(set(labels)) == 6
    assert tensor.rates["high_gamma"] == pytest.approx(200.0)
    assert tensor.times["high_gamma"][0] == pytest.approx(-0.5)
    assert tensor.times["high_gamma"][-1] == pytest.approx(0.8)
    assert truth.classes == SIX


def test_filter_output_shape():
    cfg = SynthConfig(classes=SIX, trials_per_class=2, n_electrodes=8, resolution="filter")
    tensor, _, _ = synth_generate(cfg)
    assert isinstance(tensor, FilterTensor)
    assert tensor.values.shape == (12, 40, 8, 131)


def test_bitwise_reproducible_and_seed_dependent():
    cfg = SynthConfig(classes=SIX, trials_per_class=3, n_electrodes=8, seed=5)
    a, la, ta = synth_generate(cfg)
    b, lb, tb = synth_generate(cfg)
    assert la == lb
    for band in a.values:
        assert a.values[band].tobytes() == b.values[band].tobytes()
    c, lc, _ = synth_generate(SynthConfig(classes=SIX, trials_per_class=3, n_electrodes=8,
                                          seed=6))
    assert sorted(lc) == sorted(la)
    assert a.values["theta"].tobytes() != c.values["theta"].tobytes()


def test_noise_free_trials_identical_within_class():
    cfg = SynthConfig(classes=SIX, trials_per_class=4, n_electrodes=8, snr=float("inf"))
    tensor, labels, _ = synth_generate(cfg)
    hg = tensor.values["high_gamma"]
    idx = [i for i, lab in enumerate(labels) if lab == "da"]
    for i in idx[1:]:
        np.testing.assert_array_equal(hg[i], hg[idx[0]])


def test_siblings_share_more_electrodes():
    cfg = SynthConfig(classes=("ba", "pa", "fa", "da", "ga"), n_electrodes=32, seed=3)
    _, _, truth = synth_generate(cfg)

    def overlap(a, b):
        return len(set(truth.active[a]) & set(truth.active[b]))

    assert overlap("ba", "pa") > overlap("ba", "fa") > overlap("ba", "da")
    assert truth.paths["ba"] == ("lips", "lips/bilabial", "ba")
    assert truth.top_level() == ["lips", "lips", "lips", "front_tongue", "back_tongue"]


def test_ground_truth_round_trip():
    _, _, truth = synth_generate(SynthConfig(classes=SIX, trials_per_class=1, n_electrodes=8,
                                             beta_coupling=0.4, beta_desync=0.2))
    back = GroundTruth.from_dict(truth.to_dict())
    assert back.classes == truth.classes and back.paths == truth.paths
    np.testing.assert_array_equal(back.patterns, truth.patterns)
    assert back.beta_desync == 0.2
    mask = truth.active_mask(("ka", "ba"))
    np.testing.assert_array_equal(mask[1], truth.active_mask()[0])


def _active_beta_correlation(cfg):
    tensor, labels, truth = synth_generate(cfg)
    avg = average_tensor(tensor, labels)
    r = xfreq.hg_beta_correlation(avg)
    return r[truth.active_mask(avg.classes)], avg, truth


def test_zero_coupling_gives_zero_correlation():
    cfg = SynthConfig(classes=SIX, trials_per_class=10, n_electrodes=16, resolution="filter")
    r, _, _ = _active_beta_correlation(cfg)
    assert abs(np.mean(r)) < 0.05


def test_noise_free_coupling_is_perfect():
    cfg = SynthConfig(classes=SIX, trials_per_class=2, n_electrodes=16, snr=float("inf"),
                      beta_coupling=0.9, band_noise=0.0, resolution="filter")
    r, _, _ = _active_beta_correlation(cfg)
    np.testing.assert_allclose(r, 1.0, atol=1e-9)


@pytest.mark.parametrize("c,sigma,trials", [(0.5, 1.0, 1), (1.0, 1.0, 1), (0.3, 0.5, 1),
                                            (0.8, 1.0, 4)])
def test_coupling_matches_closed_form(c, sigma, trials):
    cfg = SynthConfig(classes=SIX, trials_per_class=trials, n_electrodes=16, snr=float("inf"),
                      beta_coupling=c, band_noise=sigma, resolution="filter", seed=1)
    tensor, labels, truth = synth_generate(cfg)
    avg = average_tensor(tensor, labels)
    mask = truth.active_mask(avg.classes)
    var_h = xfreq.band_trace(avg, "high_gamma").var(axis=-1)[mask]
    expected = c / np.sqrt(c**2 + (sigma**2 / trials) / var_h)
    beta = get_band("beta_aggregate").contains(avg.centers)
    observed = np.moveaxis(xfreq.unit_correlations(avg), 1, -1)[mask][:, beta]
    assert observed.mean() == pytest.approx(expected.mean(), abs=0.05)


def test_desync_lowers_beta_everywhere():
    base = SynthConfig(classes=SIX, trials_per_class=20, n_electrodes=8, resolution="filter")
    tensor, labels, _ = synth_generate(SynthConfig(**{**base.to_dict(), "beta_desync": 0.5}))
    avg = average_tensor(tensor, labels)
    beta = xfreq.band_trace(avg, "beta_aggregate")
    at_zero = np.argmin(np.abs(avg.time))
    assert beta[..., at_zero].mean() == pytest.approx(-0.5, abs=0.1)


def test_xor_not_linearly_separable():
    ds = synth_xor(2000, seed=0)
    y = ds.y
    assert 0.45 < y.mean() < 0.55
    x = ds.features
    np.testing.assert_array_equal(y, (x[:, 0] * x[:, 1] > 0).astype(int))
    acc = LogisticRegression().fit(x, y).score(x, y)
    assert acc <= 0.6
    assert synth_xor(50, n_noise_dims=3).dim == 5


def test_linear_set_is_separable():
    ds = synth_linear(100, 5, margin=1.0, seed=0)
    clf = LogisticRegression(C=1e4, max_iter=2000).fit(ds.features, ds.y)
    assert clf.score(ds.features, ds.y) == 1.0
