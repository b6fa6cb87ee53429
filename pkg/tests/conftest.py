import numpy as np
import pytest

from ecogspeech.dataset import LabeledDataset, stratified_folds


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def blobs():
    """Three well-separated Gaussian classes in 4 dimensions, 20 trials each."""
    r = np.random.default_rng(7)
    centers = np.array([[3, 0, 0, 0], [0, 3, 0, 0], [0, 0, 3, 0]], dtype=float)
    x = np.concatenate([c + 0.5 * r.standard_normal((20, 4)) for c in centers])
    labels = [str(k) for k in range(3) for _ in range(20)]
    ds = LabeledDataset(x, labels, label_kind="generic")
    return ds, stratified_folds(ds, 10, seed=0)
