"""Amplitude-amplitude coupling between Hγ and other frequencies.

Works on TrialAverageTensor (class x frequency x electrode x time). A "unit"
is one (CV, electrode) pair; spectra are means over units.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .dataset import rasterize_features
from .errors import GroupEmptyError, InvalidInputError, SplitUndefinedError
from .signal_processing import (
    SpectralTensor,
    average_tensor,
    get_band,
)

POWER_WINDOW = (-0.070, 0.140)
LOWER_BANDS = ("theta", "alpha", "low_beta", "high_beta", "gamma")


@dataclass(frozen=True)
class CorrelationSpectrum:
    centers: np.ndarray
    mean: np.ndarray
    sem: np.ndarray
    n_units: np.ndarray  # units contributing per frequency
    group: str = "all"
    n_excluded: int = 0

    def band_mean(self, band):
        """Unit-weighted mean correlation over frequencies inside ``band``."""
        mask = get_band(band).contains(self.centers)
        w = self.n_units[mask]
        return float(np.sum(self.mean[mask] * w) / np.sum(w))

    def rows(self):
        return [
            {"group": self.group, "frequency": float(c), "mean": float(m), "sem": float(s),
             "n": int(n)}
            for c, m, s, n in zip(self.centers, self.mean, self.sem, self.n_units)
        ]


@dataclass(frozen=True)
class ActivitySplit:
    power: np.ndarray  # class x electrode
    correlation: np.ndarray  # class x electrode
    active: np.ndarray  # bool, class x electrode
    slope: float
    intercept: float
    threshold: float


def pearson_over_time(a, b):
    """Pearson r along the last axis; NaN where either trace is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a - a.mean(axis=-1, keepdims=True)
    b = b - b.mean(axis=-1, keepdims=True)
    num = np.sum(a * b, axis=-1)
    den = np.sqrt(np.sum(a * a, axis=-1) * np.sum(b * b, axis=-1))
    scale = np.maximum(np.abs(a).max(axis=-1), 1e-300) * np.maximum(np.abs(b).max(axis=-1), 1e-300)
    ok = den > 1e-12 * scale * a.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(ok, num / np.where(ok, den, 1.0), np.nan)
    return np.clip(r, -1.0, 1.0)


def band_trace(avg, band):
    """Mean over frequencies with centers inside ``band``: class x electrode x time."""
    mask = get_band(band).contains(avg.centers)
    if not mask.any():
        raise InvalidInputError(f"no frequencies of the tensor fall inside {get_band(band).name}")
    return avg.values[:, mask].mean(axis=1)


def unit_correlations(avg, reference="high_gamma"):
    """Correlation of the reference-band trace with every frequency: class x freq x electrode."""
    ref = band_trace(avg, reference)
    return pearson_over_time(ref[:, None, :, :], avg.values)


def _summarize(r, centers, unit_mask, group):
    # r: class x freq x electrode
    r = np.moveaxis(r, 1, -1)[unit_mask]  # units x freq
    valid = np.isfinite(r)
    n = valid.sum(axis=0)
    rr = np.where(valid, r, 0.0)
    mean = np.where(n > 0, rr.sum(axis=0) / np.maximum(n, 1), np.nan)
    dev = np.where(valid, r - mean, 0.0)
    var = np.where(n > 1, (dev**2).sum(axis=0) / np.maximum(n - 1, 1), np.nan)
    sem = np.sqrt(var / np.maximum(n, 1))
    n_excluded = int(np.sum(~valid.all(axis=1)))
    return CorrelationSpectrum(np.asarray(centers), mean, sem, n, group, n_excluded)


def band_hg_correlation(avg, unit_mask=None, group="all"):
    """Mean (± sem) over units of the Hγ-vs-frequency Pearson correlation."""
    r = unit_correlations(avg)
    if unit_mask is None:
        unit_mask = np.ones(r.shape[::2], dtype=bool)
    return _summarize(r, avg.centers, np.asarray(unit_mask, dtype=bool), group)


def hg_power(avg, window=POWER_WINDOW):
    """Mean z-scored Hγ amplitude in ``window`` (seconds): class x electrode."""
    t = np.asarray(avg.time)
    mask = (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)
    if not mask.any() or window[0] < t[0] - 1e-9 or window[1] > t[-1] + 1e-9:
        raise InvalidInputError(f"power window {window} outside the time axis")
    return band_trace(avg, "high_gamma")[..., mask].mean(axis=-1)


def hg_beta_correlation(avg, beta="beta_aggregate"):
    return pearson_over_time(band_trace(avg, "high_gamma"), band_trace(avg, beta))


def fit_activity_threshold(power, correlation):
    """Fit correlation ~ power on units with power > 0; threshold at predicted 0.

    Units with power above the threshold are active.
    """
    power = np.asarray(power, dtype=float)
    correlation = np.asarray(correlation, dtype=float)
    sel = (power > 0) & np.isfinite(correlation)
    if sel.sum() < 2 or np.ptp(power[sel]) == 0:
        raise SplitUndefinedError("need at least 2 units with positive power")
    slope, intercept = np.polyfit(power[sel], correlation[sel], 1)
    if abs(slope) < 1e-12:
        raise SplitUndefinedError("fitted slope is zero; no threshold crossing")
    threshold = -intercept / slope
    return ActivitySplit(power, correlation, power > threshold, float(slope), float(intercept),
                         float(threshold))


def split_correlation_spectra(avg, split):
    """(active, inactive) correlation spectra."""
    active = np.asarray(split.active if isinstance(split, ActivitySplit) else split, dtype=bool)
    if not active.any() or active.all():
        raise GroupEmptyError("active/inactive split leaves a group empty")
    r = unit_correlations(avg)
    return (_summarize(r, avg.centers, active, "active"),
            _summarize(r, avg.centers, ~active, "inactive"))


def hg_beta_histogram(avg, n_bins=40):
    """Histograms of per-unit Hγ-β correlation (fixed [-1, 1]) and Hγ power."""
    corr = hg_beta_correlation(avg).ravel()
    corr = corr[np.isfinite(corr)]
    power = hg_power(avg).ravel()
    c_counts, c_edges = np.histogram(corr, bins=n_bins, range=(-1.0, 1.0))
    p_counts, p_edges = np.histogram(power, bins=n_bins)
    return {
        "correlation": {"counts": c_counts, "edges": c_edges},
        "power": {"counts": p_counts, "edges": p_edges},
    }


def count_modes(counts, smooth=3, prominence=0.1):
    """Local maxima of a lightly smoothed histogram with relative prominence."""
    c = np.asarray(counts, dtype=float)
    if smooth > 1:
        c = np.convolve(c, np.ones(smooth) / smooth, mode="same")
    padded = np.concatenate([[0.0], c, [0.0]])
    peaks, _ = find_peaks(padded, prominence=prominence * c.max() if c.max() > 0 else 1)
    return len(peaks)


def binned_summary(power, correlation, n_bins=9):
    """Equal-count bins along power: mean power, mean and sem of correlation."""
    p = np.asarray(power, dtype=float).ravel()
    c = np.asarray(correlation, dtype=float).ravel()
    ok = np.isfinite(c)
    p, c = p[ok], c[ok]
    order = np.argsort(p, kind="stable")
    rows = []
    for chunk in np.array_split(order, n_bins):
        if len(chunk) == 0:
            continue
        sem = float(np.std(c[chunk], ddof=1) / math.sqrt(len(chunk))) if len(chunk) > 1 else 0.0
        rows.append({"power": float(p[chunk].mean()), "correlation": float(c[chunk].mean()),
                     "sem": sem, "n": int(len(chunk))})
    return rows


def resample_to_band_grid(tensor, reference="high_gamma"):
    """Linearly interpolate every band onto the reference band's time grid."""
    t_ref = np.asarray(tensor.times[reference])
    values = {}
    for b, v in tensor.values.items():
        t = np.asarray(tensor.times[b])
        if len(t) == len(t_ref) and np.allclose(t, t_ref):
            values[b] = v
            continue
        flat = v.reshape(-1, v.shape[-1])
        values[b] = np.stack([np.interp(t_ref, t, row) for row in flat]).reshape(
            v.shape[:-1] + (len(t_ref),))
    return SpectralTensor(values, {b: t_ref for b in values},
                          {b: tensor.rates[reference] for b in values})


def average_on_common_grid(tensor, labels, classes=None):
    if isinstance(tensor, SpectralTensor):
        tensor = resample_to_band_grid(tensor)
    return average_tensor(tensor, labels, classes)


def multiband_feature_sets(tensor, labels, band, min_count=10):
    """(band-only, band + Hγ) rasterized datasets."""
    only = rasterize_features(tensor, labels, [band], min_count)
    both = rasterize_features(tensor, labels, [band, "high_gamma"], min_count)
    return only, both

