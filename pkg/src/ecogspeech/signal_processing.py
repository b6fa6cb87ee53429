"""Raw voltage -> z-scored, band-aggregated, trial-aligned analytic amplitude.

Chain used by ``cmd_preprocess``::

    common_average_reference -> analytic_amplitude -> zscore_to_baseline
      -> aggregate_bands -> downsample_band -> extract_trials
      -> edge_mean_subtract

Arrays keep time on the last axis throughout.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateChannelError,
    InvalidInputError,
    TrialRangeError,
)

# Hγ center (75-150 Hz midpoint) is sampled at 200 Hz; every band keeps this ratio.
CENTER_TO_RATE = 200.0 / 112.5
TRIAL_WINDOW = (-0.5, 0.8)
EDGE_FRACTION = 0.04


@dataclass(frozen=True)
class RawRecording:
    voltage: np.ndarray  # electrodes x samples
    sample_rate: float
    bad_channels: frozenset = frozenset()
    baseline_window: tuple = None  # [start, end) sample indices

    def __post_init__(self):
        v = np.asarray(self.voltage, dtype=float)
        if v.ndim != 2:
            raise InvalidInputError("voltage must be electrodes x samples")
        object.__setattr__(self, "voltage", v)
        object.__setattr__(self, "bad_channels", frozenset(int(c) for c in self.bad_channels))
        if not self.sample_rate > 0:
            raise InvalidInputError(f"sample_rate must be positive, got {self.sample_rate}")
        if any(c < 0 or c >= v.shape[0] for c in self.bad_channels):
            raise InvalidInputError("bad channel index outside electrode range")
        if self.baseline_window is None:
            object.__setattr__(self, "baseline_window", (0, v.shape[1]))
        start, end = (int(x) for x in self.baseline_window)
        if not 0 <= start < end <= v.shape[1]:
            raise InvalidInputError(f"baseline window {self.baseline_window} outside recording")
        object.__setattr__(self, "baseline_window", (start, end))

    @property
    def n_electrodes(self):
        return self.voltage.shape[0]

    @property
    def good_channels(self):
        return [c for c in range(self.n_electrodes) if c not in self.bad_channels]

    def drop_bad_channels(self):
        """Recording restricted to good channels (indices renumbered)."""
        return RawRecording(
            self.voltage[self.good_channels],
            self.sample_rate,
            frozenset(),
            self.baseline_window,
        )


@dataclass(frozen=True)
class FilterBankSpec:
    centers: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        s = np.asarray(self.sigmas, dtype=float)
        if c.shape != s.shape or c.ndim != 1:
            raise InvalidInputError("centers and sigmas must be equal-length vectors")
        if np.any(np.diff(c) <= 0):
            raise InvalidInputError("filter centers must be strictly increasing")
        if np.any(s <= 0):
            raise InvalidInputError("filter sigmas must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "sigmas", s)

    def __len__(self):
        return len(self.centers)


@dataclass(frozen=True)
class BandDefinition:
    name: str
    low: float
    high: float

    @property
    def center(self):
        return 0.5 * (self.low + self.high)

    def contains(self, freqs):
        freqs = np.asarray(freqs)
        return (freqs >= self.low) & (freqs <= self.high)


CANONICAL_BANDS = {
    b.name: b
    for b in [
        BandDefinition("theta", 4, 8),
        BandDefinition("alpha", 9, 14),
        BandDefinition("low_beta", 15, 20),
        BandDefinition("high_beta", 21, 29),
        BandDefinition("gamma", 30, 59),
        BandDefinition("high_gamma", 75, 150),
        BandDefinition("beta_aggregate", 15, 29),
    ]
}
# Bands used as classifier features; beta_aggregate is for the coupling analyses.
FEATURE_BANDS = ("theta", "alpha", "low_beta", "high_beta", "gamma", "high_gamma")


def get_band(band):
    if isinstance(band, BandDefinition):
        return band
    try:
        return CANONICAL_BANDS[band]
    except KeyError:
        raise InvalidInputError(f"unknown band {band!r}") from None


@dataclass(frozen=True)
class SpectralTensor:
    """Per-band trial tensors; each band is (trial, electrode, time) at its own rate."""

    values: dict
    times: dict
    rates: dict

    def __post_init__(self):
        shapes = {b: np.shape(v) for b, v in self.values.items()}
        if not shapes:
            raise InvalidInputError("tensor has no bands")
        lead = {s[:2] for s in shapes.values()}
        if len(lead) != 1 or any(len(s) != 3 for s in shapes.values()):
            raise InvalidInputError(f"bands disagree on (trial, electrode) shape: {shapes}")
        for b, v in self.values.items():
            if len(self.times[b]) != v.shape[2]:
                raise InvalidInputError(f"time axis length mismatch for band {b}")
            if not np.all(np.isfinite(v)):
                raise InvalidInputError(f"non-finite values in band {b}")

    @property
    def band_names(self):
        return list(self.values)

    @property
    def n_trials(self):
        return next(iter(self.values.values())).shape[0]

    @property
    def n_electrodes(self):
        return next(iter(self.values.values())).shape[1]

    def select(self, trials):
        trials = np.asarray(trials)
        return SpectralTensor(
            {b: v[trials] for b, v in self.values.items()}, dict(self.times), dict(self.rates)
        )


@dataclass(frozen=True)
class FilterTensor:
    """Filter-resolution trials on one shared grid: (trial, filter, electrode, time)."""

    values: np.ndarray
    centers: np.ndarray
    time: np.ndarray
    rate: float


@dataclass(frozen=True)
class TrialAverageTensor:
    values: np.ndarray  # class x frequency x electrode x time
    classes: tuple
    centers: np.ndarray
    time: np.ndarray
    excluded: tuple = field(default=())


def common_average_reference(raw):
    """Subtract the per-sample mean of the good channels from each good channel."""
    good = raw.good_channels
    if len(good) < 2:
        raise InvalidInputError("common average reference needs at least 2 good channels")
    v = raw.voltage.copy()
    v[good] -= v[good].mean(axis=0, keepdims=True)
    return RawRecording(v, raw.sample_rate, raw.bad_channels, raw.baseline_window)


def design_filter_bank(f_lo=4.0, f_hi=200.0, n=40, min_sigma=1.0, q=7.0):
    """Geometric centers from ``f_lo`` to ``f_hi``; sigma = max(min_sigma, f/q).

    Approximates log-spaced centers with semi-log bandwidths: constant
    relative width above ``min_sigma * q`` Hz, fixed width below.
    """
    if not (0 < f_lo < f_hi) or n < 2:
        raise InvalidInputError(f"invalid filter bank range ({f_lo}, {f_hi}, {n})")
    k = np.arange(n)
    centers = f_lo * (f_hi / f_lo) ** (k / (n - 1))
    centers[-1] = f_hi
    sigmas = np.maximum(min_sigma, centers / q)
    return FilterBankSpec(centers, sigmas)


def _analytic_gains(n_samples, sample_rate, center, sigma):
    freqs = np.fft.fftfreq(n_samples, d=1.0 / sample_rate)
    gauss = np.exp(-0.5 * ((freqs - center) / sigma) ** 2)
    gains = np.where(freqs > 0, 2.0 * gauss, 0.0)
    gains[0] = gauss[0]
    return gains


def analytic_amplitude(raw, bank):
    """Gaussian-filtered analytic amplitude, shape (electrode, filter, time).

    Each filter has unit gain at its center, so a tone at a center
    frequency comes back with its own amplitude.
    """
    x = raw.voltage if isinstance(raw, RawRecording) else np.asarray(raw, dtype=float)
    rate = raw.sample_rate if isinstance(raw, RawRecording) else None
    if rate is None:
        raise InvalidInputError("analytic_amplitude needs a RawRecording")
    n = x.shape[-1]
    if n < 2:
        raise InvalidInputError("recording needs at least 2 samples")
    nyquist = rate / 2.0
    if np.any(bank.centers >= nyquist):
        raise InvalidInputError(
            f"filter center {bank.centers.max():g} Hz at or above Nyquist {nyquist:g} Hz"
        )
    spectrum = np.fft.fft(x, axis=-1)
    out = np.empty((x.shape[0], len(bank), n))
    for i, (c, s) in enumerate(zip(bank.centers, bank.sigmas)):
        out[:, i, :] = np.abs(np.fft.ifft(spectrum * _analytic_gains(n, rate, c, s), axis=-1))
    return out


def zscore_to_baseline(amp, baseline_window, allow_flat=False):
    """Z-score each (electrode, filter) trace against its baseline segment.

    ``amp`` is (electrode, filter, time) or (electrode, time). A zero-variance
    baseline raises DegenerateChannelError unless ``allow_flat``, in which case
    the trace is only mean-subtracted.
    """
    amp = np.asarray(amp, dtype=float)
    start, end = (int(x) for x in baseline_window)
    if end - start < 2 or start < 0 or end > amp.shape[-1]:
        raise InvalidInputError(f"baseline window {baseline_window} too short or out of range")
    base = amp[..., start:end]
    mu = base.mean(axis=-1, keepdims=True)
    sd = base.std(axis=-1, keepdims=True)
    bad = np.argwhere(sd[..., 0] <= 1e-12 * np.maximum(1.0, np.abs(mu[..., 0])))
    if len(bad):
        if not allow_flat:
            idx = tuple(int(i) for i in bad[0])
            raise DegenerateChannelError(idx[0], idx[1] if len(idx) > 1 else None)
        sd = np.where(sd <= 1e-12 * np.maximum(1.0, np.abs(mu)), 1.0, sd)
    return (amp - mu) / sd


def aggregate_bands(amp, bank, band):
    """Unweighted mean over filters whose center lies inside ``band`` (inclusive)."""
    band = get_band(band)
    mask = band.contains(bank.centers)
    if not mask.any():
        raise InvalidInputError(f"no filter centers inside band {band.name}")
    return np.asarray(amp)[..., mask, :].mean(axis=-2)


def band_rate(band_center):
    return band_center * CENTER_TO_RATE


def resample_linear(x, sample_rate, target):
    """Linear interpolation onto a ``target`` Hz grid along the last axis.

    The grid starts on the first sample and steps at the target period up to
    the last original sample; returns ``(resampled, target)``.
    """
    x = np.asarray(x, dtype=float)
    if target > sample_rate * (1 + 1e-12):
        raise InvalidInputError(
            f"target rate {target:g} Hz exceeds original rate {sample_rate:g} Hz"
        )
    if math.isclose(target, sample_rate, rel_tol=1e-12):
        return x.copy(), float(sample_rate)
    n = x.shape[-1]
    duration = (n - 1) / sample_rate
    m = int(math.floor(duration * target + 1e-9)) + 1
    t_old = np.arange(n) / sample_rate
    t_new = np.arange(m) / target
    flat = x.reshape(-1, n)
    out = np.stack([np.interp(t_new, t_old, row) for row in flat])
    return out.reshape(x.shape[:-1] + (m,)), float(target)


def downsample_band(x, sample_rate, band_center):
    """Resample to ``band_center * 200/112.5`` Hz; returns ``(resampled, rate)``."""
    return resample_linear(x, sample_rate, band_rate(band_center))


def trial_sample_window(sample_rate, window=TRIAL_WINDOW):
    pre = int(round(-window[0] * sample_rate))
    post = int(round(window[1] * sample_rate))
    return pre, post


def extract_trials(amp, sample_rate, event_times, window=TRIAL_WINDOW):
    """Cut event-aligned windows from ``amp`` (..., time).

    Returns ``(trials, time_axis)`` with trials stacked on a new first axis
    and time 0 at the event sample.
    """
    amp = np.asarray(amp)
    pre, post = trial_sample_window(sample_rate, window)
    n = amp.shape[-1]
    centers = [int(round(t * sample_rate)) for t in event_times]
    bad = [i for i, c in enumerate(centers) if c - pre < 0 or c + post >= n]
    if bad:
        raise TrialRangeError(bad)
    trials = np.stack([amp[..., c - pre:c + post + 1] for c in centers])
    time_axis = (np.arange(pre + post + 1) - pre) / sample_rate
    return trials, time_axis


def edge_mean_subtract(values, fraction=EDGE_FRACTION):
    """Subtract the pooled mean of the first and last ceil(fraction*T) samples."""
    if isinstance(values, SpectralTensor):
        return SpectralTensor(
            {b: edge_mean_subtract(v, fraction) for b, v in values.values.items()},
            dict(values.times),
            dict(values.rates),
        )
    if not 0 < fraction < 0.5:
        raise InvalidInputError(f"edge fraction must be in (0, 0.5), got {fraction}")
    values = np.asarray(values, dtype=float)
    k = math.ceil(fraction * values.shape[-1])
    edges = np.concatenate([values[..., :k], values[..., -k:]], axis=-1)
    return values - edges.mean(axis=-1, keepdims=True)


def trial_average(values, labels, classes=None):
    """Per-class mean over the leading trial axis.

    Returns ``(classes, means, excluded)``; requested classes with no trials
    are dropped and reported in ``excluded`` with a warning.
    """
    values = np.asarray(values)
    labels = np.asarray(labels)
    if len(labels) != values.shape[0]:
        raise InvalidInputError("every trial needs a label")
    if classes is None:
        classes = sorted(set(labels.tolist()), key=str)
    kept, means, excluded = [], [], []
    for c in classes:
        mask = labels == c
        if not mask.any():
            excluded.append(c)
            continue
        kept.append(c)
        means.append(values[mask].mean(axis=0))
    if excluded:
        warnings.warn(f"classes without trials excluded from average: {excluded}")
    if not means:
        raise InvalidInputError("no class has trials")
    return tuple(kept), np.stack(means), tuple(excluded)


def average_tensor(tensor, labels, classes=None):
    """TrialAverageTensor from a FilterTensor, or a SpectralTensor on one grid."""
    if isinstance(tensor, FilterTensor):
        data, centers, time = tensor.values, tensor.centers, tensor.time
    else:
        lengths = {len(t) for t in tensor.times.values()}
        if len(lengths) != 1:
            raise InvalidInputError("bands must share a time grid to stack; resample first")
        names = tensor.band_names
        data = np.stack([tensor.values[b] for b in names], axis=1)
        centers = np.array([get_band(b).center for b in names])
        time = tensor.times[names[0]]
    kept, means, excluded = trial_average(data, labels, classes)
    return TrialAverageTensor(means, kept, np.asarray(centers), np.asarray(time), excluded)


def preprocess(raw, event_times, bank=None, bands=FEATURE_BANDS, window=TRIAL_WINDOW,
               edge_fraction=EDGE_FRACTION, allow_flat=False):
    """Full chain from a raw recording to a SpectralTensor (good channels only)."""
    bank = bank or design_filter_bank()
    car = common_average_reference(raw).drop_bad_channels()
    amp = analytic_amplitude(car, bank)
    z = zscore_to_baseline(amp, car.baseline_window, allow_flat)
    values, times, rates = {}, {}, {}
    for name in bands:
        band = get_band(name)
        agg = aggregate_bands(z, bank, band)
        ds, rate = downsample_band(agg, car.sample_rate, band.center)
        trials, t = extract_trials(ds, rate, event_times, window)
        values[band.name] = edge_mean_subtract(trials, edge_fraction)
        times[band.name] = t
        rates[band.name] = rate
    return SpectralTensor(values, times, rates)


def preprocess_filters(raw, event_times, bank=None, rate=100.0, window=TRIAL_WINDOW,
                       edge_fraction=EDGE_FRACTION, allow_flat=False):
    """Per-filter amplitudes on one ``rate`` Hz grid, as a FilterTensor."""
    bank = bank or design_filter_bank()
    car = common_average_reference(raw).drop_bad_channels()
    z = zscore_to_baseline(analytic_amplitude(car, bank), car.baseline_window, allow_flat)
    ds, rate = resample_linear(z, car.sample_rate, rate)  # electrode x filter x time
    trials, t = extract_trials(ds, rate, event_times, window)
    values = edge_mean_subtract(np.swapaxes(trials, 1, 2), edge_fraction)
    return FilterTensor(values, np.asarray(bank.centers), t, rate)
