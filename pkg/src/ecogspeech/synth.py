"""Seeded synthetic trials with known ground truth.

Classes are CVs arranged in a tree (by default major articulator ->
constriction location -> CV). Every tree node owns a random electrode
subset; a class activates the union of its ancestors' subsets, with
weights shrinking toward the leaves, so siblings overlap more than
cousins. Hγ carries ``pattern x bump(t)`` plus smoothed Gaussian noise
with std ``1/snr``. Lower frequencies are independent noise, except that
β-range channels at a class's active electrodes equal
``beta_coupling * Hγ + noise``. ``beta_desync`` optionally lowers β-range
amplitude by ``beta_desync x bump(t)`` at every electrode, a task-locked
β decrease independent of the class pattern.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .dataset import LabeledDataset, cv_inventory, default_table
from .errors import InvalidInputError
from .signal_processing import (
    CANONICAL_BANDS,
    FEATURE_BANDS,
    TRIAL_WINDOW,
    FilterTensor,
    SpectralTensor,
    band_rate,
    design_filter_bank,
    get_band,
)

BETA = CANONICAL_BANDS["beta_aggregate"]


@dataclass(frozen=True)
class SynthConfig:
    classes: tuple = None  # CV names; None = full inventory
    trials_per_class: int = 30
    n_electrodes: int = 32
    levels: tuple = ("major_articulator", "location")
    electrodes_per_node: tuple = (6, 3, 2)  # per level, leaf level last
    level_weights: tuple = (1.0, 0.6, 0.4)
    snr: float = 1.0
    beta_coupling: float = 0.0
    beta_desync: float = 0.0
    band_noise: float = 1.0
    noise_smooth: float = 0.02  # seconds
    bump_center: float = 0.0
    bump_width: float = 0.15
    resolution: str = "band"  # or "filter"
    filter_rate: float = 100.0
    window: tuple = TRIAL_WINDOW
    seed: int = 0

    def __post_init__(self):
        classes = tuple(self.classes) if self.classes is not None else cv_inventory()
        object.__setattr__(self, "classes", classes)
        for name in ("levels", "electrodes_per_node", "level_weights", "window"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        depth = len(self.levels) + 1
        if len(self.electrodes_per_node) != depth or len(self.level_weights) != depth:
            raise InvalidInputError("need one electrode count and weight per tree level")
        if not self.snr > 0:
            raise InvalidInputError("snr must be positive")
        if max(self.electrodes_per_node) > self.n_electrodes:
            raise InvalidInputError("node electrode count exceeds n_electrodes")
        if self.resolution not in ("band", "filter"):
            raise InvalidInputError(f"unknown resolution {self.resolution!r}")
        if len(set(classes)) != len(classes) or not classes:
            raise InvalidInputError("classes must be distinct and nonempty")

    @property
    def n_classes(self):
        return len(self.classes)

    def to_dict(self):
        d = asdict(self)
        d["classes"] = list(self.classes)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class GroundTruth:
    classes: tuple
    paths: dict  # class -> tuple of node names, root level first
    active: dict  # class -> sorted electrode list
    patterns: np.ndarray  # class x electrode weights
    beta_coupling: float
    noise_std: float
    beta_desync: float = 0.0

    def active_mask(self, classes=None):
        """class x electrode; rows follow ``classes`` when given."""
        if classes is None:
            return self.patterns > 0
        rows = [self.classes.index(c) for c in classes]
        return self.patterns[rows] > 0

    def top_level(self):
        return [self.paths[c][0] for c in self.classes]

    def to_dict(self):
        return {
            "classes": list(self.classes),
            "paths": {c: list(p) for c, p in self.paths.items()},
            "active": {c: list(map(int, a)) for c, a in self.active.items()},
            "patterns": self.patterns.tolist(),
            "beta_coupling": self.beta_coupling,
            "noise_std": self.noise_std,
            "beta_desync": self.beta_desync,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["classes"]), {c: tuple(p) for c, p in d["paths"].items()},
                   {c: list(a) for c, a in d["active"].items()}, np.array(d["patterns"]),
                   d["beta_coupling"], d["noise_std"], d.get("beta_desync", 0.0))


def class_paths(cfg, table=None):
    table = table or default_table()
    paths = {}
    for cv in cfg.classes:
        nodes, prefix = [], ()
        for level in cfg.levels:
            prefix = prefix + (table.attribute(cv, level),)
            nodes.append("/".join(prefix))
        nodes.append(cv)
        paths[cv] = tuple(nodes)
    return paths


def _patterns(cfg, paths, rng):
    node_sets = {}
    patterns = np.zeros((cfg.n_classes, cfg.n_electrodes))
    for i, cv in enumerate(cfg.classes):
        for depth, node in enumerate(paths[cv]):
            key = (depth, node)
            if key not in node_sets:
                node_sets[key] = rng.choice(cfg.n_electrodes, cfg.electrodes_per_node[depth],
                                            replace=False)
            patterns[i, node_sets[key]] += cfg.level_weights[depth]
    return patterns


def _bump(t, cfg):
    return np.exp(-0.5 * ((t - cfg.bump_center) / cfg.bump_width) ** 2)


def _noise(rng, shape, rate, smooth):
    """Unit-variance Gaussian noise, smoothed along the last axis."""
    white = rng.standard_normal(shape)
    s = smooth * rate
    if s < 0.3:
        return white
    delta = np.zeros(int(8 * s) * 2 + 1)
    delta[len(delta) // 2] = 1.0
    gain = math.sqrt(np.sum(gaussian_filter1d(delta, s) ** 2))
    return gaussian_filter1d(white, s, axis=-1) / gain


def _grid(rate, window):
    pre = int(round(-window[0] * rate))
    post = int(round(window[1] * rate))
    return (np.arange(pre + post + 1) - pre) / rate


def synth_generate(cfg):
    """Return ``(tensor, labels, GroundTruth)``; deterministic in ``cfg.seed``.

    ``cfg.resolution == "band"`` gives a SpectralTensor of the six feature
    bands, each at its own 200/112.5 rate; ``"filter"`` gives a FilterTensor
    over the 40-filter bank on one grid at ``cfg.filter_rate``.
    """
    rng = np.random.default_rng(cfg.seed)
    paths = class_paths(cfg)
    patterns = _patterns(cfg, paths, rng)
    labels = [cv for cv in cfg.classes for _ in range(cfg.trials_per_class)]
    cls_idx = np.repeat(np.arange(cfg.n_classes), cfg.trials_per_class)
    n = len(labels)
    sigma = 0.0 if math.isinf(cfg.snr) else 1.0 / cfg.snr
    trial_patterns = patterns[cls_idx]  # trial x electrode
    active = trial_patterns > 0
    truth = GroundTruth(
        cfg.classes, paths,
        {cv: np.flatnonzero(patterns[i]).tolist() for i, cv in enumerate(cfg.classes)},
        patterns, cfg.beta_coupling, sigma, cfg.beta_desync,
    )

    def hg_signal(t):
        return trial_patterns[:, :, None] * _bump(t, cfg)[None, None, :]

    if cfg.resolution == "band":
        values, times, rates = {}, {}, {}
        hg = get_band("high_gamma")
        r_hg = band_rate(hg.center)
        t_hg = _grid(r_hg, cfg.window)
        shape = (n, cfg.n_electrodes, len(t_hg))
        hg_vals = hg_signal(t_hg) + sigma * _noise(rng, shape, r_hg, cfg.noise_smooth)
        for name in FEATURE_BANDS:
            band = get_band(name)
            rate = band_rate(band.center)
            t = _grid(rate, cfg.window)
            if name == "high_gamma":
                v = hg_vals
            else:
                v = cfg.band_noise * _noise(rng, (n, cfg.n_electrodes, len(t)), rate,
                                            cfg.noise_smooth)
                if band.low <= BETA.high and band.high >= BETA.low and cfg.beta_coupling:
                    flat = hg_vals.reshape(-1, len(t_hg))
                    hg_on_t = np.stack([np.interp(t, t_hg, row) for row in flat]).reshape(
                        n, cfg.n_electrodes, len(t))
                    v = v + cfg.beta_coupling * hg_on_t * active[:, :, None]
                if band.low <= BETA.high and band.high >= BETA.low and cfg.beta_desync:
                    v = v - cfg.beta_desync * _bump(t, cfg)
            values[name], times[name], rates[name] = v, t, rate
        return SpectralTensor(values, times, rates), labels, truth

    bank = design_filter_bank()
    t = _grid(cfg.filter_rate, cfg.window)
    hg_mask = get_band("high_gamma").contains(bank.centers)
    beta_mask = BETA.contains(bank.centers)
    out = np.empty((n, len(bank), cfg.n_electrodes, len(t)), dtype=np.float32)
    signal = hg_signal(t)
    hg_sum = np.zeros((n, cfg.n_electrodes, len(t)))
    for f in np.flatnonzero(hg_mask):
        v = signal + sigma * _noise(rng, signal.shape, cfg.filter_rate, cfg.noise_smooth)
        hg_sum += v
        out[:, f] = v
    hg_agg = hg_sum / hg_mask.sum()
    for f in np.flatnonzero(~hg_mask):
        v = cfg.band_noise * _noise(rng, signal.shape, cfg.filter_rate, cfg.noise_smooth)
        if beta_mask[f] and cfg.beta_coupling:
            v = v + cfg.beta_coupling * hg_agg * active[:, :, None]
        if beta_mask[f] and cfg.beta_desync:
            v = v - cfg.beta_desync * _bump(t, cfg)
        out[:, f] = v
    return FilterTensor(out, bank.centers, t, cfg.filter_rate), labels, truth


def synth_xor(n=2000, n_noise_dims=0, seed=0):
    """Two classes by quadrant parity: label = [x1 * x2 > 0].

    Points are isotropic with exponentially distributed radius. Four tight
    blobs would let a single line get three of four right; this heavier
    center keeps the best half-plane near 0.58 accuracy.
    """
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0.0, 2 * np.pi, n)
    radius = rng.exponential(size=n)
    x = radius[:, None] * np.column_stack([np.cos(angle), np.sin(angle)])
    y = (x[:, 0] * x[:, 1] > 0).astype(int)
    if n_noise_dims:
        x = np.hstack([x, rng.standard_normal((n, n_noise_dims))])
    return LabeledDataset(x, tuple(str(v) for v in y), label_kind="generic",
                          provenance={"generator": "xor", "seed": seed})


def synth_linear(n_per_class=100, n_dims=5, margin=1.0, seed=0):
    """Two classes separated by a margin along a random direction."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(n_dims)
    w /= np.linalg.norm(w)
    x = rng.standard_normal((2 * n_per_class, n_dims))
    proj = x @ w
    x += np.outer(np.sign(proj) * margin, w)
    y = (proj > 0).astype(int)
    return LabeledDataset(x, tuple(str(v) for v in y), label_kind="generic",
                          provenance={"generator": "linear", "seed": seed})
