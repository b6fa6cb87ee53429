"""CV label taxonomy, feature rasterization, folds and dataset persistence."""

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from . import bundle
from .errors import (
    ClassTooSmallError,
    InvalidInputError,
    ShapeMismatchError,
    UnknownLabelError,
)
from .signal_processing import SpectralTensor, FilterTensor

VOWELS = ("a", "i", "u")
TASKS = ("cv", "consonant", "vowel", "location", "degree")
BLOCKS = ("major_articulator", "location", "degree", "vowel")
MIN_CLASS_COUNT = 10
EXCLUDED = None  # task label of a trial outside a restricted task


@dataclass(frozen=True)
class ArticulatoryFeatureTable:
    """Per-consonant articulatory attributes (see data/articulatory_features.tsv)."""

    rows: dict  # consonant -> {column: value}

    @classmethod
    def load(cls, path=None):
        if path is None:
            text = resources.files("ecogspeech").joinpath(
                "data/articulatory_features.tsv").read_text()
        else:
            text = Path(path).read_text()
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        reader = csv.DictReader(lines, delimiter="\t")
        rows = {}
        for r in reader:
            rows[r["consonant"]] = {k: v for k, v in r.items() if k != "consonant"}
        return cls(rows)

    @property
    def consonants(self):
        return tuple(self.rows)

    def attribute(self, cv, column):
        cv = CvLabel.parse(cv)
        if column == "vowel":
            return cv.vowel
        return self.rows[cv.consonant][column]

    def categories(self, block):
        if block == "vowel":
            return VOWELS
        seen = []
        for r in self.rows.values():
            if r[block] not in seen:
                seen.append(r[block])
        return tuple(seen)

    def feature_vector(self, cv, blocks=BLOCKS):
        """Binary vector with exactly one active entry per block."""
        parts = []
        for block in blocks:
            cats = self.categories(block)
            v = np.zeros(len(cats))
            v[cats.index(self.attribute(cv, block))] = 1.0
            parts.append(v)
        return np.concatenate(parts)

    def matrix(self, cvs, blocks=BLOCKS):
        return np.stack([self.feature_vector(cv, blocks) for cv in cvs])


@lru_cache(maxsize=1)
def default_table():
    return ArticulatoryFeatureTable.load()


def cv_inventory(table=None):
    """All 57 consonant-vowel names in table order, vowel fastest."""
    table = table or default_table()
    return tuple(c + v for c in table.consonants for v in VOWELS)


@dataclass(frozen=True)
class CvLabel:
    consonant: str
    vowel: str

    @classmethod
    def parse(cls, label):
        if isinstance(label, CvLabel):
            return label
        s = str(label).strip("/")
        if len(s) < 2 or s[-1] not in VOWELS or s[:-1] not in default_table().rows:
            raise UnknownLabelError(f"{label!r} is not a CV in the inventory")
        return cls(s[:-1], s[-1])

    @property
    def name(self):
        return self.consonant + self.vowel

    def __str__(self):
        return self.name

    @property
    def major_articulator(self):
        return default_table().rows[self.consonant]["major_articulator"]

    @property
    def constriction_location(self):
        v = default_table().rows[self.consonant]["location_task"]
        return None if v == "-" else v

    @property
    def constriction_degree(self):
        v = default_table().rows[self.consonant]["degree_task"]
        return None if v == "-" else v


def derive_task_labels(label, task, table=None):
    """Project a CV label onto a task; returns EXCLUDED for uncategorized consonants."""
    cv = CvLabel.parse(label)
    table = table or default_table()
    if task == "cv":
        return cv.name
    if task == "consonant":
        return cv.consonant
    if task == "vowel":
        return cv.vowel
    if task in ("location", "degree"):
        v = table.rows[cv.consonant][task + "_task"]
        return EXCLUDED if v == "-" else v
    raise InvalidInputError(f"unknown task {task!r}")


def task_labels(labels, task, table=None):
    if task == "cv" and not all(_is_cv(lab) for lab in labels):
        return list(labels)
    return [derive_task_labels(lab, task, table) for lab in labels]


def _is_cv(label):
    try:
        CvLabel.parse(label)
        return True
    except UnknownLabelError:
        return False


def class_order(labels):
    """Sorted class list: inventory order for CVs, natural order otherwise."""
    uniq = set(labels)
    inv = cv_inventory()
    if all(lab in inv for lab in uniq):
        return tuple(c for c in inv if c in uniq)
    return tuple(sorted(uniq, key=str))


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # trials x d, float32
    labels: tuple
    layout: tuple = ()  # ((band, n_electrodes, n_time), ...) in rasterization order
    provenance: dict = field(default_factory=dict)
    label_kind: str = "cv"

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float32)
        if x.ndim != 2 or x.shape[0] != len(self.labels):
            raise InvalidInputError("features must be trials x d with one label per trial")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("features contain non-finite values")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", tuple(str(lab) for lab in self.labels))
        object.__setattr__(self, "layout", tuple(tuple(e) for e in self.layout))
        if self.layout and sum(e * t for _, e, t in self.layout) != x.shape[1]:
            raise InvalidInputError("layout does not match feature width")
        if self.label_kind == "cv":
            for lab in set(self.labels):
                CvLabel.parse(lab)

    @property
    def classes(self):
        return class_order(self.labels)

    @property
    def y(self):
        index = {c: i for i, c in enumerate(self.classes)}
        return np.array([index[lab] for lab in self.labels])

    @property
    def n_trials(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return LabeledDataset(
            self.features[idx], tuple(np.asarray(self.labels)[idx]), self.layout,
            dict(self.provenance), self.label_kind,
        )


def drop_small_classes(features, labels, min_count=MIN_CLASS_COUNT):
    """Keep only trials of classes with at least ``min_count`` examples."""
    counts = Counter(labels)
    keep = np.array([counts[lab] >= min_count for lab in labels], dtype=bool)
    return np.asarray(features)[keep], tuple(np.asarray(labels)[keep].tolist()), keep


def rasterize_features(tensor, labels, bands, min_count=MIN_CLASS_COUNT, provenance=None):
    """Concatenate (band, electrode, time) per trial, band-major.

    Classes with fewer than ``min_count`` trials are dropped.
    """
    if isinstance(bands, str):
        bands = [bands]
    missing = [b for b in bands if b not in tensor.values]
    if missing:
        raise InvalidInputError(f"bands missing from tensor: {missing}")
    blocks, layout = [], []
    for b in bands:
        v = tensor.values[b]
        blocks.append(v.reshape(v.shape[0], -1))
        layout.append((b, v.shape[1], v.shape[2]))
    x = np.concatenate(blocks, axis=1)
    x, labs, _ = drop_small_classes(x, list(labels), min_count)
    prov = {"bands": list(bands)}
    prov.update(provenance or {})
    kind = "cv" if all(_is_cv(lab) for lab in set(labs)) else "generic"
    return LabeledDataset(x, labs, tuple(layout), prov, kind)


def unrasterize(dataset):
    """Inverse of rasterize_features: band -> (trial, electrode, time)."""
    out, start = {}, 0
    for band, n_el, n_t in dataset.layout:
        width = n_el * n_t
        out[band] = dataset.features[:, start:start + width].reshape(-1, n_el, n_t)
        start += width
    return out


@dataclass(frozen=True)
class FoldSplit:
    fold_id: int
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def without_test(self):
        """(train, validation) view handed to model selection."""
        return self.train, self.validation


def _labels_of(data):
    return list(data.labels) if isinstance(data, LabeledDataset) else list(data)


def stratified_folds(data, n_folds=10, seed=0):
    """Per-class seeded permutation cut into ``n_folds`` contiguous blocks.

    Fold k tests on block k, validates on block k+1 (cyclic), trains on the rest.
    """
    if n_folds < 3:
        raise InvalidInputError("need at least 3 folds (test, validation and train blocks)")
    labels = np.asarray(_labels_of(data))
    counts = Counter(labels.tolist())
    for lab in class_order(labels.tolist()):
        if counts[lab] < n_folds:
            raise ClassTooSmallError(lab, counts[lab], n_folds)
    rng = np.random.default_rng(seed)
    per_class = []
    for lab in class_order(labels.tolist()):
        idx = np.flatnonzero(labels == lab)
        per_class.append(np.array_split(rng.permutation(idx), n_folds))
    folds = []
    for k in range(n_folds):
        v = (k + 1) % n_folds
        test = np.sort(np.concatenate([blocks[k] for blocks in per_class]))
        val = np.sort(np.concatenate([blocks[v] for blocks in per_class]))
        train = np.sort(np.concatenate([
            np.concatenate([b for j, b in enumerate(blocks) if j not in (k, v)])
            for blocks in per_class
        ]))
        folds.append(FoldSplit(k, train, val, test))
    return folds


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def subsample_training(split, data, fraction, seed=0):
    """Keep max(1, round(fraction * count)) training trials per class."""
    if not 0 < fraction <= 1:
        raise InvalidInputError(f"fraction must be in (0, 1], got {fraction}")
    labels = np.asarray(_labels_of(data))
    rng = np.random.default_rng(seed)
    train_labels = labels[split.train]
    kept = []
    for lab in class_order(train_labels.tolist()):
        idx = split.train[train_labels == lab]
        n = max(1, _round_half_up(fraction * len(idx)))
        kept.append(rng.choice(idx, size=n, replace=False) if n < len(idx) else idx)
    return FoldSplit(split.fold_id, np.sort(np.concatenate(kept)), split.validation, split.test)


def save_dataset(dataset, path):
    meta = {
        "kind": "labeled_dataset",
        "axes": ["trial", "feature"],
        "units": "z-score",
        "labels": list(dataset.labels),
        "label_kind": dataset.label_kind,
        "layout": [list(e) for e in dataset.layout],
        "provenance": dataset.provenance,
    }
    return bundle.write_bundle(path, {"features": dataset.features}, meta,
                               axes={"features": ["trial", "feature"]})


def load_dataset(path):
    arrays, meta = bundle.read_bundle(path)
    x = arrays["features"]
    if x.shape[0] != len(meta["labels"]):
        raise ShapeMismatchError("label count does not match feature rows")
    if meta.get("label_kind", "cv") == "cv":
        for lab in set(meta["labels"]):
            CvLabel.parse(lab)
    return LabeledDataset(x, tuple(meta["labels"]), tuple(tuple(e) for e in meta["layout"]),
                          meta.get("provenance", {}), meta.get("label_kind", "cv"))


def save_tensor(tensor, path, labels=None, extra=None):
    """Persist a SpectralTensor or FilterTensor (plus optional trial labels)."""
    if isinstance(tensor, FilterTensor):
        meta = {
            "kind": "filter_tensor",
            "axes": ["trial", "filter", "electrode", "time"],
            "centers": [float(c) for c in tensor.centers],
            "time": [float(t) for t in tensor.time],
            "rate": float(tensor.rate),
        }
        arrays = {"values": tensor.values}
    else:
        meta = {
            "kind": "spectral_tensor",
            "axes": ["trial", "electrode", "time"],
            "bands": tensor.band_names,
            "times": {b: [float(t) for t in tensor.times[b]] for b in tensor.band_names},
            "rates": {b: float(tensor.rates[b]) for b in tensor.band_names},
        }
        arrays = {f"values/{b}": tensor.values[b] for b in tensor.band_names}
    meta["units"] = "z-score"
    meta["labels"] = None if labels is None else [str(x) for x in labels]
    meta.update(extra or {})
    return bundle.write_bundle(path, arrays, meta)


def load_tensor(path):
    """Return ``(tensor, labels, meta)``."""
    arrays, meta = bundle.read_bundle(path)
    if meta["kind"] == "filter_tensor":
        t = FilterTensor(arrays["values"], np.array(meta["centers"]),
                         np.array(meta["time"]), meta["rate"])
    elif meta["kind"] == "spectral_tensor":
        t = SpectralTensor(
            {b: arrays[f"values/{b}"] for b in meta["bands"]},
            {b: np.array(meta["times"][b]) for b in meta["bands"]},
            dict(meta["rates"]),
        )
    else:
        raise InvalidInputError(f"not a tensor bundle: {meta['kind']}")
    labels = meta.get("labels")
    if labels is not None:
        n = t.values.shape[0] if isinstance(t, FilterTensor) else t.n_trials
        if len(labels) != n:
            raise ShapeMismatchError("label count does not match trial count")
    return t, labels, meta
