"""Random hyperparameter search with 10-fold validation.

Every sampled configuration is trained on every fold's train/validation
view; the winner has the highest mean validation accuracy (ties go to the
lowest config id). Only the winner is then scored on the test blocks.
"""

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DivergedError, FormatError, InvalidInputError, SearchFailedError
from .models import NONLINEARITIES, NetworkSpec, TrainConfig, predict_proba, train
from .seeding import derive_seed

KINDS = ("int", "float", "log", "one_minus_log", "enum")


@dataclass(frozen=True)
class Hyperparameter:
    name: str
    kind: str
    low: float = None
    high: float = None
    options: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown hyperparameter kind {self.kind!r}")
        if self.kind == "enum":
            if not self.options:
                raise InvalidInputError(f"{self.name}: enum needs options")
        elif self.low is None or self.high is None or self.low > self.high:
            raise InvalidInputError(f"{self.name}: bad range [{self.low}, {self.high}]")

    def sample(self, rng):
        if self.kind == "enum":
            return self.options[int(rng.integers(len(self.options)))]
        if self.kind == "int":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        r = self.low if self.low == self.high else float(rng.uniform(self.low, self.high))
        if self.kind == "log":
            return 10.0**r
        if self.kind == "one_minus_log":
            return 1.0 - 10.0**r
        return r

    def contains(self, value):
        if self.kind == "enum":
            return value in self.options
        if self.kind == "log":
            r = math.log10(value)
        elif self.kind == "one_minus_log":
            r = math.log10(1.0 - value)
        else:
            r = value
        eps = 1e-9 * max(1.0, abs(self.low), abs(self.high))
        return self.low - eps <= r <= self.high + eps


@dataclass(frozen=True)
class HyperparameterSpace:
    params: tuple
    input_dim: int
    n_classes: int

    def __getitem__(self, name):
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def names(self):
        return tuple(p.name for p in self.params)


def default_space(input_dim, n_classes, model="deep"):
    """Search ranges for deep networks; ``model="logistic"`` drops the hidden layers."""
    common = [
        Hyperparameter("init_scale", "log", -5.0, 0.0),
        Hyperparameter("learning_rate", "log", -3.0, -1.0),
        Hyperparameter("min_learning_rate", "log", -5.0, -1.0),
        Hyperparameter("lr_decay", "one_minus_log", -5.0, -1.0),
        Hyperparameter("final_momentum", "one_minus_log", -2.0, -3.0102e-1),
        Hyperparameter("momentum_saturation_epoch", "int", 1, 50),
        Hyperparameter("batch_size", "int", 15, 256),
        Hyperparameter("max_epochs", "int", 10, 100),
        Hyperparameter("input_keep", "float", 0.3, 1.0),
        Hyperparameter("input_rescale", "float", 1.0, 3.0),
        Hyperparameter("weight_decay", "log", -7.0, 0.0),
        Hyperparameter("max_filter_norm", "float", 0.0, 3.0),
    ]
    if model == "logistic":
        layers = [Hyperparameter("n_layers", "int", 0, 0)]
        hidden = []
    elif model == "deep":
        layers = [
            Hyperparameter("n_layers", "int", 1, 2),
            Hyperparameter("hidden_dim", "int", n_classes, max(n_classes, 1000)),
            Hyperparameter("nonlinearity", "enum", options=NONLINEARITIES),
        ]
        hidden = [
            Hyperparameter("hidden_keep", "float", 0.3, 1.0),
            Hyperparameter("hidden_rescale", "float", 1.0, 3.0),
        ]
    else:
        raise InvalidInputError(f"unknown model family {model!r}")
    return HyperparameterSpace(tuple(layers + common + hidden), int(input_dim), int(n_classes))


@dataclass(frozen=True)
class Candidate:
    config_id: int
    spec: NetworkSpec
    config: TrainConfig
    values: dict = field(default_factory=dict)

    def to_dict(self):
        return {"config_id": self.config_id, "spec": asdict(self.spec),
                "config": self.config.to_dict(), "values": self.values}


def sample_config(space, seed):
    """Draw one configuration; returns ``(NetworkSpec, TrainConfig, values)``."""
    rng = np.random.default_rng(seed)
    values = {p.name: p.sample(rng) for p in space.params}
    n_layers = values.get("n_layers", 0)
    hidden = (values["hidden_dim"],) * n_layers if n_layers else ()
    spec = NetworkSpec(space.input_dim, space.n_classes, hidden, values.get("nonlinearity", "relu"))
    train_fields = set(TrainConfig.__dataclass_fields__)
    cfg = TrainConfig(**{k: v for k, v in values.items() if k in train_fields})
    return spec, cfg, values


@dataclass
class SearchResult:
    candidates: list
    val_accuracy: np.ndarray  # config x fold, NaN where training diverged
    winner: int
    test_accuracy: np.ndarray = None  # per fold, winner only
    test_probs: np.ndarray = None  # trial x class, each trial from its own test fold
    classes: tuple = ()

    @property
    def mean_val_accuracy(self):
        return np.array([np.nan if np.isnan(r).any() else float(np.mean(r))
                         for r in self.val_accuracy])

    def summary(self):
        return {
            "winner": self.winner,
            "winner_config": self.candidates[self.winner].to_dict(),
            "mean_val_accuracy": [None if np.isnan(v) else v for v in self.mean_val_accuracy],
            "test_accuracy": None if self.test_accuracy is None else self.test_accuracy.tolist(),
        }


def select_winner(val_accuracy):
    """Highest mean validation accuracy; configs with a diverged fold are skipped."""
    acc = np.asarray(val_accuracy, dtype=float)
    best, best_id = -math.inf, None
    for i, row in enumerate(acc):
        if np.isnan(row).any():
            continue
        m = float(np.mean(row))
        if m > best:
            best, best_id = m, i
    if best_id is None:
        raise SearchFailedError("every sampled configuration diverged")
    return best_id


def _fit_fold(job):
    dataset, split, spec, cfg = job
    try:
        model = train(dataset, split, spec, cfg)
    except DivergedError as err:
        return {"val_accuracy": None, "diverged_epoch": err.epoch}
    best = model.trace[model.best_epoch - 1]["val_accuracy"] if model.best_epoch else 0.0
    return {"val_accuracy": best, "best_epoch": model.best_epoch,
            "stopped_epoch": model.stopped_epoch}


def _read_log(path):
    done = {}
    if not path or not os.path.exists(path):
        return done
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise FormatError(f"search log line {n} is not JSON: {err}") from err
            done[(rec["config_id"], rec["fold"])] = rec
    return done


def _map(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_fit_fold(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_fit_fold, jobs))


def run_search(dataset, folds, n_samples=50, seed=0, model="deep", space=None,
               candidates=None, log_path=None, workers=1):
    """Train each candidate on every fold and score the winner on the test blocks.

    ``candidates`` (list of ``(NetworkSpec, TrainConfig)``) replaces random
    sampling. ``log_path`` is an append-only JSON-lines record of
    (config, fold) results; records already present are reused on rerun.
    """
    if candidates is None:
        if n_samples < 1:
            raise InvalidInputError("n_samples must be >= 1")
        space = space or default_space(dataset.dim, len(dataset.classes), model)
        candidates = [Candidate(i, *sample_config(space, derive_seed(seed, "config", i)))
                      for i in range(n_samples)]
    else:
        candidates = [c if isinstance(c, Candidate) else Candidate(i, *c)
                      for i, c in enumerate(candidates)]
    if not candidates:
        raise InvalidInputError("no candidates to search")

    done = _read_log(log_path)
    jobs, keys = [], []
    for cand in candidates:
        for split in folds:
            key = (cand.config_id, split.fold_id)
            train_seed = derive_seed(seed, "train", cand.config_id, split.fold_id)
            if key in done:
                if done[key].get("train_seed") != train_seed:
                    raise FormatError(f"search log record {key} was written by another run")
                continue
            cfg = TrainConfig(**{**cand.config.to_dict(), "seed": train_seed})
            jobs.append((dataset, split.without_test(), cand.spec, cfg))
            keys.append((key, train_seed))
    results = _map(jobs, workers)
    if log_path:
        with open(log_path, "a") as fh:
            for (key, train_seed), res in zip(keys, results):
                rec = {"config_id": key[0], "fold": key[1], "train_seed": train_seed, **res}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
                done[key] = rec
    else:
        for (key, train_seed), res in zip(keys, results):
            done[key] = {"train_seed": train_seed, **res}

    val = np.full((len(candidates), len(folds)), np.nan)
    for i, cand in enumerate(candidates):
        for j, split in enumerate(folds):
            acc = done[(cand.config_id, split.fold_id)]["val_accuracy"]
            val[i, j] = np.nan if acc is None else acc
    winner = select_winner(val)
    result = SearchResult(candidates, val, winner, classes=dataset.classes)
    score_winner(result, dataset, folds, seed)
    return result


def score_winner(result, dataset, folds, seed):
    """Retrain the winner per fold (same seeds) and evaluate on the test blocks."""
    cand = result.candidates[result.winner]
    y = dataset.y
    probs = np.full((len(y), len(dataset.classes)), np.nan)
    test_acc = []
    for split in folds:
        cfg = TrainConfig(**{**cand.config.to_dict(),
                             "seed": derive_seed(seed, "train", cand.config_id, split.fold_id)})
        model = train(dataset, split.without_test(), cand.spec, cfg)
        p = predict_proba(model, dataset.features[split.test].astype(float))
        probs[split.test] = p
        test_acc.append(float(np.mean(np.argmax(p, axis=1) == y[split.test])))
    result.test_accuracy = np.array(test_acc)
    result.test_probs = probs
    return result
