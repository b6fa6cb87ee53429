"""Accuracy, chance, information metrics and significance tests."""

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dataset import EXCLUDED, LabeledDataset, stratified_folds, task_labels
from .errors import ConvergenceError, InvalidInputError, UndefinedTaskError, UndefinedTestError

SYMBOL_DURATION = 1.3  # seconds per CV trial window


@dataclass(frozen=True)
class ConfusionSummary:
    classes: tuple  # predicted (column) classes
    row_classes: tuple  # true classes present in the test set
    hard: np.ndarray  # counts [true, predicted]
    soft: np.ndarray  # mean predicted probability per true class
    excluded: tuple = ()

    @property
    def row_counts(self):
        return self.hard.sum(axis=1)

    @property
    def accuracy(self):
        col = {c: j for j, c in enumerate(self.classes)}
        hits = sum(self.hard[i, col[c]] for i, c in enumerate(self.row_classes) if c in col)
        return float(hits / self.hard.sum())


@dataclass(frozen=True)
class ChannelReport:
    conditional: np.ndarray
    prior: np.ndarray
    mutual_information: float
    capacity: float
    capacity_prior: np.ndarray
    wolpaw: float
    itr: float
    accuracy: float
    n_classes: int

    def to_dict(self):
        return {
            "n_classes": self.n_classes,
            "accuracy": self.accuracy,
            "mutual_information_bits": self.mutual_information,
            "capacity_bits": self.capacity,
            "capacity_prior": self.capacity_prior.tolist(),
            "wolpaw_bits": self.wolpaw,
            "itr_bits_per_s": self.itr,
        }


@dataclass(frozen=True)
class ChanceEstimate:
    mean: float
    n_resamples: int
    values: np.ndarray = field(repr=False)


def accuracy(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(predictions) != len(labels) or len(labels) == 0:
        raise InvalidInputError("predictions and labels must be equal, nonempty lengths")
    return float(np.mean(predictions == labels))


def chance_accuracy(train_label_counts, test_labels, n_resamples=100, seed=0):
    """Accuracy of guessing each test label from the training label distribution."""
    if isinstance(train_label_counts, dict):
        counts = dict(train_label_counts)
    else:
        counts = Counter(train_label_counts)
    if not counts or sum(counts.values()) <= 0:
        raise InvalidInputError("empty training label counts")
    names = list(counts)
    p = np.array([counts[n] for n in names], dtype=float)
    p /= p.sum()
    test = np.asarray([str(t) for t in test_labels])
    rng = np.random.default_rng(seed)
    values = np.empty(n_resamples)
    for r in range(n_resamples):
        draws = np.asarray(names, dtype=object)[rng.choice(len(names), size=len(test), p=p)]
        values[r] = np.mean(draws.astype(str) == test)
    return ChanceEstimate(float(values.mean()), n_resamples, values)


def restrict_to_task(cv_predictions, cv_labels, task):
    """Exact-match accuracy after projecting predictions and truth onto ``task``.

    Trials whose true consonant is uncategorized for the task are dropped.
    """
    truth = task_labels(cv_labels, task)
    pred = task_labels(cv_predictions, task)
    kept = [(p, t) for p, t in zip(pred, truth) if t is not EXCLUDED]
    if not kept:
        raise UndefinedTaskError(f"no trials retained for task {task!r}")
    return float(np.mean([p == t for p, t in kept]))


def confusion_from_probs(probs, true_idx, classes):
    """Hard and soft confusion from predicted probabilities.

    Classes absent from the test set are dropped as rows (with a warning).
    """
    probs = np.asarray(probs, dtype=float)
    true_idx = np.asarray(true_idx)
    k = len(classes)
    pred = np.argmax(probs, axis=1)
    rows, hard, soft, excluded = [], [], [], []
    for c in range(k):
        mask = true_idx == c
        if not mask.any():
            excluded.append(classes[c])
            continue
        rows.append(classes[c])
        hard.append(np.bincount(pred[mask], minlength=k))
        soft.append(probs[mask].mean(axis=0))
    if excluded:
        warnings.warn(f"classes absent from test set, rows excluded: {excluded}")
    return ConfusionSummary(tuple(classes), tuple(rows), np.array(hard), np.array(soft),
                            tuple(excluded))


def soft_confusion(model, x, true_idx):
    from .models import predict_proba
    return confusion_from_probs(predict_proba(model, x), true_idx, model.classes)


def _check_distributions(cond, prior=None):
    cond = np.asarray(cond, dtype=float)
    if cond.ndim != 2 or np.any(cond < -1e-12) or not np.allclose(cond.sum(axis=1), 1, atol=1e-6):
        raise InvalidInputError("conditional rows must be probability distributions")
    cond = np.clip(cond, 0, None)
    if prior is None:
        return cond
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (cond.shape[0],) or np.any(prior < -1e-12) or abs(prior.sum() - 1) > 1e-6:
        raise InvalidInputError("prior must be a distribution over the conditional's rows")
    return cond, np.clip(prior, 0, None)


def _row_divergences(cond, q):
    """D(cond[y] || q) in bits for every row, with 0 log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(cond > 0, cond * np.log2(cond / q), 0.0)
    return terms.sum(axis=1)


def mutual_information(cond, prior):
    """I(Ŷ;Y) in bits for channel ``cond[y, ŷ]`` and input distribution ``prior``."""
    cond, prior = _check_distributions(cond, prior)
    q = prior @ cond
    return float(max(0.0, prior @ _row_divergences(cond, q)))


def channel_capacity_exact(cond, tol=1e-9, max_iter=100_000):
    """Capacity in bits and a capacity-achieving prior.

    Alternating maximization over the input prior with the multiplicative
    update p(y) <- p(y) 2^{D(cond[y] || q)} / Z. Each iterate brackets the
    capacity between log2 Z (lower) and max_y D (upper); stops when the
    gap is below ``tol``.
    """
    cond = _check_distributions(cond)
    p = np.full(cond.shape[0], 1.0 / cond.shape[0])
    lower = upper = 0.0
    for _ in range(max_iter):
        d = _row_divergences(cond, p @ cond)
        z = p @ np.exp2(d)
        lower, upper = math.log2(z), float(d.max())
        if upper - lower < tol:
            return max(0.0, lower), p
        p = p * np.exp2(d) / z
    raise ConvergenceError(lower, upper, max_iter)


def channel_capacity_wolpaw(n_classes, acc):
    """Capacity assuming equal per-class accuracy and uniformly spread errors."""
    n, p = int(n_classes), float(acc)
    if n < 2 or not 0 <= p <= 1:
        raise InvalidInputError("need n_classes >= 2 and accuracy in [0, 1]")
    bits = math.log2(n)
    if p > 0:
        bits += p * math.log2(p)
    if p < 1:
        bits += (1 - p) * math.log2((1 - p) / (n - 1))
    return max(0.0, bits)


def itr(capacity_bits, symbol_duration=SYMBOL_DURATION):
    if symbol_duration <= 0:
        raise InvalidInputError("symbol duration must be positive")
    return capacity_bits / symbol_duration


def channel_report(summary, use="soft", symbol_duration=SYMBOL_DURATION):
    """Information metrics from a ConfusionSummary.

    ``use="soft"`` takes P(ŷ|y) from the soft confusion rows; ``"hard"``
    from normalized prediction counts. The prior is the empirical test
    distribution.
    """
    counts = summary.row_counts.astype(float)
    if use == "soft":
        cond = summary.soft / summary.soft.sum(axis=1, keepdims=True)
    elif use == "hard":
        cond = summary.hard / counts[:, None]
    else:
        raise InvalidInputError(f"use must be 'soft' or 'hard', got {use!r}")
    prior = counts / counts.sum()
    mi = mutual_information(cond, prior)
    cap, cap_prior = channel_capacity_exact(cond)
    acc = summary.accuracy
    n = len(summary.classes)
    wolpaw = channel_capacity_wolpaw(n, acc) if n >= 2 else 0.0
    return ChannelReport(cond, prior, mi, cap, cap_prior, wolpaw, itr(cap, symbol_duration),
                         acc, n)


def scaling_slope(n_train, values):
    """OLS slope of ``values`` on training-set size, per 1000 examples.

    Returns ``(slope, standard_error)``.
    """
    x = np.asarray(n_train, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(x) != len(y) or len(np.unique(x)) < 2:
        raise InvalidInputError("need at least 2 distinct training-set sizes")
    fit = stats.linregress(x, y)
    se = fit.stderr if len(x) > 2 else 0.0
    return 1000.0 * fit.slope, 1000.0 * se


# -- Wilcoxon signed-rank --------------------------------------------------

def _signed_rank_null(doubled_ranks):
    """Exact null pmf of the doubled positive-rank sum (ties via midranks)."""
    total = int(sum(doubled_ranks))
    pmf = np.zeros(total + 1)
    pmf[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(pmf)
        shifted[r:] = pmf[:len(pmf) - r]
        pmf = 0.5 * (pmf + shifted)
    return pmf


def wsrt_bonferroni(paired_a, paired_b, n_corrections=1, alternative="two-sided",
                    exact_max_n=25):
    """Wilcoxon signed-rank test with Bonferroni correction.

    Zero differences are dropped. Exact null distribution for up to
    ``exact_max_n`` nonzero pairs, normal approximation (tie-corrected)
    above. Returns ``(T+, corrected p)`` with p capped at 1.
    """
    a = np.asarray(paired_a, dtype=float)
    b = np.asarray(paired_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 5:
        raise InvalidInputError("need two equal-length samples of at least 5 pairs")
    d = a - b
    d = d[d != 0]
    if len(d) == 0:
        raise UndefinedTestError("all paired differences are zero")
    n = len(d)
    ranks = stats.rankdata(np.abs(d))
    t_plus = float(ranks[d > 0].sum())
    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(int)
        pmf = _signed_rank_null(doubled)
        t2 = int(round(2 * t_plus))
        p_le = pmf[:t2 + 1].sum()
        p_ge = pmf[t2:].sum()
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
        z = (t_plus - mean) / math.sqrt(var)
        p_le, p_ge = stats.norm.cdf(z), stats.norm.sf(z)
    if alternative == "two-sided":
        p = min(1.0, 2.0 * min(p_le, p_ge))
    elif alternative == "greater":
        p = p_ge
    elif alternative == "less":
        p = p_le
    else:
        raise InvalidInputError(f"unknown alternative {alternative!r}")
    return t_plus, float(min(1.0, p * n_corrections))


# -- Time-resolved decoding ------------------------------------------------

def timepoint_decoding(tensor, labels, task="cv", band="high_gamma", n_folds=10, seed=0,
                       cfg=None, time_indices=None, min_count=10):
    """Logistic regression on the electrode vector at each time sample.

    Returns a dict with ``time``, mean test ``accuracy`` over folds, its
    ``sem``, and the mean ``chance`` accuracy.
    """
    from .models import TrainConfig, predict, spec_for, train

    values = tensor.values[band]
    time = np.asarray(tensor.times[band])
    projected = task_labels(labels, task)
    keep = np.array([lab is not EXCLUDED for lab in projected])
    counts = Counter(lab for lab, k in zip(projected, keep) if k)
    keep &= np.array([lab is not EXCLUDED and counts[lab] >= min_count for lab in projected])
    labs = tuple(str(lab) for lab, k in zip(projected, keep) if k)
    values = values[keep]
    folds = stratified_folds(labs, n_folds, seed)
    cfg = cfg or TrainConfig(learning_rate=0.05, batch_size=64, max_epochs=60,
                             weight_decay=1e-4, seed=seed)
    idx = range(len(time)) if time_indices is None else time_indices
    acc_mean, acc_sem, chance = [], [], []
    for t in idx:
        ds = LabeledDataset(values[:, :, t], labs, label_kind="generic")
        spec = spec_for(ds)
        accs, ch = [], []
        for f in folds:
            model = train(ds, f, spec, cfg)
            y = ds.y
            accs.append(accuracy(predict(model, ds.features[f.test]), y[f.test]))
            ch.append(chance_accuracy(Counter(y[f.train].tolist()), y[f.test].tolist(),
                                      seed=seed + f.fold_id).mean)
        acc_mean.append(float(np.mean(accs)))
        acc_sem.append(float(np.std(accs, ddof=1) / math.sqrt(len(accs))))
        chance.append(float(np.mean(ch)))
    return {
        "time": time[list(idx)].tolist(),
        "accuracy": acc_mean,
        "sem": acc_sem,
        "chance": chance,
    }
