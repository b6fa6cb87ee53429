"""Fully-connected softmax classifiers trained with Nesterov momentum.

Zero hidden layers is multinomial logistic regression. Weight matrices are
stored (fan_in, fan_out), so column j holds the incoming weights of unit j;
max-norm clipping acts on those columns.
"""

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import bundle
from .errors import DivergedError, InvalidInputError

NONLINEARITIES = ("relu", "tanh", "sigmoid")
PATIENCE = 10
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    n_classes: int
    hidden_dims: tuple = ()
    nonlinearity: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.n_classes < 1 or any(h < 1 for h in self.hidden_dims):
            raise InvalidInputError(f"layer sizes must be positive: {self}")
        if len(self.hidden_dims) > 2:
            raise InvalidInputError("at most 2 hidden layers")
        if self.nonlinearity not in NONLINEARITIES:
            raise InvalidInputError(f"unknown nonlinearity {self.nonlinearity!r}")

    @property
    def layer_sizes(self):
        return (self.input_dim, *self.hidden_dims, self.n_classes)


@dataclass
class NetworkParams:
    weights: list
    biases: list

    def copy(self):
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def axpy(self, a, other):
        """self + a * other"""
        return NetworkParams(
            [w + a * o for w, o in zip(self.weights, other.weights)],
            [b + a * o for b, o in zip(self.biases, other.biases)],
        )

    def scale(self, a):
        return NetworkParams([a * w for w in self.weights], [a * b for b in self.biases])

    def zeros_like(self):
        return NetworkParams([np.zeros_like(w) for w in self.weights],
                             [np.zeros_like(b) for b in self.biases])

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)


@dataclass(frozen=True)
class TrainConfig:
    init_momentum: float = 0.5
    final_momentum: float = 0.9
    momentum_saturation_epoch: int = 10
    learning_rate: float = 0.01
    min_learning_rate: float = 1e-4
    lr_decay: float = 0.99
    batch_size: int = 32
    max_epochs: int = 100
    input_keep: float = 1.0
    input_rescale: float = 1.0
    hidden_keep: float = 1.0
    hidden_rescale: float = 1.0
    weight_decay: float = 0.0
    max_filter_norm: float = None
    init_scale: float = 0.01
    patience: int = PATIENCE
    seed: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainedModel:
    spec: NetworkSpec
    params: NetworkParams
    config: TrainConfig
    classes: tuple
    trace: list = field(default_factory=list)  # per epoch: train_loss, val_accuracy
    stopped_epoch: int = 0
    best_epoch: int = 0


def init_params(spec, init_scale, seed):
    """Uniform(-s, s) weights, zero biases."""
    rng = np.random.default_rng(seed)
    sizes = spec.layer_sizes
    weights = [rng.uniform(-init_scale, init_scale, size=(a, b)) for a, b in zip(sizes, sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return NetworkParams(weights, biases)


def _activate(u, kind):
    if kind == "relu":
        return np.maximum(u, 0.0)
    if kind == "tanh":
        return np.tanh(u)
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def _activate_grad(u, h, kind):
    if kind == "relu":
        return (u > 0).astype(u.dtype)
    if kind == "tanh":
        return 1.0 - h * h
    return h * (1.0 - h)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, x, nonlinearity="relu", masks=None, return_cache=False):
    """Return ``(hidden activations, class probabilities)``.

    ``masks`` (training only) holds one multiplier array per layer input:
    ``masks[0]`` for the input, ``masks[i]`` for hidden layer i; each entry
    is 0 (dropped) or the rescale factor (kept).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[0]:
        raise InvalidInputError(f"input width {x.shape[-1]} != {params.weights[0].shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("non-finite input")
    pre, hidden, inputs = [], [], []
    h = x
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        if masks is not None and masks[i] is not None:
            h = h * masks[i]
        inputs.append(h)
        u = h @ w + b
        if i < n_layers - 1:
            pre.append(u)
            h = _activate(u, nonlinearity)
            hidden.append(h)
        else:
            probs = softmax(u)
    if return_cache:
        return hidden, probs, (pre, inputs)
    return hidden, probs


def loss(probs, labels, params, weight_decay):
    """Mean negative log-likelihood plus ``weight_decay * sum ||W||^2``."""
    labels = np.asarray(labels)
    p = probs[np.arange(len(labels)), labels]
    nll = -np.mean(np.log(np.maximum(p, PROB_FLOOR))) if len(labels) else 0.0
    decay = weight_decay * sum(float(np.sum(w * w)) for w in params.weights)
    return nll + decay


def backward(params, x, labels, nonlinearity="relu", masks=None, weight_decay=0.0):
    """Return ``(loss value, gradients)`` for one batch."""
    hidden, probs, (pre, inputs) = forward(params, x, nonlinearity, masks, return_cache=True)
    labels = np.asarray(labels)
    n = len(labels)
    value = loss(probs, labels, params, weight_decay)
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        gw[i] = inputs[i].T @ delta + 2.0 * weight_decay * params.weights[i]
        gb[i] = delta.sum(axis=0)
        if i == 0:
            break
        dh = delta @ params.weights[i].T
        if masks is not None and masks[i] is not None:
            dh = dh * masks[i]
        delta = dh * _activate_grad(pre[i - 1], hidden[i - 1], nonlinearity)
    return value, NetworkParams(gw, gb)


def momentum_at(epoch, cfg):
    """Linear ramp from init to final momentum, reaching final at the saturation epoch."""
    if cfg.momentum_saturation_epoch <= 0:
        return cfg.final_momentum
    frac = min(1.0, max(0, epoch) / cfg.momentum_saturation_epoch)
    return cfg.init_momentum + (cfg.final_momentum - cfg.init_momentum) * frac


def learning_rate_at(epoch, cfg):
    return max(cfg.min_learning_rate, cfg.learning_rate * cfg.lr_decay ** epoch)


def clip_column_norms(params, max_norm):
    if max_norm is None:
        return params
    weights = []
    for w in params.weights:
        norms = np.sqrt(np.sum(w * w, axis=0))
        factor = np.where(norms > max_norm, max_norm / np.where(norms > 0, norms, 1.0), 1.0)
        weights.append(w * factor)
    return NetworkParams(weights, [b.copy() for b in params.biases])


def nesterov_step(params, velocity, grads, epoch, cfg):
    """One Nesterov update; ``grads`` must be taken at ``params + mu * velocity``.

    v <- mu v - lr grad;  params <- params + v;  then max-norm projection.
    """
    mu = momentum_at(epoch, cfg)
    lr = learning_rate_at(epoch, cfg)
    velocity = velocity.scale(mu).axpy(-lr, grads)
    params = clip_column_norms(params.axpy(1.0, velocity), cfg.max_filter_norm)
    return params, velocity


def _sample_masks(rng, spec, n, cfg):
    masks = []
    for i, width in enumerate(spec.layer_sizes[:-1]):
        keep, rescale = (cfg.input_keep, cfg.input_rescale) if i == 0 else (
            cfg.hidden_keep, cfg.hidden_rescale)
        if keep >= 1.0 and rescale == 1.0:
            masks.append(None)
        else:
            masks.append((rng.random((n, width)) < keep) * float(rescale))
    return masks


def predict_proba(model, x):
    """Class probabilities; dropout is never applied here."""
    return forward(model.params, x, model.spec.nonlinearity)[1]


def predict(model, x):
    """Argmax class index; ties go to the lowest index."""
    return np.argmax(predict_proba(model, x), axis=1)


def _accuracy(params, spec, x, y):
    if len(y) == 0:
        return 0.0
    probs = forward(params, x, spec.nonlinearity)[1]
    return float(np.mean(np.argmax(probs, axis=1) == y))


def spec_for(dataset, hidden_dims=(), nonlinearity="relu"):
    return NetworkSpec(dataset.dim, len(dataset.classes), tuple(hidden_dims), nonlinearity)


def train(dataset, split, spec, cfg, score_fn=None):
    """Mini-batch training with early stopping on validation accuracy.

    ``split`` is a FoldSplit or a ``(train_idx, validation_idx)`` pair.
    Stops when validation accuracy has not strictly improved for
    ``cfg.patience`` epochs; returns the best-validation parameters.
    ``score_fn(params) -> float`` replaces validation accuracy (testing hook).
    """
    train_idx, val_idx = split.without_test() if hasattr(split, "without_test") else split
    y_all = dataset.y
    x_tr = dataset.features[train_idx].astype(float)
    y_tr = y_all[train_idx]
    x_va = dataset.features[val_idx].astype(float)
    y_va = y_all[val_idx]
    if spec.input_dim != x_tr.shape[1] or spec.n_classes != len(dataset.classes):
        raise InvalidInputError("network spec does not match dataset")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(spec, cfg.init_scale, rng.integers(2**63))
    velocity = params.zeros_like()
    best_score, best_params, best_epoch, since = -math.inf, params.copy(), 0, 0
    trace = []
    batch = max(1, int(cfg.batch_size))
    epoch = 0
    for epoch in range(cfg.max_epochs):
        mu = momentum_at(epoch, cfg)
        order = rng.permutation(len(y_tr))
        total, count = 0.0, 0
        # overflow shows up as a non-finite loss and is reported as DivergedError
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, len(order), batch):
                idx = order[start:start + batch]
                masks = _sample_masks(rng, spec, len(idx), cfg)
                ahead = params.axpy(mu, velocity)
                value, grads = backward(ahead, x_tr[idx], y_tr[idx], spec.nonlinearity, masks,
                                        cfg.weight_decay)
                params, velocity = nesterov_step(params, velocity, grads, epoch, cfg)
                total += value * len(idx)
                count += len(idx)
        train_loss = total / max(count, 1)
        if not math.isfinite(train_loss) or not params.is_finite():
            raise DivergedError(epoch + 1)
        score = score_fn(params) if score_fn else _accuracy(params, spec, x_va, y_va)
        trace.append({"epoch": epoch + 1, "train_loss": train_loss, "val_accuracy": score})
        if score > best_score:
            best_score, best_params, best_epoch, since = score, params.copy(), epoch + 1, 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    return TrainedModel(spec, best_params, cfg, dataset.classes, trace, len(trace), best_epoch)


def save_model(model, path):
    arrays = {}
    for i, (w, b) in enumerate(zip(model.params.weights, model.params.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    meta = {
        "kind": "model_checkpoint",
        "spec": asdict(model.spec),
        "config": model.config.to_dict(),
        "classes": list(model.classes),
        "trace": model.trace,
        "stopped_epoch": model.stopped_epoch,
        "best_epoch": model.best_epoch,
    }
    return bundle.write_bundle(path, arrays, meta)


def load_model(path):
    arrays, meta = bundle.read_bundle(path)
    spec = NetworkSpec(**{**meta["spec"], "hidden_dims": tuple(meta["spec"]["hidden_dims"])})
    n = len(spec.layer_sizes) - 1
    params = NetworkParams([arrays[f"w{i}"].astype(float) for i in range(n)],
                           [arrays[f"b{i}"].astype(float) for i in range(n)])
    cfg = TrainConfig(**meta["config"])
    return TrainedModel(spec, params, cfg, tuple(meta["classes"]), meta["trace"],
                        meta["stopped_epoch"], meta["best_epoch"])


def with_seed(cfg, seed):
    return replace(cfg, seed=int(seed))
