"""Multilayer perceptron predicting the feeding substation of each load block.

Hidden layers use ReLU with inverted dropout, the head is a sigmoid, and
training minimizes mean binary cross-entropy plus an L2 penalty on the
weight matrices with Adam and early stopping on validation loss.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .netcase import BlockAssignment, LoadBlockPartition, NetworkCase

EPS = 1e-12
MODEL_MAGIC = "dnrlearn-mlp"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 125
    epochs: int = 250
    l2: float = 0.001
    dropout_p: float = 0.25
    patience: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.l2 < 0 or self.patience < 0:
            raise ValueError("l2 and patience must be non-negative")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")


@dataclass(frozen=True)
class NormStats:
    """Per-feature affine map to zero mean and unit deviation."""
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "NormStats":
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            raise ValueError("cannot fit normalization on zero rows")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        # constant columns keep unit scale
        std = np.where(std > 0.0, std, 1.0)
        return cls(mean, std)

    def normalize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def denormalize(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean


@dataclass
class MlpModel:
    """Dense layers; ``weights[l]`` has shape (fan_in, fan_out)."""
    weights: list
    biases: list
    norm: NormStats | None = None
    meta: dict = field(default_factory=dict)
    version: int = 0  # bumped on every parameter update

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {k}: weight {W.shape} and bias {b.shape} disagree")
            if k and W.shape[0] != self.weights[k - 1].shape[1]:
                raise ValueError(f"layer {k}: fan-in {W.shape[0]} != previous fan-out")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(W.shape[1] for W in self.weights)

    @property
    def params(self) -> list:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        k = 0
        for p in self.params:
            p[...] = theta[k:k + p.size].reshape(p.shape)
            k += p.size
        if k != theta.size:
            raise ValueError(f"expected {k} parameters, got {theta.size}")
        self.version += 1

    def copy(self) -> "MlpModel":
        return MlpModel([W.copy() for W in self.weights], [b.copy() for b in self.biases],
                        self.norm, dict(self.meta))


def init_model(in_dim: int, out_dim: int, hidden: Sequence[int] = (64, 64, 64),
               rng: np.random.Generator | None = None) -> MlpModel:
    """He-normal weights for the ReLU layers, Glorot for the head, zero biases."""
    rng = rng if rng is not None else np.random.default_rng(0)
    dims = [int(in_dim), *map(int, hidden), int(out_dim)]
    if min(dims) < 1:
        raise ValueError(f"layer widths must be positive: {dims}")
    weights, biases = [], []
    for k, (a, b) in enumerate(zip(dims, dims[1:])):
        scale = np.sqrt(2.0 / a) if k < len(dims) - 2 else np.sqrt(2.0 / (a + b))
        weights.append(rng.normal(0.0, scale, (a, b)))
        biases.append(np.zeros(b))
    return MlpModel(weights, biases)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ForwardCache:
    model_id: int
    version: int
    inputs: list   # input to each layer
    pre: list      # pre-activations of the hidden layers
    masks: list    # scaled dropout masks (None in eval mode)
    yhat: np.ndarray


def forward(model: MlpModel, X, mode: str = "eval", rng: np.random.Generator | None = None,
            dropout_p: float = 0.25) -> tuple[np.ndarray, ForwardCache]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.dims[0]:
        raise ValueError(f"batch has shape {X.shape}, model expects {model.dims[0]} columns")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    drop = mode == "train" and dropout_p > 0.0
    if drop and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    inputs, pre, masks = [], [], []
    h = X
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(h)
        z = h @ W + b
        if k == last:
            yhat = sigmoid(z)
            break
        pre.append(z)
        h = np.maximum(z, 0.0)
        if drop:
            mask = (rng.random(h.shape) >= dropout_p) / (1.0 - dropout_p)
            h = h * mask
            masks.append(mask)
        else:
            masks.append(None)
    return yhat, ForwardCache(id(model), model.version, inputs, pre, masks, yhat)


def bce_loss(y, yhat, model: MlpModel | None = None, l2: float = 0.0) -> float:
    """Mean binary cross-entropy over all entries plus ``l2 * sum(W**2)``."""
    y = np.asarray(y, dtype=float)
    p = np.clip(np.asarray(yhat, dtype=float), EPS, 1.0 - EPS)
    loss = float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    if model is not None and l2:
        loss += l2 * sum(float(np.sum(W * W)) for W in model.weights)
    return loss


def backward(model: MlpModel, cache: ForwardCache, y, l2: float = 0.0) -> list:
    """Gradients of ``bce_loss`` in ``model.params`` order."""
    if cache.model_id != id(model) or cache.version != model.version:
        raise ValueError("stale forward cache: model changed since the forward pass")
    y = np.asarray(y, dtype=float)
    yhat = cache.yhat
    if y.shape != yhat.shape:
        raise ValueError(f"labels {y.shape} do not match predictions {yhat.shape}")
    # the clipped region of the loss is flat
    inside = (yhat > EPS) & (yhat < 1.0 - EPS)
    delta = np.where(inside, yhat - y, 0.0) / y.size
    grads = [None] * (2 * len(model.weights))
    for k in range(len(model.weights) - 1, -1, -1):
        W = model.weights[k]
        grads[2 * k] = cache.inputs[k].T @ delta + 2.0 * l2 * W
        grads[2 * k + 1] = delta.sum(axis=0)
        if k == 0:
            break
        delta = delta @ W.T
        if cache.masks[k - 1] is not None:
            delta = delta * cache.masks[k - 1]
        delta = delta * (cache.pre[k - 1] > 0.0)
    return grads


class Adam:
    def __init__(self, params: list, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, model: MlpModel, grads: list) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(model.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        model.version += 1


# ---------------------------------------------------------------------------
# Data


@dataclass
class Dataset:
    """Raw features and binary targets with train/val/test row indices.

    ``norm`` is fitted on the training rows only.
    """
    features: np.ndarray
    labels: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    norm: NormStats

    @classmethod
    def from_split(cls, features, labels, train, val, test) -> "Dataset":
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=float)
        if features.shape[0] != labels.shape[0]:
            raise ValueError("features and labels have different row counts")
        idx = [np.asarray(i, dtype=np.int64) for i in (train, val, test)]
        return cls(features, labels, *idx, NormStats.fit(features[idx[0]]))

    def part(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Normalized features and targets of one split."""
        idx = getattr(self, name)
        return self.norm.normalize(self.features[idx]), self.labels[idx]


def augment(data: Dataset, copies: int, noise_std: float = 1.0,
            rng: np.random.Generator | None = None) -> Dataset:
    """Append ``copies`` noisy duplicates of every training row.

    Noise is drawn in normalized units, so ``noise_std = 1`` is one
    training-set standard deviation per feature.  Validation and test rows
    and the normalization are untouched.
    """
    if copies < 0:
        raise ValueError("copies must be >= 0")
    if copies == 0:
        return data
    rng = rng if rng is not None else np.random.default_rng(0)
    base = data.features[data.train]
    noise = rng.normal(0.0, 1.0, (copies,) + base.shape) * noise_std
    extra = (np.tile(base, (copies, 1, 1)) + noise * data.norm.std).reshape(-1, base.shape[1])
    n0 = data.features.shape[0]
    features = np.vstack([data.features, extra])
    labels = np.vstack([data.labels, np.tile(data.labels[data.train], (copies, 1))])
    train = np.concatenate([data.train, np.arange(n0, n0 + extra.shape[0])])
    return Dataset(features, labels, train, data.val, data.test, data.norm)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


def _eval_loss(model: MlpModel, X, Y, l2: float) -> float:
    yhat, _ = forward(model, X, "eval")
    return bce_loss(Y, yhat, model, l2)


def train(model: MlpModel, data: Dataset, cfg: TrainConfig) -> tuple[MlpModel, list[EpochRecord]]:
    """Mini-batch Adam with early stopping; returns the weights with the
    lowest validation loss and the per-epoch history."""
    Xtr, Ytr = data.part("train")
    Xva, Yva = data.part("val")
    if len(Xtr) == 0 or len(Xva) == 0:
        raise ValueError("training and validation splits must be non-empty")
    if Xtr.shape[1] != model.dims[0] or Ytr.shape[1] != model.dims[-1]:
        raise ValueError(f"data is {Xtr.shape[1]}->{Ytr.shape[1]}, model is {model.dims[0]}->{model.dims[-1]}")
    rng = np.random.default_rng(cfg.seed)
    model = model.copy()
    model.norm = data.norm
    opt = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    best_loss, best_theta, since = np.inf, model.flat(), 0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(Xtr))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            yhat, cache = forward(model, Xtr[rows], "train", rng, cfg.dropout_p)
            total += bce_loss(Ytr[rows], yhat, model, cfg.l2) * len(rows)
            opt.step(model, backward(model, cache, Ytr[rows], cfg.l2))
        val = _eval_loss(model, Xva, Yva, cfg.l2)
        history.append(EpochRecord(epoch, total / len(order), val))
        if val < best_loss:
            best_loss, best_theta, since = val, model.flat(), 0
        else:
            since += 1
            if since > cfg.patience:
                break
    model.set_flat(best_theta)
    model.meta = {**model.meta, "config": asdict(cfg), "best_val_loss": float(best_loss),
                  "epochs_run": len(history)}
    return model, history


# ---------------------------------------------------------------------------
# Label encoding


@dataclass(frozen=True)
class LabelCodec:
    """Maps block assignments to network outputs and back.

    Blocks holding a substation are fixed; every other tie group (a
    single block when untied) gets one output with two substations, or
    one output per substation (one-hot) with more.
    """
    groups: tuple[tuple[int, ...], ...]
    fixed: tuple[tuple[int, int], ...]
    n_blocks: int
    n_substations: int

    @classmethod
    def for_case(cls, case: NetworkCase, partition: LoadBlockPartition) -> "LabelCodec":
        return cls(partition.free_groups(case), tuple(sorted(partition.fixed_labels(case).items())),
                   partition.n_blocks, len(case.substations))

    @property
    def width(self) -> int:
        return 1 if self.n_substations <= 2 else self.n_substations

    @property
    def n_outputs(self) -> int:
        return len(self.groups) * self.width

    def encode(self, a: BlockAssignment) -> np.ndarray:
        out = np.zeros(self.n_outputs)
        for g, grp in enumerate(self.groups):
            lab = a.labels[grp[0]]
            if self.width == 1:
                out[g] = lab
            else:
                out[g * self.width + lab] = 1.0
        return out

    def decode(self, yhat) -> BlockAssignment:
        """Threshold (or argmax) one output row; 0.5 maps to label 0."""
        yhat = np.asarray(yhat, dtype=float)
        if yhat.shape != (self.n_outputs,):
            raise ValueError(f"expected {self.n_outputs} outputs, got {yhat.shape}")
        labels = [0] * self.n_blocks
        for b, lab in self.fixed:
            labels[b] = lab
        for g, grp in enumerate(self.groups):
            if self.width == 1:
                lab = int(yhat[g] > 0.5)
            else:
                lab = int(np.argmax(yhat[g * self.width:(g + 1) * self.width]))
            for b in grp:
                labels[b] = lab
        return BlockAssignment(tuple(labels))


def predict_proba(model: MlpModel, features) -> np.ndarray:
    """Sigmoid outputs for raw feature rows, normalized with the model's
    stored statistics."""
    if model.norm is None:
        raise ValueError("model carries no normalization statistics; train it on a Dataset first")
    yhat, _ = forward(model, model.norm.normalize(np.atleast_2d(features)), "eval")
    return yhat


def predict_assignment(model: MlpModel, features, codec: LabelCodec) -> BlockAssignment:
    """Block assignment for one raw feature row."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 1:
        raise ValueError("predict_assignment takes a single feature row")
    return codec.decode(predict_proba(model, features)[0])


# ---------------------------------------------------------------------------
# Persistence: one JSON header line, then little-endian float64 parameters


def save_model(model: MlpModel, path) -> None:
    header = {
        "format": MODEL_MAGIC,
        "version": MODEL_VERSION,
        "dims": list(model.dims),
        "activations": ["relu"] * (len(model.weights) - 1) + ["sigmoid"],
        "norm_mean": None if model.norm is None else model.norm.mean.tolist(),
        "norm_std": None if model.norm is None else model.norm.std.tolist(),
        "meta": model.meta,
    }
    payload = model.flat().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(struct.pack("<Q", len(payload) // 8))
        fh.write(payload)


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line)
        except ValueError as exc:
            raise ValueError(f"{path}: not a model file ({exc})") from None
        if header.get("format") != MODEL_MAGIC or header.get("version") != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported model format")
        (count,) = struct.unpack("<Q", fh.read(8))
        theta = np.frombuffer(fh.read(8 * count), dtype="<f8")
    if theta.size != count:
        raise ValueError(f"{path}: truncated payload")
    dims = header["dims"]
    model = MlpModel([np.zeros((a, b)) for a, b in zip(dims, dims[1:])], [np.zeros(b) for b in dims[1:]],
                     meta=header.get("meta", {}))
    model.set_flat(theta.astype(float))
    model.version = 0
    if header.get("norm_mean") is not None:
        model.norm = NormStats(np.array(header["norm_mean"], dtype=float), np.array(header["norm_std"], dtype=float))
    return model
