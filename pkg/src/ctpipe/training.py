"""Blockwise transfer-learning harness: splits, schedule, early stopping,
fine-tuning and the per-block sweep.

``finetune`` trains only a chosen block and every block above it; everything
below acts as a frozen feature extractor (parameters and running statistics
untouched).  The optimizer is Adam with a step-decayed learning rate and
patience-based early stopping on the validation loss.
"""

import copy
import enum
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
from sklearn.base import BaseEstimator, ClassifierMixin

from .model import build_base_model
from .preprocess import extract_thorax, resize_normalize, select_slices, wiener_filter
from .segment import segment_scan


class SplitError(ValueError):
    pass


class BlockId(enum.IntEnum):
    """Fine-tuning granularity, ordered bottom (Conv1) to top (FC)."""

    CONV1 = 1
    CONV2 = 2
    CONV3 = 3
    CONV4 = 4
    CONV5 = 5
    FC = 6

    @property
    def label(self):
        return "FC" if self is BlockId.FC else f"Conv{self.value}"

    @property
    def module_name(self):
        return "fc" if self is BlockId.FC else f"conv{self.value}"

    @classmethod
    def from_string(cls, s):
        key = s.strip().upper().replace("-", "").replace("_", "")
        for b in cls:
            if key in (b.name, b.label.upper().replace("-", "")):
                return b
        raise ValueError(f"unknown block '{s}'")


@dataclass
class TrainConfig:
    initial_lr: float = 0.01
    lr_decay_factor: float = 10.0
    lr_decay_period_epochs: int = 2
    early_stop_patience_epochs: int = 3
    batch_size: int = 16
    max_epochs: int = 50
    dropout: float = 0.0
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.dropout <= 0.5):
            raise ValueError("dropout must be in [0.0, 0.5]")
        if not (1e-5 <= self.initial_lr <= 0.01):
            raise ValueError("initial_lr must be in [1e-5, 0.01]")
        if not (0.6 <= self.momentum <= 0.99):
            raise ValueError("momentum must be in [0.6, 0.99]")
        if self.lr_decay_period_epochs < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("periods and sizes must be positive")

    def to_json(self):
        return {
            "initial_lr": self.initial_lr,
            "lr_decay_factor": self.lr_decay_factor,
            "lr_decay_period_epochs": self.lr_decay_period_epochs,
            "early_stop_patience_epochs": self.early_stop_patience_epochs,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "dropout": self.dropout,
            "momentum": self.momentum,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d):
        return cls(**d)


@dataclass
class SplitConfig:
    ratios: tuple = (0.70, 0.15, 0.15)
    stratify_by_label: bool = True
    group_by_patient: bool = True
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError("split ratios must sum to 1")


def _get(item, key):
    if isinstance(item, dict):
        return item[key]
    return getattr(item, key)


def make_splits(dataset, config):
    """Partition a dataset into (train, test, validation).

    Units are single items, or whole patients when ``group_by_patient`` is
    set.  Within each stratum the test and validation sets take
    ``floor(ratio * n)`` units each and training receives the remainder, so
    partitions are disjoint, exhaustive and deterministic per seed.
    """
    items = list(dataset)
    if not items:
        raise SplitError("dataset is empty")
    if config.group_by_patient:
        groups = {}
        for it in items:
            groups.setdefault(_get(it, "patient_id"), []).append(it)
        units = list(groups.values())
    else:
        units = [[it] for it in items]
    if len(units) < 3:
        raise SplitError(f"need at least 3 groups to split, got {len(units)}")

    if config.stratify_by_label:
        strata = {}
        for unit in units:
            strata.setdefault(_get(unit[0], "label"), []).append(unit)
    else:
        strata = {None: units}

    rng = np.random.default_rng(config.seed)
    _, r_test, r_val = config.ratios
    train, test, val = [], [], []
    for label in sorted(strata, key=lambda x: str(x)):
        stratum = strata[label]
        order = rng.permutation(len(stratum))
        n = len(stratum)
        n_test = math.floor(r_test * n)
        n_val = math.floor(r_val * n)
        n_train = n - n_test - n_val
        for pos, idx in enumerate(order):
            unit = stratum[idx]
            if pos < n_train:
                train.extend(unit)
            elif pos < n_train + n_test:
                test.extend(unit)
            else:
                val.extend(unit)
    return train, test, val


def lr_at(epoch, config):
    """Step-decayed learning rate: the initial value divided by
    ``decay_factor`` once per ``lr_decay_period_epochs`` (0-indexed epochs)."""
    if epoch < 0:
        raise ValueError("epoch must be nonnegative")
    steps = epoch // config.lr_decay_period_epochs
    return config.initial_lr / config.lr_decay_factor**steps


def trainable_set(block):
    """The chosen block plus every block above it; FC is always included."""
    block = BlockId(block)
    return frozenset(b for b in BlockId if b >= block)


def should_stop(val_losses, patience=3):
    """True when the (first) best validation loss is ``patience`` or more
    epochs old; ties do not count as improvement."""
    if not val_losses:
        raise ValueError("val_losses is empty")
    best_idx = int(np.argmin(val_losses))
    return (len(val_losses) - 1 - best_idx) >= patience


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float

    def to_json(self):
        return {
            "epoch": self.epoch,
            "lr": self.lr,
            "train_loss": self.train_loss,
            "train_accuracy": self.train_accuracy,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
        }


def _check_batch(X, name="X"):
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 4 or X.shape[1:] != (3, 224, 224):
        raise ValueError(f"{name} must have shape (n, 3, 224, 224), got {X.shape}")
    return X


def _apply_freeze(model, block):
    trainable = {b.module_name for b in trainable_set(block)}
    for name, modules in model.block_modules().items():
        requires = name in trainable
        for m in modules:
            for p in m.parameters():
                p.requires_grad_(requires)
    return trainable


def _set_train_mode(model, trainable_names):
    model.train()
    for name, modules in model.block_modules().items():
        if name not in trainable_names:
            for m in modules:
                m.eval()


@torch.no_grad()
def _evaluate(model, X, y, batch_size, loss_fn):
    model.eval()
    total_loss = 0.0
    preds = []
    for start in range(0, len(X), batch_size):
        xb = torch.from_numpy(X[start : start + batch_size])
        yb = torch.from_numpy(y[start : start + batch_size])
        logits = model(xb)
        total_loss += float(loss_fn(logits, yb)) * len(xb)
        preds.append(logits.argmax(dim=1).numpy())
    preds = np.concatenate(preds)
    return total_loss / len(X), float((preds == y).mean()), preds


def binary_metrics(y_true, y_pred):
    """Accuracy/precision/recall/F1 with class 1 as the positive class."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_pred == 1) & (y_true == 1)))
    fp = int(np.sum((y_pred == 1) & (y_true == 0)))
    fn = int(np.sum((y_pred == 0) & (y_true == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": float((y_true == y_pred).mean()),
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }


def finetune(base_model, block, train_data, val_data, config):
    """Fine-tune ``block`` and everything above it on preprocessed crops.

    ``train_data``/``val_data`` are (X, y) pairs of normalized (n, 3, 224, 224)
    batches and integer labels.  Returns the trained model and the per-epoch
    metric history.
    """
    X_train, y_train = train_data
    X_val, y_val = val_data
    X_train = _check_batch(X_train, "train X")
    X_val = _check_batch(X_val, "val X")
    if len(X_train) == 0:
        raise ValueError("empty training set")
    if len(X_val) == 0:
        raise ValueError("empty validation set (early stopping needs one)")
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)

    torch.manual_seed(config.seed)
    model = base_model
    if model.fc.out_features != 2:
        model.replace_fc(2)
    trainable_names = _apply_freeze(model, block)
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=config.initial_lr, betas=(config.momentum, 0.999))
    loss_fn = nn.CrossEntropyLoss()
    rng = np.random.default_rng(config.seed)

    history = []
    for epoch in range(config.max_epochs):
        lr = lr_at(epoch, config)
        for group in optimizer.param_groups:
            group["lr"] = lr
        _set_train_mode(model, trainable_names)
        order = rng.permutation(len(X_train))
        running_loss, running_hits = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = torch.from_numpy(X_train[idx])
            yb = torch.from_numpy(y_train[idx])
            optimizer.zero_grad(set_to_none=True)
            logits = model(xb)
            loss = loss_fn(logits, yb)
            loss.backward()
            optimizer.step()
            running_loss += float(loss.detach()) * len(idx)
            running_hits += int((logits.argmax(dim=1) == yb).sum())
        val_loss, val_acc, _ = _evaluate(model, X_val, y_val, config.batch_size, loss_fn)
        history.append(
            EpochMetrics(
                epoch=epoch,
                lr=lr,
                train_loss=running_loss / len(X_train),
                train_accuracy=running_hits / len(X_train),
                val_loss=val_loss,
                val_accuracy=val_acc,
            )
        )
        if should_stop([h.val_loss for h in history], config.early_stop_patience_epochs):
            break
    model.eval()
    return model, history


def blockwise_sweep(base_model, data, config):
    """Fine-tune once per block, top (FC) to bottom (Conv1).

    ``data`` is ((X_train, y_train), (X_val, y_val), (X_test, y_test)); each
    run starts from a fresh copy of the base model.  Returns one metrics row
    per block, in percent, in Table order.
    """
    train_data, val_data, test_data = data
    rows = []
    for block in sorted(BlockId, reverse=True):
        model = copy.deepcopy(base_model)
        model, history = finetune(model, block, train_data, val_data, config)
        X_test = _check_batch(test_data[0], "test X")
        y_test = np.asarray(test_data[1], dtype=np.int64)
        _, _, preds = _evaluate(model, X_test, y_test, config.batch_size, nn.CrossEntropyLoss())
        metrics = binary_metrics(y_test, preds)
        rows.append(
            {
                "block": block.label,
                "accuracy": 100.0 * metrics["accuracy"],
                "precision": 100.0 * metrics["precision"],
                "recall": 100.0 * metrics["recall"],
                "f1": 100.0 * metrics["f1"],
                "epochs": len(history),
            }
        )
    return rows


def format_sweep_table(rows):
    lines = [f"{'Block/Layer':<12}{'Accuracy':>10}{'Precision':>11}{'Recall':>9}{'F1 Score':>10}"]
    for row in rows:
        lines.append(
            f"{row['block']:<12}{row['accuracy']:>10.2f}{row['precision']:>11.2f}"
            f"{row['recall']:>9.2f}{row['f1']:>10.2f}"
        )
    return "\n".join(lines)


@dataclass
class HPOSpace:
    dropout: tuple = (0.0, 0.5)
    learning_rate: tuple = (1e-5, 1e-2)  # sampled log-uniform
    momentum: tuple = (0.6, 0.99)


def hpo_sample(space=None, seed=0):
    """Draw a training configuration from the hyperparameter search space."""
    space = space or HPOSpace()
    rng = np.random.default_rng(seed)
    dropout = float(rng.uniform(*space.dropout))
    log_lo, log_hi = math.log10(space.learning_rate[0]), math.log10(space.learning_rate[1])
    lr = float(10.0 ** rng.uniform(log_lo, log_hi))
    momentum = float(rng.uniform(*space.momentum))
    return TrainConfig(initial_lr=lr, dropout=dropout, momentum=momentum, seed=seed)


def build_training_set(scans, preproc_config, spec, seed=0, negatives_per_slice=2):
    """Turn labeled scans into normalized classifier crops.

    Positive scans contribute their segmented ROIs (masked crops, label 1);
    healthy scans contribute lung-field patches (label 0).  CAP and unknown
    labels are ingested upstream but excluded from training.
    """
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for scan in scans:
        if scan.label == "covid_positive":
            for seg in segment_scan(scan, preproc_config, spec, seed=None):
                masked = seg.crop * seg.mask_crop()
                images.append(resize_normalize(masked, preproc_config))
                labels.append(1)
        elif scan.label == "healthy":
            for sl in select_slices(scan, 2, seed=None):
                filtered = wiener_filter(sl.pixels, preproc_config.wiener_window)
                thorax = extract_thorax(filtered)
                crop = thorax.cropped
                ch, cw = crop.shape
                for _ in range(negatives_per_slice):
                    ph = int(rng.integers(max(8, ch // 6), max(9, ch // 3)))
                    pw = int(rng.integers(max(8, cw // 6), max(9, cw // 3)))
                    ph, pw = min(ph, ch), min(pw, cw)
                    r = int(rng.integers(0, ch - ph + 1))
                    c = int(rng.integers(0, cw - pw + 1))
                    patch = crop[r : r + ph, c : c + pw]
                    images.append(resize_normalize(patch, preproc_config))
                    labels.append(0)
    if not images:
        return np.zeros((0, 3, 224, 224), dtype=np.float32), np.zeros((0,), dtype=np.int64)
    return np.stack(images), np.asarray(labels, dtype=np.int64)


class BlockwiseClassifier(BaseEstimator, ClassifierMixin):
    """sklearn-style front end over the fine-tuning harness.

    ``fit`` builds (or copies) the base network, holds out a validation
    fraction and runs ``finetune`` on the requested block.
    """

    def __init__(self, block="FC", config=None, width=16, blocks_per_stage=(1, 1, 1, 1),
                 base_model=None, val_fraction=0.15):
        self.block = block
        self.config = config
        self.width = width
        self.blocks_per_stage = blocks_per_stage
        self.base_model = base_model
        self.val_fraction = val_fraction

    def fit(self, X, y):
        config = self.config or TrainConfig()
        X = _check_batch(X)
        y = np.asarray(y, dtype=np.int64)
        block = BlockId.from_string(self.block) if isinstance(self.block, str) else BlockId(self.block)
        if self.base_model is not None:
            model = copy.deepcopy(self.base_model)
        else:
            model = build_base_model(
                width=self.width,
                blocks_per_stage=self.blocks_per_stage,
                dropout=config.dropout,
                seed=config.seed,
            )
        rng = np.random.default_rng(config.seed)
        order = rng.permutation(len(X))
        n_val = max(1, int(round(self.val_fraction * len(X))))
        val_idx, train_idx = order[:n_val], order[n_val:]
        self.model_, self.history_ = finetune(
            model, block, (X[train_idx], y[train_idx]), (X[val_idx], y[val_idx]), config
        )
        self.classes_ = np.array([0, 1], dtype=np.int64)
        return self

    def predict_proba(self, X):
        X = _check_batch(X)
        self.model_.eval()
        probs = []
        with torch.no_grad():
            for start in range(0, len(X), 32):
                logits = self.model_(torch.from_numpy(X[start : start + 32]))
                probs.append(torch.softmax(logits, dim=1).numpy())
        return np.concatenate(probs)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)
