"""Source pre-training, epoch selection, pseudo-labelling, source-free adaptation.

Pre-training alternates, on every source mini-batch, a cross-entropy step on
the whole model with a worst-pair separation loop: the generator is frozen and
the closest pair of heads is pushed apart until their batch-mean L1 distance
reaches ``tau`` (or ``inner_cap`` iterations pass).

Adaptation freezes every head and trains the generator alone on unlabeled
target data.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import losses
from .data import Dataset, UnlabeledView, batches
from .model import (
    ClassifierBankSpec,
    GeneratorSpec,
    ModelState,
    ensemble_predict,
    forward_bank,
    forward_features,
    infer,
    init_model,
)
from .numerics import OptimizerConfig, backward, lr_at, no_grad, sgd_step, zero_grad
from .theory import empirical_disagreement

log = logging.getLogger(__name__)

__all__ = [
    "PretrainConfig",
    "AdaptConfig",
    "SelectionRecord",
    "NonFiniteLossError",
    "pretrain_source",
    "selection_score",
    "select_model",
    "compute_pseudo_labels",
    "adapt_target",
    "EvalResult",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
    "CheckpointVersionError",
    "CheckpointShapeError",
    "CheckpointTruncatedError",
    "PRETRAIN_PRESETS",
]


class NonFiniteLossError(ArithmeticError):
    def __init__(self, phase: str, epoch: int, batch: int, loss_name: str, value: float):
        super().__init__(f"{phase}: non-finite {loss_name} ({value}) at epoch {epoch}, batch {batch}")
        self.phase, self.epoch, self.batch, self.loss_name = phase, epoch, batch, loss_name


def _finite(value: float, phase: str, epoch: int, batch: int, name: str) -> float:
    if not math.isfinite(value):
        raise NonFiniteLossError(phase, epoch, batch, name, value)
    return value


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 20
    tau: float = 0.1
    alpha_s: float = 0.3
    inner_cap: int = 20
    batch_size: int = 32
    optimizer: OptimizerConfig = OptimizerConfig(eta0=0.02)
    shuffle_seed: int = 0

    def __post_init__(self):
        if not 0 < self.tau < 2:
            raise ValueError(f"tau must lie in (0, 2), got {self.tau}")
        if self.inner_cap < 1:
            raise ValueError("inner_cap must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.alpha_s < 0:
            raise ValueError("alpha_s must be >= 0")


# tau / alpha_s used for the two large benchmarks
PRETRAIN_PRESETS = {
    "visda": {"tau": 0.4, "alpha_s": 0.3},
    "office_home": {"tau": 0.05, "alpha_s": 1.0},
}


@dataclass(frozen=True)
class AdaptConfig:
    epochs: int = 30
    weights: losses.AdaptationWeights = losses.AdaptationWeights()
    pseudo_start_epoch: int = 1
    pseudo_interval: int = 2
    batch_size: int = 32
    optimizer: OptimizerConfig = OptimizerConfig(eta0=0.01)
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.pseudo_interval < 1:
            raise ValueError("pseudo_interval must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class SelectionRecord:
    """Per-epoch (k x c) source training accuracies and the parameters at that epoch."""

    accuracies: list[np.ndarray] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    snapshots: list[list[np.ndarray]] = field(default_factory=list, repr=False)

    def append(self, acc: np.ndarray, snapshot: list[np.ndarray] | None = None) -> None:
        acc = np.asarray(acc, dtype=np.float64)
        if acc.ndim != 2 or np.any(acc < 0) or np.any(acc > 1):
            raise ValueError("accuracy matrix must be (k, c) with entries in [0, 1]")
        self.accuracies.append(acc)
        self.scores.append(selection_score(acc))
        self.snapshots.append(snapshot if snapshot is not None else [])

    def __len__(self) -> int:
        return len(self.accuracies)


def per_head_class_accuracy(model: ModelState, ds: Dataset) -> np.ndarray:
    _, out = infer(model, ds.X)
    preds = out.arrays().argmax(axis=2)  # (k, n)
    acc = np.zeros((model.bspec.k, ds.c))
    for cls in range(ds.c):
        mask = ds.y == cls
        if mask.any():
            acc[:, cls] = (preds[:, mask] == cls).mean(axis=1)
        else:
            acc[:, cls] = 1.0
    return acc


def pretrain_source(model: ModelState, source: Dataset, cfg: PretrainConfig,
                    on_epoch: Callable[[int, ModelState, dict], None] | None = None
                    ) -> tuple[ModelState, SelectionRecord]:
    if source.y is None:
        raise ValueError("pre-training needs a labeled source dataset")
    n_batches = len(batches(source, cfg.batch_size, cfg.shuffle_seed, 0))
    opt = dataclasses.replace(cfg.optimizer, max_iter=cfg.epochs * n_batches)
    params = model.parameters()
    record = SelectionRecord()
    it = 0
    for epoch in range(1, cfg.epochs + 1):
        cls_sum = adv_sum = 0.0
        capped = 0
        order = batches(source, cfg.batch_size, cfg.shuffle_seed, epoch)
        for b, idx in enumerate(order):
            lr = lr_at(it, opt)
            X, y = source.X[idx], source.y[idx]

            zero_grad(params)
            loss = losses.classification_loss(forward_bank(model, forward_features(model, X)), y)
            cls_sum += _finite(loss.item(), "pretrain", epoch, b, "cls")
            backward(loss)
            sgd_step(params, lr, opt)

            with no_grad():
                feats = forward_features(model, X)
            for inner in range(cfg.inner_cap):
                out = forward_bank(model, feats)
                report = losses.pair_discrepancies(out)
                if report.minimum >= cfg.tau or cfg.alpha_s == 0:
                    break
                i, j = report.argmin
                pair = model.head_parameters(i) + model.head_parameters(j)
                zero_grad(pair)
                adv = losses.adversarial_separation_loss(out, cfg.alpha_s)
                _finite(adv.item(), "pretrain", epoch, b, "adv_min_pair")
                backward(-adv)
                sgd_step(pair, lr, opt)
            else:
                capped += 1
                with no_grad():
                    report = losses.pair_discrepancies(forward_bank(model, feats))
            adv_sum += cfg.alpha_s * report.minimum
            it += 1
        if capped:
            log.debug("epoch %d: inner loop hit the cap on %d/%d batches", epoch, capped, len(order))
        record.append(per_head_class_accuracy(model, source), model.snapshot())
        if on_epoch is not None:
            on_epoch(epoch, model, {"cls": cls_sum / len(order), "adv_min_pair": adv_sum / len(order),
                                    "inner_capped": capped})
    return model, record


def selection_score(acc: np.ndarray) -> float:
    """Score a (k x c) accuracy matrix: prefer 1-2 boundary heads per category.

    Each perfect (classifier, category) cell scores 1. A category where one or
    two heads (but not all) fall short of 100% earns a bonus of 3, so it
    outranks a category where every head is perfect. A category with more than
    two imperfect heads costs k * c, which outweighs any bonus.
    """
    acc = np.asarray(acc)
    k, c = acc.shape
    perfect = acc >= 1.0
    score = float(perfect.sum())
    for cat in range(c):
        n_imperfect = k - int(perfect[:, cat].sum())
        if 1 <= n_imperfect <= min(2, k - 1):
            score += 3
        elif n_imperfect > 2:
            score -= k * c
    return score


def select_model(record: SelectionRecord) -> int:
    """1-based epoch with the highest score; ties go to the later epoch."""
    if not len(record):
        raise ValueError("no epochs recorded")
    best = 0
    for e, s in enumerate(record.scores):
        if s >= record.scores[best]:
            best = e
    return best + 1


def _unit_rows(F: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    return F / np.where(norms > 0, norms, 1.0)


def compute_pseudo_labels(model: ModelState, target_X) -> np.ndarray:
    """Nearest-centroid labels under cosine distance, with one hard-label refinement.

    Centroids start as ensemble-probability-weighted means of the unit-normalized
    generator features.
    """
    X = target_X.X if isinstance(target_X, UnlabeledView) else np.asarray(target_X)
    feats, out = infer(model, X)
    pbar = out.arrays().mean(axis=0)
    if feats.shape[0] == 1:
        return np.argmax(pbar, axis=1)
    F = _unit_rows(feats)
    mass = pbar.sum(axis=0)
    centroids = (pbar.T @ F) / np.where(mass > 0, mass, 1.0)[:, None]
    for cls in np.flatnonzero(mass <= 1e-12):
        log.info("pseudo-labels: class %d has no soft mass; seeding from its top sample", cls)
        centroids[cls] = F[np.argmax(pbar[:, cls])]
    labels = np.argmax(F @ _unit_rows(centroids).T, axis=1)

    hard = centroids.copy()
    for cls in range(pbar.shape[1]):
        members = labels == cls
        if members.any():
            hard[cls] = F[members].mean(axis=0)
    return np.argmax(F @ _unit_rows(hard).T, axis=1)


def adapt_target(model: ModelState, target: UnlabeledView | np.ndarray, cfg: AdaptConfig,
                 on_epoch: Callable[[int, ModelState, dict], None] | None = None) -> ModelState:
    """Train the generator on unlabeled target data; heads stay frozen.

    Only an :class:`UnlabeledView` or a bare feature array is accepted, so no
    labels can reach this function.
    """
    if isinstance(target, Dataset):
        raise TypeError("adapt_target takes unlabeled target data; pass dataset.unlabeled()")
    X = target.X if isinstance(target, UnlabeledView) else np.asarray(target, dtype=np.float64)
    n = X.shape[0]
    w = cfg.weights
    gparams = model.generator_parameters()
    n_batches = len(batches(n, cfg.batch_size, cfg.shuffle_seed, 0))
    opt = dataclasses.replace(cfg.optimizer, max_iter=cfg.epochs * n_batches)
    pseudo = None
    it = 0
    for epoch in range(1, cfg.epochs + 1):
        use_pseudo = w.beta > 0 and epoch >= cfg.pseudo_start_epoch
        if use_pseudo and (epoch - cfg.pseudo_start_epoch) % cfg.pseudo_interval == 0:
            pseudo = compute_pseudo_labels(model, X)
        sums = {"pair_tr": 0.0, "ent_c": 0.0, "ent_m": 0.0, "pseudo": 0.0, "total": 0.0}
        order = batches(n, cfg.batch_size, cfg.shuffle_seed, epoch)
        for b, idx in enumerate(order):
            zero_grad(gparams)
            out = forward_bank(model, forward_features(model, X[idx]))
            terms = losses.adaptation_terms(out, pseudo[idx] if use_pseudo else None)
            total = losses.combine_terms(terms, w)
            for name, t in terms.items():
                sums[name] += _finite(t.item(), "adapt", epoch, b, name)
            sums["total"] += _finite(total.item(), "adapt", epoch, b, "total")
            if total.requires_grad:
                backward(total)
                sgd_step(gparams, lr_at(it, opt), opt)
            it += 1
        if on_epoch is not None:
            on_epoch(epoch, model, {k: v / len(order) for k, v in sums.items()})
    return model


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    per_class: np.ndarray
    disagreement: float
    head_labels: np.ndarray = field(repr=False)
    min_pair_discrepancy: float = 0.0


def evaluate(model: ModelState, ds: Dataset) -> EvalResult:
    if ds.y is None:
        raise ValueError("evaluate needs a labeled dataset")
    _, out = infer(model, ds.X)
    pred, _ = ensemble_predict(out)
    per_class = np.array([
        float((pred[ds.y == cls] == cls).mean()) if np.any(ds.y == cls) else 0.0
        for cls in range(ds.c)
    ])
    head_labels = out.arrays().argmax(axis=2).T  # (n, k)
    return EvalResult(
        accuracy=float((pred == ds.y).mean()),
        per_class=per_class,
        disagreement=empirical_disagreement(head_labels),
        head_labels=head_labels,
        min_pair_discrepancy=losses.pair_discrepancies(out).minimum,
    )


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_MAGIC = "DAMC-CHECKPOINT"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


def save_checkpoint(model: ModelState, path) -> None:
    """Text manifest, an ``end`` line, then little-endian float64 payloads in manifest order."""
    lines = [CHECKPOINT_MAGIC, f"version {CHECKPOINT_VERSION}",
             "spec " + json.dumps(model.spec_dict(), sort_keys=True)]
    named = model.named_parameters()
    lines += [f"param {name} {p.rows} {p.cols}" for name, p in named]
    lines.append("end")
    payload = b"".join(p.data.astype("<f8").tobytes() for _, p in named)
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8") + payload)


def load_checkpoint(path) -> ModelState:
    raw = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if cut < 0:
        raise CheckpointTruncatedError(f"{path}: manifest has no end line")
    header = raw[:cut].decode("utf-8").split("\n")
    payload = raw[cut + len(marker):]
    if not header or header[0] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if len(header) < 2 or header[1] != f"version {CHECKPOINT_VERSION}":
        raise CheckpointVersionError(f"{path}: unsupported version line {header[1:2]!r}")
    try:
        spec = json.loads(header[2].removeprefix("spec "))
        gspec = GeneratorSpec(**spec["generator"])
        bspec = ClassifierBankSpec(**spec["bank"])
        model = init_model(gspec, bspec, int(spec["seed"]))
    except (IndexError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed spec line") from exc

    entries = header[3:]
    named = model.named_parameters()
    if len(entries) != len(named):
        raise CheckpointShapeError(f"{path}: {len(entries)} parameters listed, model has {len(named)}")
    offset = 0
    for line, (name, p) in zip(entries, named):
        parts = line.split()
        if len(parts) != 4 or parts[0] != "param" or parts[1] != name:
            raise CheckpointShapeError(f"{path}: unexpected manifest line {line!r}, wanted {name}")
        shape = (int(parts[2]), int(parts[3]))
        if shape != p.shape:
            raise CheckpointShapeError(f"{path}: {name} declared {shape}, spec implies {p.shape}")
        nbytes = 8 * p.data.size
        if offset + nbytes > len(payload):
            raise CheckpointTruncatedError(f"{path}: payload ends inside {name}")
        p.data[...] = np.frombuffer(payload, dtype="<f8", count=p.data.size, offset=offset).reshape(shape)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointShapeError(f"{path}: {len(payload) - offset} trailing payload bytes")
    return model
