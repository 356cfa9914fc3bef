"""Experiment orchestration: per-seed runs, ablations, PCA embeddings, CSV output."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import theory
from .config import ExperimentConfig
from .data import Dataset, DomainPair, Standardizer
from .losses import AdaptationWeights
from .model import ModelState, clone_model, infer, init_model
from .pipeline import (
    adapt_target,
    evaluate,
    load_checkpoint,
    pretrain_source,
    save_checkpoint,
    select_model,
)

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("cls", "adv_min_pair", "pair_tr", "ent_c", "ent_m", "pseudo")


def fmt(x) -> str:
    """Six significant digits, locale independent."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".6g")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([[fmt(v) for v in row] for row in rows])


def csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([[fmt(v) for v in row] for row in rows])
    return buf.getvalue()


def metrics_header(c: int) -> list[str]:
    return (["seed", "phase", "epoch", "overall_acc_source", "overall_acc_target"]
            + [f"acc_target_class_{i}" for i in range(c)]
            + [f"loss_{name}" for name in LOSS_COLUMNS]
            + ["min_pair_discrepancy", "empirical_disagreement_source",
               "empirical_disagreement_target", "divergence_estimate"])


def prepare_domains(cfg: ExperimentConfig) -> DomainPair:
    """Load both domains; standardization statistics come from the source only."""
    pair = cfg.load_domains()
    if not cfg.data.standardize:
        return pair
    st = Standardizer.fit(pair.source.X)
    return DomainPair(pair.source.with_X(st(pair.source.X)), pair.target.with_X(st(pair.target.X)))


@dataclass
class SeedResult:
    seed: int
    selected_epoch: int = 0
    source_acc: float = 0.0
    source_only_target_acc: float = 0.0
    adapted_target_acc: float = 0.0
    metrics: list[list] = field(default_factory=list)
    selection: list[list] = field(default_factory=list)
    adapt_history: list[dict] = field(default_factory=list)
    model: ModelState | None = None
    heads_unchanged: bool = True


def _metrics_row(seed: int, phase: str, epoch: int, model: ModelState, pair: DomainPair,
                 stats: dict) -> list:
    """Evaluation row; target labels are used here only, never by the training phases."""
    es, et = evaluate(model, pair.source), evaluate(model, pair.target)
    # closest head pair on the data the phase trains on
    min_pair = (es if phase == "pretrain" else et).min_pair_discrepancy
    return ([seed, phase, epoch, es.accuracy, et.accuracy, *et.per_class]
            + [stats.get(name, 0.0) for name in LOSS_COLUMNS]
            + [min_pair, es.disagreement, et.disagreement,
               theory.divergence_estimate(es.head_labels, et.head_labels)])


def pretrain_phase(cfg: ExperimentConfig, seed: int, pair: DomainPair) -> SeedResult:
    res = SeedResult(seed)
    model = init_model(cfg.generator_spec(pair.source.dim), cfg.bank_spec(), seed)

    def on_epoch(epoch, m, stats):
        res.metrics.append(_metrics_row(seed, "pretrain", epoch, m, pair, stats))

    model, record = pretrain_source(model, pair.source, cfg.pretrain_config(seed), on_epoch)
    chosen = select_model(record)
    model.restore(record.snapshots[chosen - 1])
    for e, (acc, score) in enumerate(zip(record.accuracies, record.scores), start=1):
        for j, row in enumerate(acc):
            res.selection.append([seed, e, j, *row, score, int(e == chosen)])
    res.selected_epoch = chosen
    res.source_acc = evaluate(model, pair.source).accuracy
    res.source_only_target_acc = evaluate(model, pair.target).accuracy
    res.model = model
    log.info("seed %d: selected pre-training epoch %d, source-only target acc %.4f",
             seed, chosen, res.source_only_target_acc)
    return res


def adapt_phase(cfg: ExperimentConfig, res: SeedResult, pair: DomainPair,
                weights: AdaptationWeights | None = None) -> SeedResult:
    model = res.model
    heads_before = [p.data.tobytes() for p in model.head_parameters()]

    def on_epoch(epoch, m, stats):
        row = _metrics_row(res.seed, "adapt", epoch, m, pair, stats)
        res.metrics.append(row)
        res.adapt_history.append(dict(stats, target_acc=row[4]))

    # labels never cross into adaptation: only the unlabeled view is passed
    adapt_target(model, pair.target.unlabeled(), cfg.adapt_config(res.seed, weights), on_epoch)
    res.heads_unchanged = heads_before == [p.data.tobytes() for p in model.head_parameters()]
    res.adapted_target_acc = evaluate(model, pair.target).accuracy
    return res


def run_seed(cfg: ExperimentConfig, seed: int, pair: DomainPair | None = None,
             weights: AdaptationWeights | None = None) -> SeedResult:
    pair = pair or prepare_domains(cfg)
    return adapt_phase(cfg, pretrain_phase(cfg, seed, pair), pair, weights)


def _branch(res: SeedResult) -> SeedResult:
    """Copy of a pre-trained result with an independent model, for adapting variants."""
    return SeedResult(res.seed, res.selected_epoch, res.source_acc, res.source_only_target_acc,
                      metrics=list(res.metrics), selection=list(res.selection),
                      model=clone_model(res.model))


# ---------------------------------------------------------------- embedding


def pca_2d(F: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Project rows of F onto their top two principal axes.

    Each axis is signed so its largest-magnitude loading is positive; axes
    with negligible variance project to exactly zero.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[1] < 2:
        raise ValueError(f"need at least 2 feature dimensions, got shape {F.shape}")
    centred = F - F.mean(axis=0)
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    out = np.zeros((F.shape[0], 2))
    for i in range(min(2, vt.shape[0])):
        if s[i] <= rel_tol * max(s[0], 1e-300) or s[i] == 0:
            continue
        axis = vt[i]
        if axis[np.argmax(np.abs(axis))] < 0:
            axis = -axis
        out[:, i] = centred @ axis
    return out


def embed(model: ModelState, source: Dataset, target: Dataset) -> list[list]:
    """Rows (x, y, domain, label, predicted) of a PCA fitted on pooled features."""
    if model.gspec.feature_dim < 2:
        raise ValueError("embedding needs feature_dim >= 2")
    fs, out_s = infer(model, source.X)
    ft, out_t = infer(model, target.X)
    xy = pca_2d(np.vstack([fs, ft]))
    pred = np.concatenate([out_s.arrays().mean(0).argmax(1), out_t.arrays().mean(0).argmax(1)])
    labels = np.concatenate([
        source.y if source.y is not None else np.full(source.n, -1),
        target.y if target.y is not None else np.full(target.n, -1),
    ])
    domains = ["source"] * source.n + ["target"] * target.n
    return [[x, y, d, int(l), int(p)] for (x, y), d, l, p in zip(xy, domains, labels, pred)]


EMBED_HEADER = ["x", "y", "domain", "label", "predicted"]


# ---------------------------------------------------------------- top level


def run(cfg: ExperimentConfig, out_dir: Path) -> list[SeedResult]:
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    pair = prepare_domains(cfg)
    results, embedding = [], []
    for seed in cfg.seeds:
        res = pretrain_phase(cfg, seed, pair)
        save_checkpoint(res.model, ckpt_dir / f"seed{seed}_source.ckpt")
        adapt_phase(cfg, res, pair)
        save_checkpoint(res.model, ckpt_dir / f"seed{seed}_adapted.ckpt")
        embedding += [[seed, *row] for row in embed(res.model, pair.source, pair.target)]
        results.append(res)
        log.info("seed %d: target acc %.4f -> %.4f", seed, res.source_only_target_acc,
                 res.adapted_target_acc)
    c = cfg.c
    write_csv(out_dir / "metrics.csv", metrics_header(c), [r for res in results for r in res.metrics])
    write_csv(out_dir / "selection.csv",
              ["seed", "epoch", "classifier", *[f"acc_class_{i}" for i in range(c)], "score", "selected"],
              [r for res in results for r in res.selection])
    write_csv(out_dir / "embedding.csv", ["seed", *EMBED_HEADER], embedding)
    write_csv(out_dir / "summary.csv",
              ["seed", "selected_epoch", "source_acc", "target_acc_source_only", "target_acc_adapted"],
              [[r.seed, r.selected_epoch, r.source_acc, r.source_only_target_acc, r.adapted_target_acc]
               for r in results])
    return results


ABLATION_HEADER = ["mode", "series", "seed", "target_acc_source_only", "target_acc_adapted"]


def _with_means(mode: str, series_results: dict[str, list[SeedResult]]) -> list[list]:
    rows = []
    for name, rs in series_results.items():
        rows += [[mode, name, r.seed, r.source_only_target_acc, r.adapted_target_acc] for r in rs]
    for name, rs in series_results.items():
        rows.append([mode, name, "mean", float(np.mean([r.source_only_target_acc for r in rs])),
                     float(np.mean([r.adapted_target_acc for r in rs]))])
    return rows


def ablate_bi_vs_many(cfg: ExperimentConfig) -> tuple[list[list], dict[str, list[SeedResult]]]:
    pair = prepare_domains(cfg)
    c = cfg.c
    series = {}
    for k in (2, c):
        name = f"k={k}"
        if name in series:
            continue
        sub = cfg.with_k(k)
        series[name] = [run_seed(sub, seed, pair) for seed in cfg.seeds]
    return _with_means("bi_vs_many", series), series


TRACE_PSEUDO_MASKS = {
    "trace_only": lambda w: AdaptationWeights(w.alpha_t, w.gamma1, w.gamma2, 0.0),
    "pseudo_only": lambda w: AdaptationWeights(0.0, w.gamma1, w.gamma2, w.beta),
    "trace_and_pseudo": lambda w: w,
}


def ablate_trace_vs_pseudo(cfg: ExperimentConfig) -> tuple[list[list], list[list], dict[str, list[SeedResult]]]:
    """Three weight masks adapted from one shared pre-trained model per seed."""
    pair = prepare_domains(cfg)
    base = cfg.adapt_config(0).weights
    series: dict[str, list[SeedResult]] = {name: [] for name in TRACE_PSEUDO_MASKS}
    for seed in cfg.seeds:
        pre = pretrain_phase(cfg, seed, pair)
        for name, mask in TRACE_PSEUDO_MASKS.items():
            series[name].append(adapt_phase(cfg, _branch(pre), pair, mask(base)))
    curves = []
    for name, rs in series.items():
        for e in range(cfg.adapt.epochs):
            curves.append([name, e + 1, float(np.mean([r.adapt_history[e]["target_acc"] for r in rs]))])
    return _with_means("trace_vs_pseudo", series), curves, series


def theory_table(c_max: int, k_max: int, mc_samples: int = 100_000, seed: int = 0) -> str:
    if c_max < 2 or k_max < 2:
        raise ValueError("c_max and k_max must be >= 2")
    rows = []
    for c in range(2, c_max + 1):
        for k in range(2, k_max + 1):
            exact = theory.disagreement_ratio_exact(c, k)
            keff = min(k, c)
            brute = (theory.disagreement_ratio_bruteforce(c, k).fraction
                     if c**keff <= 200_000 else None)
            if k >= 3:
                quotient = exact.fraction / theory.disagreement_ratio_exact(c, k - 1).fraction
                expected = (c - k + 1) / c if k <= c else 1.0
            else:
                quotient = expected = None
            mc = theory.montecarlo_random_bank_ratio(c, k, mc_samples, seed)
            rows.append([c, k, f"{exact.numerator}/{exact.denominator}", exact.value,
                         "" if brute is None else float(brute),
                         "" if quotient is None else float(quotient),
                         "" if expected is None else expected, mc])
    return csv_text(["c", "k", "exact_fraction", "exact", "bruteforce", "recurrence_quotient",
                     "expected_quotient", "montecarlo"], rows)


def embed_checkpoint(checkpoint: Path, source: Dataset, target: Dataset) -> list[list]:
    return embed(load_checkpoint(checkpoint), source, target)
