"""Subject-independent evaluation: LOSO folds, holdout-database folds,
confusion matrices, the F1/UAR/WAR metric suite, and per-fold training runs.

Headline metrics come from the pooled confusion matrix over all folds
(per-fold metrics are retained in the report); the holdout protocol instead
averages the two folds' metrics, which is how its overall result is defined.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, merge_datasets
from .models import ElrcnModel, ModelConfig
from .nn.training import TrainConfig, fit
from .pipeline import PreparedDataset


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class FoldSplit:
    fold_id: str
    train: tuple[int, ...]
    test: tuple[int, ...]

    def __post_init__(self):
        if set(self.train) & set(self.test):
            raise EvalError(f"fold {self.fold_id!r}: train and test overlap")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray                  # (C, C), rows = true, cols = predicted
    class_names: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        c = len(self.class_names)
        if counts.shape != (c, c):
            raise EvalError(f"confusion matrix shape {counts.shape} does not match {c} classes")
        if (counts < 0).any():
            raise EvalError("confusion matrix counts must be non-negative")
        self.counts = counts

    @classmethod
    def from_predictions(cls, y_true, y_pred, class_names) -> "ConfusionMatrix":
        c = len(class_names)
        counts = np.zeros((c, c), dtype=np.int64)
        for t, p in zip(np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)):
            counts[t, p] += 1
        return cls(counts, tuple(class_names))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def pooled_with(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.class_names != other.class_names:
            raise EvalError("cannot pool confusion matrices over different taxonomies")
        return ConfusionMatrix(self.counts + other.counts, self.class_names)


def compute_metrics(cm: ConfusionMatrix) -> dict[str, float]:
    """WAR (accuracy), UAR (mean recall over present classes), macro and
    micro F1.  Classes with neither true nor predicted samples are excluded
    from the macro mean; UAR skips classes absent from the test set."""
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise EvalError("empty confusion matrix")
    tp = np.diag(counts).astype(np.float64)
    support = counts.sum(axis=1).astype(np.float64)      # true counts per class
    predicted = counts.sum(axis=0).astype(np.float64)

    war = float(tp.sum() / total)

    present = support > 0
    uar = float((tp[present] / support[present]).mean())

    f1s = []
    for c in range(len(cm.class_names)):
        if support[c] == 0 and predicted[c] == 0:
            continue
        denom = 2 * tp[c] + (predicted[c] - tp[c]) + (support[c] - tp[c])
        f1s.append(0.0 if denom == 0 else 2 * tp[c] / denom)
    f1_macro = float(np.mean(f1s)) if f1s else 0.0

    # micro: pooled one-vs-rest TP/FP/FN
    fp = predicted - tp
    fn = support - tp
    micro_denom = 2 * tp.sum() + fp.sum() + fn.sum()
    f1_micro = float(2 * tp.sum() / micro_denom) if micro_denom else 0.0

    return {"war": war, "uar": uar, "f1_macro": f1_macro, "f1_micro": f1_micro}


# ---------------------------------------------------------------------------
# protocol splits
# ---------------------------------------------------------------------------

def _subject_list(ds) -> list[str]:
    if isinstance(ds, Dataset):
        return [s.subject_id for s in ds.samples]
    if isinstance(ds, PreparedDataset):
        return list(ds.subject_ids)
    return list(ds)


def loso_split(ds) -> list[FoldSplit]:
    """One fold per subject; that subject's videos are the test set."""
    subjects = _subject_list(ds)
    unique = sorted(set(subjects))
    if len(unique) < 2:
        raise EvalError("leave-one-subject-out requires at least 2 subjects")
    folds = []
    for subj in unique:
        test = tuple(i for i, s in enumerate(subjects) if s == subj)
        train = tuple(i for i, s in enumerate(subjects) if s != subj)
        folds.append(FoldSplit(fold_id=subj, train=train, test=test))
    return folds


def hde_folds(a: Dataset, b: Dataset) -> tuple[Dataset, list[FoldSplit]]:
    """Two opposing-database folds over the merged dataset: train on one
    database, test on the other, and vice versa."""
    if a.taxonomy.classes != b.taxonomy.classes:
        raise EvalError(
            f"holdout evaluation needs matching taxonomies, got {a.taxonomy.classes} "
            f"vs {b.taxonomy.classes}")
    merged = merge_datasets(a, b, list(a.taxonomy.classes))
    ids_a = tuple(range(len(a)))
    ids_b = tuple(range(len(a), len(merged)))
    db_a = a.samples[0].database_id if a.samples else "a"
    db_b = b.samples[0].database_id if b.samples else "b"
    folds = [
        FoldSplit(fold_id=f"train-{db_a}_test-{db_b}", train=ids_a, test=ids_b),
        FoldSplit(fold_id=f"train-{db_b}_test-{db_a}", train=ids_b, test=ids_a),
    ]
    return merged, folds


# ---------------------------------------------------------------------------
# fold execution and aggregation
# ---------------------------------------------------------------------------

@dataclass
class FoldResult:
    fold_id: str
    confusion: ConfusionMatrix
    metrics: dict[str, float]
    loss_history: list[float]
    video_ids: list[str]
    y_true: list[int]
    y_pred: list[int]


@dataclass
class EvalReport:
    protocol: str
    folds: list[FoldResult]
    pooled: ConfusionMatrix
    metrics: dict[str, float]                 # headline (pooled) metrics
    mean_fold_metrics: dict[str, float]       # arithmetic mean over folds
    config: dict = field(default_factory=dict)


def fold_seed(base_seed: int, fold_index: int) -> int:
    return base_seed * 1009 + fold_index


def run_fold(prep: PreparedDataset, fold: FoldSplit, fold_index: int,
             model_cfg: ModelConfig, train_cfg: TrainConfig,
             class_names: tuple[str, ...]) -> FoldResult:
    """Train a fresh model on the fold's training indices and score its test set."""
    cfg = replace(model_cfg, seed=fold_seed(model_cfg.seed, fold_index))
    tcfg = replace(train_cfg, seed=fold_seed(train_cfg.seed, fold_index))
    model = ElrcnModel(cfg)
    train_idx = np.array(fold.train, dtype=np.intp)
    test_idx = np.array(fold.test, dtype=np.intp)
    result = fit(model, prep.inputs[train_idx], prep.labels[train_idx], tcfg)
    y_pred = model.predict_classes(prep.inputs[test_idx])
    y_true = prep.labels[test_idx]
    cm = ConfusionMatrix.from_predictions(y_true, y_pred, class_names)
    return FoldResult(
        fold_id=fold.fold_id,
        confusion=cm,
        metrics=compute_metrics(cm),
        loss_history=result.loss_history,
        video_ids=[prep.video_ids[i] for i in test_idx],
        y_true=[int(v) for v in y_true],
        y_pred=[int(v) for v in y_pred],
    )


def evaluate_folds(prep: PreparedDataset, folds: list[FoldSplit],
                   model_cfg: ModelConfig, train_cfg: TrainConfig,
                   class_names: tuple[str, ...], protocol: str,
                   jobs: int = 1) -> EvalReport:
    """Run every fold (optionally in parallel) and assemble the report.

    Results are deterministic regardless of scheduling: each fold's seeds
    derive from its position, and folds are reduced in order.
    """
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_fold, prep, fold, k, model_cfg, train_cfg, class_names)
                       for k, fold in enumerate(folds)]
            results = [f.result() for f in futures]
    else:
        results = [run_fold(prep, fold, k, model_cfg, train_cfg, class_names)
                   for k, fold in enumerate(folds)]
    return assemble_report(results, protocol)


def assemble_report(results: list[FoldResult], protocol: str) -> EvalReport:
    pooled = results[0].confusion
    for r in results[1:]:
        pooled = pooled.pooled_with(r.confusion)
    mean_metrics = {
        key: float(np.mean([r.metrics[key] for r in results]))
        for key in results[0].metrics
    }
    if protocol == "hde":
        headline = mean_metrics     # holdout averages the two folds
    else:
        headline = compute_metrics(pooled)
    return EvalReport(protocol=protocol, folds=results, pooled=pooled,
                      metrics=headline, mean_fold_metrics=mean_metrics)


def aggregate_hde(fold1: FoldResult, fold2: FoldResult) -> EvalReport:
    """Overall holdout result: arithmetic mean of the two folds' metrics,
    with the pooled confusion matrix reported alongside."""
    return assemble_report([fold1, fold2], protocol="hde")
