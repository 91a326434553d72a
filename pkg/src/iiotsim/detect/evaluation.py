"""Stratified cross-validation, confusion-matrix metrics and report tables."""

from dataclasses import dataclass, field

import numpy as np

from .estimators import (DecisionTreeClassifier, GaussianNBClassifier,
                         KNeighborsClassifier, LogisticRegressionOvR,
                         RandomForestClassifier, check_X_y)

MODEL_KINDS = ("DT", "RF", "NB", "LR", "KNN")


@dataclass
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def build(self):
        if self.kind == "DT":
            return DecisionTreeClassifier(**self.params)
        if self.kind == "RF":
            return RandomForestClassifier(**self.params)
        if self.kind == "NB":
            return GaussianNBClassifier(**self.params)
        if self.kind == "LR":
            return LogisticRegressionOvR(**self.params)
        if self.kind == "KNN":
            return KNeighborsClassifier(**self.params)
        raise ValueError(f"unknown model kind {self.kind!r}")


DEFAULT_SPECS = (ModelSpec("DT"), ModelSpec("RF"), ModelSpec("NB"),
                 ModelSpec("LR"), ModelSpec("KNN"))


class MinMaxScaler:
    """Per-feature min-max; fitted on training folds only."""

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        self.min_ = X.min(axis=0)
        span = X.max(axis=0) - self.min_
        span[span == 0.0] = 1.0
        self.span_ = span
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.min_) / self.span_

    def fit_transform(self, X):
        return self.fit(X).transform(X)


def stratified_kfold(y, k: int, seed: int = 0) -> tuple:
    """-> (folds, warnings): per-class shuffled round-robin assignment.

    Every row validates exactly once; classes with fewer than k rows degrade
    stratification and are reported in warnings.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(y), dtype=np.int64)
    warnings = []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            warnings.append(f"class {cls!r} has {len(idx)} rows for {k} folds")
        idx = idx[rng.permutation(len(idx))]
        assignment[idx] = np.arange(len(idx)) % k
    folds = []
    for f in range(k):
        val = np.flatnonzero(assignment == f)
        train = np.flatnonzero(assignment != f)
        folds.append((train, val))
    return folds, warnings


def confusion_matrix(y_true, y_pred, labels) -> np.ndarray:
    labels = list(labels)
    index = {l: i for i, l in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[index[t], index[p]] += 1
    return cm


def metrics_from_confusion(cm, labels) -> dict:
    """Accuracy, support-weighted P/R/F and per-class detection rates.

    Per-class recall is the detection rate; precision for a class nobody was
    assigned to is defined as 0 and noted.
    """
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    labels = list(labels)
    accuracy = np.trace(cm) / total
    per_class = {}
    notes = []
    weighted_p = weighted_r = weighted_f = 0.0
    for i, label in enumerate(labels):
        tp = cm[i, i]
        support = cm[i, :].sum()
        predicted = cm[:, i].sum()
        recall = tp / support if support else 0.0
        if predicted:
            precision = tp / predicted
        else:
            precision = 0.0
            notes.append(f"no predictions for class {label!r}; precision=0")
        f_measure = (2 * precision * recall / (precision + recall)
                     if precision + recall else 0.0)
        per_class[label] = {"precision": precision, "recall": recall,
                            "f_measure": f_measure, "support": int(support)}
        w = support / total
        weighted_p += w * precision
        weighted_r += w * recall
        weighted_f += w * f_measure
    return {"accuracy": accuracy, "precision": weighted_p,
            "recall": weighted_r, "f_measure": weighted_f,
            "per_class": per_class, "notes": notes}


@dataclass
class CrossValResult:
    spec: ModelSpec
    labels: list
    fold_matrices: list
    confusion: np.ndarray
    metrics: dict
    warnings: list


def cross_validate(spec: ModelSpec, X, y, k: int = 10, seed: int = 0,
                   scale: bool = True) -> CrossValResult:
    """Stratified k-fold; per-fold confusion matrices are summed and the
    aggregate metrics come from the summed matrix. Scaling parameters are
    fitted on each training fold only."""
    X, y = check_X_y(X, y)
    labels = [l for l in np.unique(y)]
    folds, warnings = stratified_kfold(y, k, seed)
    fold_matrices = []
    summed = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for train, val in folds:
        X_tr, X_va = X[train], X[val]
        if scale:
            scaler = MinMaxScaler().fit(X_tr)
            X_tr = scaler.transform(X_tr)
            X_va = scaler.transform(X_va)
        model = spec.build()
        model.fit(X_tr, y[train])
        pred = model.predict(X_va)
        cm = confusion_matrix(y[val], pred, labels)
        fold_matrices.append(cm)
        summed += cm
    return CrossValResult(spec, labels, fold_matrices, summed,
                          metrics_from_confusion(summed, labels), warnings)


def detection_rates(result: CrossValResult, attack_labels) -> dict:
    """Per-attack-class recall (the detection rate) from the summed matrix."""
    rates = {}
    for label in attack_labels:
        if label in result.metrics["per_class"]:
            rates[label] = result.metrics["per_class"][label]["recall"]
    return rates


def format_metrics_table(results) -> str:
    lines = [f"{'Approach':<10}{'ACU (%)':>9}{'P (%)':>9}{'R (%)':>9}"
             f"{'F-M (%)':>9}"]
    for r in results:
        m = r.metrics
        lines.append(f"{r.spec.kind:<10}"
                     f"{100 * m['accuracy']:>9.1f}"
                     f"{100 * m['precision']:>9.1f}"
                     f"{100 * m['recall']:>9.1f}"
                     f"{100 * m['f_measure']:>9.1f}")
    return "\n".join(lines)


def format_detection_table(results, attack_labels) -> str:
    head = f"{'Approach':<10}" + "".join(f"{a:>18}" for a in attack_labels)
    lines = [head]
    for r in results:
        rates = detection_rates(r, attack_labels)
        row = f"{r.spec.kind:<10}"
        for a in attack_labels:
            row += f"{100 * rates.get(a, 0.0):>18.1f}"
        lines.append(row)
    return "\n".join(lines)
