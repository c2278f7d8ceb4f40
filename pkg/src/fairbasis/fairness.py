"""Confusion-matrix metrics reported globally, per sensitive group and per subgroup.

All rates are fractions in [0, 1]. A rate whose denominator is empty is
``UNDEFINED``. Differences between two groups are taken as the first level
minus the second in sorted level order, so for a 0/1 column the gap reads
"group 0 minus group 1".
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Collection, Mapping, Sequence

import numpy as np

from .errors import DomainError, SchemaError, ShapeError
from .tabular import Dataset, format_number
from .undefined import UNDEFINED, is_undefined, to_jsonable

log = logging.getLogger(__name__)

METRICS = ("acceptance_rate", "tpr", "fpr", "accuracy")
MIN_CELL_ROWS = 30
DIFFERENCE_CONVENTION = "first level minus second level, levels in sorted order"
RATIO_CAVEAT = "ratio of estimated rates; not an unbiased estimator of the ratio"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int
    positive_label: object = 1

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fn + other.fn,
                               self.fp + other.fp, self.tn + other.tn, self.positive_label)


def confusion(y_true, y_pred, positive_label=1) -> ConfusionMatrix:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"y_true has shape {y_true.shape} but y_pred has {y_pred.shape}")
    actual = y_true == positive_label
    predicted = y_pred == positive_label
    tp = int(np.sum(actual & predicted))
    fn = int(np.sum(actual & ~predicted))
    fp = int(np.sum(~actual & predicted))
    tn = int(np.sum(~actual & ~predicted))
    return ConfusionMatrix(tp, fn, fp, tn, positive_label)


def _ratio(num, den):
    return num / den if den > 0 else UNDEFINED


@dataclass(frozen=True)
class MetricSet:
    acceptance_rate: object
    tpr: object
    fpr: object
    accuracy: object
    n: int

    def get(self, metric):
        return getattr(self, metric)

    def to_dict(self) -> dict:
        out = {m: to_jsonable(self.get(m)) for m in METRICS}
        out["n"] = self.n
        return out


def metric_set(cm: ConfusionMatrix) -> MetricSet:
    n = cm.total
    return MetricSet(
        acceptance_rate=_ratio(cm.tp + cm.fp, n),
        tpr=_ratio(cm.tp, cm.tp + cm.fn),
        fpr=_ratio(cm.fp, cm.fp + cm.tn),
        accuracy=_ratio(cm.tp + cm.tn, n),
        n=n,
    )


def _difference(a, b):
    if is_undefined(a) or is_undefined(b):
        return UNDEFINED
    return a - b


def _population_variance(values):
    defined = [v for v in values if not is_undefined(v)]
    if not defined:
        return UNDEFINED
    return float(np.var(defined))


def disparate_impact(p0, p1):
    """``p0 / p1``. Note that the ratio of two estimated rates is a biased estimate of the true ratio."""
    if not p1 > 0:
        return UNDEFINED
    return p0 / p1


def imbalance_ratio(counts) -> object:
    counts = list(counts.values()) if isinstance(counts, Mapping) else list(counts)
    if len(counts) < 2:
        raise DomainError("imbalance ratio needs at least two classes")
    if min(counts) <= 0:
        return UNDEFINED
    return max(counts) / min(counts)


def level_label(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format_number(value)
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


@dataclass
class GroupMetricsReport:
    positive_label: object
    sensitive_columns: list
    global_metrics: MetricSet
    per_group: dict = field(default_factory=dict)
    per_subgroup: dict = field(default_factory=dict)
    differences: dict = field(default_factory=dict)
    across_group_variance: dict = field(default_factory=dict)
    disparate_impact: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "positive_label": self.positive_label if isinstance(self.positive_label, (int, str))
            else level_label(self.positive_label),
            "sensitive_columns": list(self.sensitive_columns),
            "difference_convention": DIFFERENCE_CONVENTION,
            "global": self.global_metrics.to_dict(),
            "per_group": {c: {lvl: ms.to_dict() for lvl, ms in groups.items()}
                          for c, groups in self.per_group.items()},
            "per_subgroup": {"|".join(key): ms.to_dict() for key, ms in self.per_subgroup.items()},
            "differences": {c: {pair: {m: to_jsonable(v) for m, v in gaps.items()}
                                for pair, gaps in pairs.items()}
                            for c, pairs in self.differences.items()},
            "across_group_variance": {c: {m: to_jsonable(v) for m, v in var.items()}
                                      for c, var in self.across_group_variance.items()},
            "disparate_impact": {c: {pair: to_jsonable(v) for pair, v in pairs.items()}
                                 for c, pairs in self.disparate_impact.items()},
            "disparate_impact_caveat": RATIO_CAVEAT,
            "warnings": list(self.warnings),
        }

    def flat(self) -> dict:
        """Every numeric entry keyed by ``(scope, key, metric)``, in a stable order."""
        out = {}
        for m in METRICS:
            out[("global", "all", m)] = self.global_metrics.get(m)
        for c, groups in self.per_group.items():
            for lvl, ms in groups.items():
                for m in METRICS:
                    out[("group", f"{c}={lvl}", m)] = ms.get(m)
        for key, ms in self.per_subgroup.items():
            label = ",".join(f"{c}={lvl}" for c, lvl in zip(self.sensitive_columns, key))
            for m in METRICS:
                out[("subgroup", label, m)] = ms.get(m)
        for c, pairs in self.differences.items():
            for pair, gaps in pairs.items():
                for m, v in gaps.items():
                    out[("difference", f"{c}:{pair}", m)] = v
        for c, var in self.across_group_variance.items():
            for m, v in var.items():
                out[("variance", c, m)] = v
        return out

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=False)
            fh.write("\n")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["scope", "key", "metric", "value"])
            for (scope, key, metric), value in self.flat().items():
                writer.writerow([scope, key, metric,
                                 "undefined" if is_undefined(value) else repr(float(value))])


def _sorted_levels(values) -> list:
    levels = list(dict.fromkeys(values.tolist()))
    try:
        return sorted(levels)
    except TypeError:
        return sorted(levels, key=str)


def report_from_arrays(y_true, y_pred, groups: Mapping[str, Sequence], positive_label=1,
                       min_cell_rows: int = MIN_CELL_ROWS) -> GroupMetricsReport:
    """Group metrics for explicit label arrays and a mapping of sensitive columns."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ShapeError("y_true and y_pred must be 1-d arrays of equal length")
    groups = {c: np.asarray(v) for c, v in groups.items()}
    for c, v in groups.items():
        if v.shape != y_true.shape:
            raise ShapeError(f"sensitive column {c!r} has {v.shape[0]} rows, expected {y_true.shape[0]}")

    report = GroupMetricsReport(positive_label, list(groups),
                                metric_set(confusion(y_true, y_pred, positive_label)))

    def note_small(label, n):
        if n < min_cell_rows:
            msg = f"{label} has {n} rows (< {min_cell_rows}); metrics are unreliable"
            report.warnings.append(msg)
            log.warning(msg)

    level_lists = {}
    for c, values in groups.items():
        levels = _sorted_levels(values)
        level_lists[c] = levels
        per = {}
        for lvl in levels:
            mask = values == lvl
            ms = metric_set(confusion(y_true[mask], y_pred[mask], positive_label))
            per[level_label(lvl)] = ms
            note_small(f"group {c}={level_label(lvl)}", ms.n)
        report.per_group[c] = per
        labels = list(per)
        report.differences[c] = {
            f"{a}-{b}": {m: _difference(per[a].get(m), per[b].get(m)) for m in METRICS}
            for a, b in itertools.combinations(labels, 2)
        }
        report.across_group_variance[c] = {
            m: _population_variance([per[lvl].get(m) for lvl in labels]) for m in METRICS
        }
        report.disparate_impact[c] = {
            f"{a}/{b}": (UNDEFINED if is_undefined(per[a].acceptance_rate) or is_undefined(per[b].acceptance_rate)
                         else disparate_impact(per[a].acceptance_rate, per[b].acceptance_rate))
            for a, b in itertools.combinations(labels, 2)
        }

    if len(groups) > 1:
        names = list(groups)
        for combo in itertools.product(*(level_lists[c] for c in names)):
            mask = np.ones(y_true.shape, dtype=bool)
            for c, lvl in zip(names, combo):
                mask &= groups[c] == lvl
            key = tuple(level_label(lvl) for lvl in combo)
            ms = metric_set(confusion(y_true[mask], y_pred[mask], positive_label))
            report.per_subgroup[key] = ms
            note_small("subgroup " + ",".join(f"{c}={k}" for c, k in zip(names, key)), ms.n)
    return report


def group_report(dataset: Dataset, y_pred, sensitive_columns: Sequence[str] | None = None,
                 positive_label=1, outcome: str | None = None,
                 min_cell_rows: int = MIN_CELL_ROWS) -> GroupMetricsReport:
    """Metrics for the dataset's outcome column against ``y_pred``, split by sensitive columns."""
    if outcome is None:
        outcomes = dataset.names_with_role("outcome")
        if len(outcomes) != 1:
            raise SchemaError(f"expected exactly one outcome column, found {outcomes}")
        outcome = outcomes[0]
    if sensitive_columns is None:
        sensitive_columns = dataset.names_with_role("sensitive")
    groups = {c: dataset[c] for c in sensitive_columns}
    return report_from_arrays(dataset[outcome], y_pred, groups, positive_label, min_cell_rows)


def positive_set_metrics(y_true, y_pred, positive_set: Callable | Collection,
                         groups: Mapping[str, Sequence]) -> GroupMetricsReport:
    """Binary report after mapping each outcome to 1 when it lies in the positive set."""
    if callable(positive_set):
        member = positive_set
    else:
        allowed = set(positive_set)
        member = allowed.__contains__
    to_binary = np.vectorize(lambda v: 1 if member(v) else 0, otypes=[int])
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    bt = to_binary(y_true) if y_true.size else y_true.astype(int)
    bp = to_binary(y_pred) if y_pred.size else y_pred.astype(int)
    return report_from_arrays(bt, bp, groups, positive_label=1)


def class_counts(values) -> Counter:
    return Counter(np.asarray(values).tolist())
