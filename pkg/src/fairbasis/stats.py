"""Confidence intervals for replicate means and bootstrap percentile intervals."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import t as student_t

from .errors import DomainError, InsufficientData, SchemaError
from .numerics import RandomStream, std_normal_quantile
from .undefined import UNDEFINED, is_undefined, to_jsonable

T_MAX_N = 30


@dataclass(frozen=True)
class IntervalEstimate:
    mean: float
    half_width: object
    level: float
    method: str
    n: int
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        if self.lower is None and not is_undefined(self.half_width):
            object.__setattr__(self, "lower", self.mean - self.half_width)
            object.__setattr__(self, "upper", self.mean + self.half_width)

    def format(self, scale: float = 1.0, decimals: int = 2) -> str:
        if is_undefined(self.mean):
            return "undefined"
        mean = f"{self.mean * scale:.{decimals}f}"
        if is_undefined(self.half_width):
            return mean
        return f"{mean}±{self.half_width * scale:.{decimals}f}"

    def to_dict(self) -> dict:
        return {
            "mean": to_jsonable(self.mean),
            "half_width": to_jsonable(self.half_width),
            "lower": to_jsonable(self.lower) if self.lower is not None else None,
            "upper": to_jsonable(self.upper) if self.upper is not None else None,
            "level": self.level,
            "method": self.method,
            "n": self.n,
        }


def _check_level(level):
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie strictly between 0 and 1")


def mean_ci(values, level: float = 0.95) -> IntervalEstimate:
    """``mean ± q * sd / sqrt(n)`` with the unbiased sd.

    ``q`` is the Student-t quantile with ``n - 1`` degrees of freedom for
    ``n <= 30`` and the standard normal quantile above that.
    """
    _check_level(level)
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise InsufficientData(f"a confidence interval needs at least 2 values, got {n}")
    mean = float(np.mean(x))
    # constant input has exactly zero spread; np.std can leave rounding residue
    sd = 0.0 if np.all(x == x[0]) else float(np.std(x, ddof=1))
    upper_p = 0.5 + level / 2
    if n <= T_MAX_N:
        q, method = float(student_t.ppf(upper_p, n - 1)), "student_t"
    else:
        q, method = std_normal_quantile(upper_p), "normal"
    return IntervalEstimate(mean, q * sd / math.sqrt(n), level, method, n)


def bootstrap_ci(values, statistic: Callable = np.mean, resamples: int = 1000, level: float = 0.95,
                 stream: RandomStream | None = None) -> IntervalEstimate:
    """Percentile bootstrap interval for ``statistic``; deterministic for a given stream.

    ``mean`` is the statistic on the original sample and ``half_width`` half
    the width of the (possibly asymmetric) percentile interval.
    """
    _check_level(level)
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise InsufficientData(f"bootstrap needs at least 2 values, got {n}")
    if resamples < 100:
        raise DomainError("use at least 100 resamples")
    stream = stream or RandomStream(0)
    idx = stream.generator().integers(0, n, size=(resamples, n))
    stats = np.array([statistic(x[row]) for row in idx], dtype=float)
    alpha = 1.0 - level
    lo, hi = np.quantile(stats, [alpha / 2, 1 - alpha / 2])
    return IntervalEstimate(float(statistic(x)), float(hi - lo) / 2, level, "bootstrap_percentile", n,
                            float(lo), float(hi))


def replicate_summary(reports: Sequence[Mapping], level: float = 0.95) -> dict:
    """Interval per key over replicate reports, each a flat mapping key -> value.

    All reports must share the same keys. Undefined entries are skipped; a
    key defined in fewer than two replicates gets an undefined half width.
    """
    if len(reports) < 2:
        raise InsufficientData("a replicate summary needs at least 2 replicates")
    keys = list(reports[0].keys())
    for i, r in enumerate(reports[1:], start=1):
        if list(r.keys()) != keys:
            raise SchemaError(f"replicate {i} does not have the same report shape as replicate 0")
    out = {}
    for k in keys:
        vals = [r[k] for r in reports if not is_undefined(r[k])]
        if len(vals) >= 2:
            out[k] = mean_ci(vals, level)
        elif len(vals) == 1:
            out[k] = IntervalEstimate(float(vals[0]), UNDEFINED, level, "single", 1)
        else:
            out[k] = IntervalEstimate(UNDEFINED, UNDEFINED, level, "none", 0)
    return out


def _key_text(k) -> str:
    return "|".join(k) if isinstance(k, tuple) else str(k)


def summary_to_json(summary: Mapping, path, scale: float = 100.0) -> None:
    payload = {_key_text(k): {**iv.to_dict(), "display": iv.format(scale)} for k, iv in summary.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def summary_to_csv(summary: Mapping, path, scale: float = 100.0) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scope", "key", "metric", "mean", "half_width", "n", "method", "display"])
        for k, iv in summary.items():
            parts = list(k) if isinstance(k, tuple) else [str(k), "", ""]
            writer.writerow([*parts, to_jsonable(iv.mean), to_jsonable(iv.half_width), iv.n, iv.method,
                             iv.format(scale)])
