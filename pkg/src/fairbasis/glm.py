"""Exposure-weighted logistic regression fitted by IRLS, with Wald inference,
threshold calibration and ROC summaries.

Each row contributes ``w * [y * eta - log(1 + exp(eta))]`` to the
log-likelihood, which is the likelihood ``q^(y w) (1 - q)^((1 - y) w)`` of a
death indicator observed over an exposure ``w``. With an intercept only the
maximum is at ``q = sum(w y) / sum(w)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, log_expit
from scipy.stats import rankdata

from .errors import DegenerateVariance, DomainError, ShapeError, SingularInformation
from .numerics import std_normal_cdf
from .undefined import UNDEFINED

INTERCEPT = "(Intercept)"
RIDGE_JITTER = 1e-10
SEPARATION_ETA = 15.0


def _design(X, fit_intercept=True) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if fit_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    return X


def weighted_loglik(beta, D, y, w) -> float:
    eta = D @ beta
    # y*eta - log(1 + e^eta) = y*log(q) + (1-y)*log(1-q)
    return float(np.sum(w * (y * log_expit(eta) + (1 - y) * log_expit(-eta))))


def weighted_score(beta, D, y, w) -> np.ndarray:
    return D.T @ (w * (y - expit(D @ beta)))


def weighted_information(beta, D, w) -> np.ndarray:
    q = expit(D @ beta)
    return (D * (w * q * (1 - q))[:, None]).T @ D


@dataclass(frozen=True)
class FittedModel:
    names: tuple
    coefficients: np.ndarray
    standard_errors: np.ndarray
    p_values: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    gradient_norm: float
    fit_intercept: bool = True
    diagnostic: str = ""
    history: tuple = field(default=(), repr=False)

    @property
    def feature_names(self) -> list:
        return list(self.names[1:] if self.fit_intercept else self.names)

    def coefficient(self, name) -> float:
        return float(self.coefficients[self.names.index(name)])

    def to_dict(self) -> dict:
        def clean(a):
            return [None if not math.isfinite(v) else float(v) for v in np.asarray(a, dtype=float)]

        return {
            "columns": list(self.names),
            "fit_intercept": self.fit_intercept,
            "coefficients": clean(self.coefficients),
            "standard_errors": clean(self.standard_errors),
            "p_values": clean(self.p_values),
            "convergence": {
                "converged": self.converged,
                "iterations": self.iterations,
                "log_likelihood": self.log_likelihood,
                "gradient_max_norm": self.gradient_norm,
                "diagnostic": self.diagnostic,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        def arr(v):
            return np.array([math.nan if x is None else x for x in v], dtype=float)

        conv = d["convergence"]
        return cls(tuple(d["columns"]), arr(d["coefficients"]), arr(d["standard_errors"]),
                   arr(d["p_values"]), bool(conv["converged"]), int(conv["iterations"]),
                   float(conv["log_likelihood"]), float(conv["gradient_max_norm"]),
                   bool(d.get("fit_intercept", True)), conv.get("diagnostic", ""))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _solve(H, g):
    """Newton direction, retrying once with a small ridge if ``H`` is singular."""
    for jitter in (0.0, RIDGE_JITTER * max(1.0, float(np.trace(H)) / len(g))):
        try:
            L = np.linalg.cholesky(H + jitter * np.eye(len(g)))
        except np.linalg.LinAlgError:
            continue
        return np.linalg.solve(L.T, np.linalg.solve(L, g)), jitter > 0
    raise SingularInformation("information matrix is singular even after ridge jitter")


def fit_weighted_logistic(X, y, w=None, names: Sequence[str] | None = None, fit_intercept: bool = True,
                          tol: float = 1e-8, max_iter: int = 100) -> FittedModel:
    """Maximum-likelihood fit by Newton/IRLS with step halving.

    Stops when the largest absolute score component is below ``tol``. A
    constant outcome or separated data have no finite maximum; the model is
    then returned with ``converged=False`` and a diagnostic message.
    """
    D = _design(X, fit_intercept)
    y = np.asarray(y, dtype=float)
    n, p = D.shape
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if y.shape != (n,) or w.shape != (n,):
        raise ShapeError("X, y and w must have the same number of rows")
    if n < p + 1:
        raise ShapeError(f"need more rows ({n}) than parameters ({p})")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise DomainError("y must contain only 0 and 1")
    if not np.all(np.isfinite(D)):
        raise DomainError("design matrix has non-finite entries")
    if np.any(~(w > 0)) or np.any(w > 1):
        raise DomainError("weights must lie in (0, 1]")
    if names is None:
        names = [f"x{i}" for i in range(p - int(fit_intercept))]
    names = ([INTERCEPT] if fit_intercept else []) + list(names)
    if len(names) != p:
        raise ShapeError(f"{len(names)} names for {p} parameters")
    start = 1 if fit_intercept else 0
    for k in range(start, p):
        if np.ptp(D[:, k]) == 0.0:
            raise DegenerateVariance(names[k])

    beta = np.zeros(p)
    if fit_intercept:
        ybar = float(np.sum(w * y) / np.sum(w))
        if 0.0 < ybar < 1.0:
            beta[0] = math.log(ybar / (1 - ybar))
    ll = weighted_loglik(beta, D, y, w)
    history = [ll]
    g = weighted_score(beta, D, y, w)
    converged = bool(np.max(np.abs(g)) < tol)
    iterations = 0
    jittered = False
    while not converged and iterations < max_iter:
        iterations += 1
        H = weighted_information(beta, D, w)
        step, used_jitter = _solve(H, g)
        jittered |= used_jitter
        t = 1.0
        for _ in range(40):
            candidate = beta + t * step
            ll_new = weighted_loglik(candidate, D, y, w)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            break
        beta, ll = candidate, max(ll_new, ll)
        history.append(ll_new)
        g = weighted_score(beta, D, y, w)
        converged = bool(np.max(np.abs(g)) < tol)

    diagnostic = ""
    eta = D @ beta
    weighted_y = np.unique(y)
    if weighted_y.size == 1:
        converged = False
        diagnostic = "outcome is constant: likelihood is monotone, no finite maximum"
    elif np.all(np.abs(eta) > SEPARATION_ETA) and np.all((eta > 0) == (y == 1)):
        converged = False
        diagnostic = "outcome is separated by the predictors: likelihood is monotone, no finite maximum"
    elif not converged:
        diagnostic = f"no convergence after {iterations} iterations"
    elif jittered:
        diagnostic = "information matrix was ridge-jittered during fitting"

    H = weighted_information(beta, D, w)
    try:
        cov = np.linalg.inv(H)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        if not np.all(np.isfinite(se)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        se = np.full(p, math.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(beta / se)
    pv = np.array([2.0 * std_normal_cdf(-zi) if math.isfinite(zi) else (0.0 if zi == math.inf else math.nan)
                   for zi in z])
    return FittedModel(tuple(names), beta, se, pv, converged, iterations, ll,
                       float(np.max(np.abs(g))), fit_intercept, diagnostic, tuple(history))


def predict_proba(model: FittedModel, X) -> np.ndarray:
    D = _design(X, model.fit_intercept)
    if D.shape[1] != len(model.coefficients):
        raise ShapeError(f"expected {len(model.coefficients) - int(model.fit_intercept)} columns, "
                         f"got {D.shape[1] - int(model.fit_intercept)}")
    return expit(D @ model.coefficients)


@dataclass(frozen=True)
class Threshold:
    tau: float
    realized_rate: float
    target_rate: float
    tie_flag: bool


def calibrate_threshold(probabilities, target_rate: float) -> Threshold:
    """Smallest observed value ``tau`` with ``mean(p >= tau) <= target_rate``.

    If no observed value qualifies, ``tau`` is the next float above the
    maximum and nothing is classified positive. ``tie_flag`` is set when the
    value just below ``tau`` is shared by several rows, so the realized rate
    could not be brought closer to the target.
    """
    if not 0.0 < target_rate < 1.0:
        raise DomainError("target_rate must lie strictly between 0 and 1")
    p = np.asarray(probabilities, dtype=float)
    if p.size == 0:
        raise ShapeError("no probabilities to calibrate on")
    n = p.size
    values, counts = np.unique(p, return_counts=True)
    at_least = np.cumsum(counts[::-1])[::-1]
    ok = np.nonzero(at_least <= target_rate * n)[0]
    if ok.size:
        i = int(ok[0])
        tau = float(values[i])
    else:
        i = values.size
        tau = float(np.nextafter(values[-1], np.inf))
    realized = float(np.mean(p >= tau))
    tie = bool(i > 0 and counts[i - 1] > 1)
    return Threshold(tau, realized, float(target_rate), tie)


def classify(probabilities, tau: float) -> np.ndarray:
    return (np.asarray(probabilities) >= tau).astype(int)


def roc_auc(y, scores, positive_label=1):
    """Probability that a random positive outranks a random negative, ties counting one half."""
    y = np.asarray(y)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ShapeError("y and scores differ in length")
    pos = y == positive_label
    n1 = int(pos.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        return UNDEFINED
    ranks = rankdata(s)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def roc_curve(y, scores, positive_label=1) -> tuple:
    """Arrays ``(thresholds, fpr, tpr)``; each threshold classifies ``score >= t`` as positive."""
    y = np.asarray(y)
    s = np.asarray(scores, dtype=float)
    pos = y == positive_label
    n1 = pos.sum()
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise DomainError("ROC curve needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    tp = np.cumsum(pos[order])
    fp = np.cumsum(~pos[order])
    last = np.r_[np.nonzero(np.diff(s_sorted))[0], s.size - 1]
    thresholds = np.r_[np.inf, s_sorted[last]]
    return thresholds, np.r_[0.0, fp[last] / n0], np.r_[0.0, tp[last] / n1]


def write_roc_csv(path, thresholds, fpr, tpr) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "fpr", "tpr"])
        for t, a, b in zip(thresholds, fpr, tpr):
            writer.writerow(["inf" if t == np.inf else repr(float(t)), repr(float(a)), repr(float(b))])


def select_by_pvalue(model: FittedModel, alpha: float) -> list:
    """Column names kept at level ``alpha``; the intercept is always kept."""
    keep = []
    for i, name in enumerate(model.names):
        if (model.fit_intercept and i == 0) or model.p_values[i] <= alpha:
            keep.append(name)
    return keep
