"""End-to-end experiment: per replicate, split, standardize, fit one logistic
model per variant and score group fairness on the held-out rows.

Variants:

``baseline``
    every feature and every sensitive column enters the model.
``drop_sensitive``
    sensitive columns are left out; features enter unchanged.
``decorrelate``
    a transition matrix fitted on the training rows replaces each feature by
    its residual on the sensitive columns; only those residuals enter.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decorrelate import TransitionMatrix, apply_transition, fit_transition
from .errors import ConfigError, FairbasisError, SchemaError
from .fairness import GroupMetricsReport, group_report
from .glm import FittedModel, calibrate_threshold, classify, fit_weighted_logistic, predict_proba, roc_auc
from .numerics import RandomStream
from .simulate import SimulationSpec, sample_dataset
from .stats import replicate_summary
from .tabular import Dataset, impute, load_schema, one_hot, read_csv, split_indices, standardize
from .undefined import UNDEFINED, to_jsonable

log = logging.getLogger(__name__)

VARIANTS = ("baseline", "drop_sensitive", "decorrelate")


@dataclass
class ExperimentConfig:
    sensitive: list
    outcome: str
    variants: list = field(default_factory=lambda: list(VARIANTS))
    weight: str | None = None
    positive_label: object = 1
    threshold: dict = field(default_factory=lambda: {"fixed": 0.5})
    train_fraction: float = 0.8
    split_seed: int = 0
    simulation: SimulationSpec | None = None
    data_files: list = field(default_factory=list)
    schema: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.variants:
            raise ConfigError("at least one variant is required")
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ConfigError(f"unknown variant(s) {unknown}; choose from {list(VARIANTS)}")
        if not self.sensitive:
            raise ConfigError("at least one sensitive column is required")
        clash = set(self.sensitive) & {self.outcome, self.weight}
        if clash:
            raise ConfigError(f"column(s) {sorted(clash)} cannot be both sensitive and outcome/weight")
        if ("fixed" in self.threshold) == ("target_rate" in self.threshold):
            raise ConfigError("threshold must give exactly one of 'fixed' or 'target_rate'")
        if self.simulation is None and not self.data_files:
            raise ConfigError("config needs either 'simulation' or 'data'")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("split fraction must lie strictly between 0 and 1")
        known = list(self.simulation.names) if self.simulation is not None else list(self.schema)
        declared = [*self.sensitive, self.outcome] + ([self.weight] if self.weight else [])
        absent = [c for c in declared if c not in known]
        if absent:
            raise SchemaError(f"column(s) {absent} named in the config are not in the data")

    @property
    def replicate_count(self) -> int:
        return self.simulation.replicates if self.simulation is not None else len(self.data_files)

    @classmethod
    def from_dict(cls, d: dict, base_dir=".", seed: int | None = None) -> "ExperimentConfig":
        d = dict(d)
        if seed is None:
            seed = d.get("seed")
        simulation = None
        if "simulation" in d:
            sim = dict(d["simulation"])
            if seed is not None:
                sim["seed"] = seed
            simulation = SimulationSpec.from_dict(sim)
        files, schema = [], {}
        if "data" in d:
            data = d["data"]
            csvs = data["csv"] if isinstance(data["csv"], list) else [data["csv"]]
            files = [os.path.join(base_dir, p) for p in csvs]
            raw_schema = data.get("schema")
            if raw_schema is None:
                raise SchemaError("data section needs a 'schema'")
            if isinstance(raw_schema, str):
                raw_schema = os.path.join(base_dir, raw_schema)
            schema = load_schema(raw_schema)
        split = d.get("split", {})
        split_seed = split.get("seed", 0) if seed is None else seed
        try:
            return cls(
                sensitive=list(d["sensitive"]),
                outcome=d["outcome"],
                variants=list(d.get("variants", VARIANTS)),
                weight=d.get("weight"),
                positive_label=d.get("positive_label", 1),
                threshold=dict(d.get("threshold", {"fixed": 0.5})),
                train_fraction=float(split.get("fraction", 0.8)),
                split_seed=int(split_seed),
                simulation=simulation,
                data_files=files,
                schema=schema,
            )
        except KeyError as exc:
            raise SchemaError(f"experiment config is missing {exc}") from None

    def load_replicate(self, r: int) -> Dataset:
        if self.simulation is not None:
            return sample_dataset(self.simulation, r)
        return read_csv(self.data_files[r], self.schema)


@dataclass
class VariantResult:
    variant: str
    model: FittedModel
    threshold: float
    realized_rate: float
    auc: object
    report: GroupMetricsReport
    test_rows: np.ndarray
    y_true: np.ndarray
    probabilities: np.ndarray
    predictions: np.ndarray
    transition: TransitionMatrix | None = None

    def flat(self) -> dict:
        out = dict(self.report.flat())
        out[("model", "all", "auc")] = self.auc
        return out


@dataclass
class ReplicateResult:
    index: int
    variants: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def _roles(dataset: Dataset, config: ExperimentConfig) -> Dataset:
    """Apply the config's sensitive/outcome/weight designations over the dataset's own roles."""
    for name in [*config.sensitive, config.outcome, *([config.weight] if config.weight else [])]:
        if name not in dataset:
            raise SchemaError(f"column {name!r} named in the config is absent from the data")
    out = dataset
    for c in dataset.columns:
        if c.name in config.sensitive:
            role = "sensitive"
        elif c.name == config.outcome:
            role = "outcome"
        elif c.name == config.weight:
            role = "weight"
        elif c.role in ("sensitive", "outcome", "weight"):
            # designated elsewhere in the data but not used by this experiment
            continue
        else:
            role = "feature"
        if role != c.role:
            out = out.with_column(c.replace(role=role))
    keep = [c.name for c in out.columns
            if c.role == "feature" or c.name in config.sensitive
            or c.name in (config.outcome, config.weight)]
    return out.select(keep)


def run_replicate(dataset: Dataset, config: ExperimentConfig, index: int) -> ReplicateResult:
    result = ReplicateResult(index)
    raw = impute(_roles(dataset, config))
    raw.validate_for_modeling(config.outcome)
    encoded, _ = one_hot(raw)
    train, test = split_indices(encoded.row_count, config.train_fraction, RandomStream(config.split_seed, index))
    if test.size == 0:
        raise SchemaError("the split leaves no test rows")
    scaled, _ = standardize(encoded, fit_rows=train)
    sens_names = [c.name for c in scaled.columns if c.role == "sensitive"]
    feat_names = [c.name for c in scaled.columns if c.role == "feature"]
    y = scaled[config.outcome]
    w = scaled[config.weight] if config.weight else None
    groups_test = raw.take(test)

    for variant in config.variants:
        try:
            transition = None
            if variant == "baseline":
                names = feat_names + sens_names
                X = scaled.matrix(names)
            elif variant == "drop_sensitive":
                names = feat_names
                X = scaled.matrix(names)
            else:
                block = scaled.matrix(sens_names + feat_names)
                transition = fit_transition(block[train], range(len(sens_names)), sens_names + feat_names)
                X = apply_transition(transition, block)[:, len(sens_names):]
                names = feat_names
            model = fit_weighted_logistic(X[train], y[train], None if w is None else w[train], names)
            proba = predict_proba(model, X[test])
            if "fixed" in config.threshold:
                tau = float(config.threshold["fixed"])
                realized = float(np.mean(proba >= tau))
            else:
                target = config.threshold["target_rate"]
                if target == "prevalence":
                    target = float(np.mean(y[train]))
                cal = calibrate_threshold(proba, float(target))
                tau, realized = cal.tau, cal.realized_rate
            pred = classify(proba, tau)
            report = group_report(groups_test, pred, config.sensitive, config.positive_label, config.outcome)
            result.variants[variant] = VariantResult(
                variant, model, tau, realized, roc_auc(y[test], proba), report,
                test, y[test], proba, pred, transition)
        except FairbasisError as exc:
            log.warning("replicate %d, variant %s failed: %s", index, variant, exc)
            result.failures.append({"replicate": index, "variant": variant,
                                    "error": type(exc).__name__, "message": str(exc)})
    return result


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list:
    """Results for every replicate, in replicate order."""

    def one(r):
        try:
            return run_replicate(config.load_replicate(r), config, r)
        except FairbasisError as exc:
            log.warning("replicate %d failed: %s", r, exc)
            failed = ReplicateResult(r)
            failed.failures.append({"replicate": r, "variant": None,
                                    "error": type(exc).__name__, "message": str(exc)})
            return failed

    indices = range(config.replicate_count)
    if jobs <= 1:
        return [one(r) for r in indices]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, indices))


def summarize(results: list, config: ExperimentConfig) -> dict:
    """Replicate-level intervals per variant plus the list of failures."""
    summary = {"replicates": len(results), "variants": {}, "failures": []}
    for res in results:
        summary["failures"].extend(res.failures)
    for variant in config.variants:
        flats = [res.variants[variant].flat() for res in results if variant in res.variants]
        if len(flats) >= 2:
            try:
                summary["variants"][variant] = replicate_summary(flats)
            except FairbasisError as exc:
                summary["failures"].append({"replicate": None, "variant": variant,
                                            "error": type(exc).__name__, "message": str(exc)})
        elif flats:
            summary["variants"][variant] = {k: v for k, v in flats[0].items()}
    return summary


def summary_to_dict(summary: dict, scale: float = 100.0) -> dict:
    out = {"replicates": summary["replicates"], "failures": summary["failures"], "variants": {}}
    for variant, table in summary["variants"].items():
        entries = {}
        for key, iv in table.items():
            text = "|".join(key)
            if hasattr(iv, "to_dict"):
                entries[text] = {**iv.to_dict(), "display": iv.format(scale)}
            else:
                entries[text] = {"value": to_jsonable(iv)}
        out["variants"][variant] = entries
    return out


def write_variant_outputs(vr: VariantResult, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    vr.model.save(directory / "model.json")
    with open(directory / "predictions.csv", "w", encoding="utf-8") as fh:
        fh.write("row,y_true,probability,y_pred\n")
        for row, yt, p, yp in zip(vr.test_rows, vr.y_true, vr.probabilities, vr.predictions):
            fh.write(f"{int(row)},{int(yt)},{float(p)!r},{int(yp)}\n")
    payload = vr.report.to_dict()
    payload["threshold"] = {"tau": vr.threshold, "realized_rate": vr.realized_rate}
    payload["auc"] = to_jsonable(vr.auc)
    with open(directory / "report.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    vr.report.to_csv(directory / "report.csv")
    if vr.transition is not None:
        vr.transition.save(directory / "transition.json")
