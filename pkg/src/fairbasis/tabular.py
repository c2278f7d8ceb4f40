"""Column-oriented datasets with roles and kinds, plus the CSV and
preprocessing steps shared by every pipeline."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CannotImpute, DegenerateVariance, FormatError, SchemaError, ShapeError
from .numerics import RandomStream

log = logging.getLogger(__name__)

ROLES = ("sensitive", "feature", "outcome", "weight")
KINDS = ("numeric", "categorical")
MISSING_TOKENS = ("", "NA")
MISSING_LEVEL = "Missing"


@dataclass(frozen=True)
class Column:
    name: str
    role: str
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "numeric":
            values = np.asarray(self.values, dtype=float)
        else:
            values = np.asarray(
                [None if v is None else str(v) for v in self.values], dtype=object
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def missing_mask(self) -> np.ndarray:
        if self.kind == "numeric":
            return np.isnan(self.values)
        return np.array([v is None for v in self.values], dtype=bool)

    def replace(self, **changes) -> "Column":
        fields = {"name": self.name, "role": self.role, "kind": self.kind, "values": self.values}
        fields.update(changes)
        return Column(**fields)


class Dataset:
    """Immutable ordered collection of equal-length columns."""

    def __init__(self, columns: Iterable[Column], row_count: int | None = None):
        self._columns = tuple(columns)
        names = [c.name for c in self._columns]
        if len(set(names)) != len(names):
            dupes = sorted(n for n, k in Counter(names).items() if k > 1)
            raise SchemaError(f"duplicate column names: {dupes}")
        lengths = {len(c.values) for c in self._columns}
        if len(lengths) > 1:
            raise ShapeError(f"columns have differing lengths {sorted(lengths)}")
        if lengths:
            self._rows = lengths.pop()
        else:
            self._rows = 0 if row_count is None else row_count
        if sum(c.role == "weight" for c in self._columns) > 1:
            raise SchemaError("at most one weight column is allowed")
        self._index = {c.name: c for c in self._columns}

    @property
    def columns(self) -> tuple:
        return self._columns

    @property
    def names(self) -> list:
        return [c.name for c in self._columns]

    @property
    def row_count(self) -> int:
        return self._rows

    def __len__(self):
        return self._rows

    def __contains__(self, name):
        return name in self._index

    def __getitem__(self, name) -> np.ndarray:
        return self.column(name).values

    def column(self, name) -> Column:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"no column named {name!r}") from None

    def names_with_role(self, role) -> list:
        return [c.name for c in self._columns if c.role == role]

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        if not names:
            return np.empty((self._rows, 0))
        cols = [self.column(n) for n in names]
        bad = [c.name for c in cols if c.kind != "numeric"]
        if bad:
            raise SchemaError(f"columns {bad} are not numeric")
        return np.column_stack([c.values for c in cols])

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset([c.replace(values=c.values[rows]) for c in self._columns],
                       row_count=int(rows.sum()) if rows.dtype == bool else len(rows))

    def select(self, names: Sequence[str]) -> "Dataset":
        return Dataset([self.column(n) for n in names], row_count=self._rows)

    def drop(self, names: Iterable[str]) -> "Dataset":
        names = set(names)
        return Dataset([c for c in self._columns if c.name not in names], row_count=self._rows)

    def with_column(self, column: Column) -> "Dataset":
        """Replace a same-named column in place, or append a new one."""
        if column.name in self._index:
            cols = [column if c.name == column.name else c for c in self._columns]
        else:
            cols = [*self._columns, column]
        return Dataset(cols, row_count=self._rows)

    def validate_for_modeling(self, outcome: str | None = None) -> None:
        outcomes = self.names_with_role("outcome")
        if outcome is None:
            if len(outcomes) != 1:
                raise SchemaError(f"expected exactly one outcome column, found {outcomes}")
            outcome = outcomes[0]
        y = self.column(outcome).values
        if self.column(outcome).kind != "numeric" or not np.all(np.isin(y, (0.0, 1.0))):
            raise FormatError(f"outcome column {outcome!r} must hold only 0/1 values")
        for w in self.names_with_role("weight"):
            wv = self[w]
            if np.any(~(wv > 0)) or np.any(wv > 1):
                raise FormatError(f"weight column {w!r} must lie in (0, 1]")


def load_schema(source) -> dict:
    """Schema as a mapping name -> {"role": ..., "kind": ...}, from a dict or JSON path."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            source = json.load(fh)
    schema = {}
    for name, spec in dict(source).items():
        role = spec.get("role", "feature")
        kind = spec.get("kind", "numeric")
        if role not in ROLES:
            raise SchemaError(f"schema column {name!r}: unknown role {role!r}")
        if kind not in KINDS:
            raise SchemaError(f"schema column {name!r}: unknown kind {kind!r}")
        schema[name] = {"role": role, "kind": kind}
    return schema


def _parse_number(cell: str) -> float:
    if cell.strip() in MISSING_TOKENS:
        return math.nan
    try:
        return float(cell)
    except ValueError:
        return math.nan


def read_csv(path, schema) -> Dataset:
    schema = load_schema(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("file is empty; a header row is required") from None
        missing = [n for n in schema if n not in header]
        if missing:
            raise SchemaError(f"declared column(s) absent from {os.fspath(path)}: {', '.join(missing)}")
        positions = {n: header.index(n) for n in schema}
        cells = {n: [] for n in schema}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} fields, found {len(row)}", row=line_no)
            for n, pos in positions.items():
                cells[n].append(row[pos])
    columns = []
    for name, spec in schema.items():
        raw = cells[name]
        if spec["kind"] == "numeric":
            values = np.array([_parse_number(c) for c in raw], dtype=float)
        else:
            values = np.array([None if c.strip() in MISSING_TOKENS else c for c in raw], dtype=object)
        columns.append(Column(name, spec["role"], spec["kind"], values))
    return Dataset(columns, row_count=0)


def format_number(x) -> str:
    """Shortest round-trip text for a float; integral values print without a decimal part."""
    x = float(x)
    if math.isnan(x):
        return ""
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def write_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset.names)
        formatted = []
        for c in dataset.columns:
            if c.kind == "numeric":
                formatted.append([format_number(v) for v in c.values])
            else:
                formatted.append(["" if v is None else v for v in c.values])
        for i in range(dataset.row_count):
            writer.writerow([col[i] for col in formatted])


def schema_of(dataset: Dataset) -> dict:
    return {c.name: {"role": c.role, "kind": c.kind} for c in dataset.columns}


def impute(dataset: Dataset) -> Dataset:
    """Numeric gaps take the column median; categorical gaps take the level ``"Missing"``."""
    out = []
    for c in dataset.columns:
        mask = c.missing_mask()
        if not mask.any():
            out.append(c)
            continue
        if c.kind == "numeric":
            observed = c.values[~mask]
            if observed.size == 0:
                raise CannotImpute(c.name)
            values = c.values.copy()
            values[mask] = float(np.median(observed))
        else:
            values = np.array([MISSING_LEVEL if m else v for v, m in zip(c.values, mask)], dtype=object)
        out.append(c.replace(values=values))
    return Dataset(out, row_count=dataset.row_count)


@dataclass
class EncodingMap:
    """Per categorical column: the dropped reference level and the dummy levels, in order."""

    levels: dict = field(default_factory=dict)
    dropped: list = field(default_factory=list)

    def dummy_names(self, name) -> list:
        _, dummies = self.levels[name]
        return [f"{name}_{lvl}" for lvl in dummies]

    def to_dict(self) -> dict:
        return {
            "levels": {k: {"reference": ref, "dummies": list(d)} for k, (ref, d) in self.levels.items()},
            "dropped": list(self.dropped),
        }


def one_hot(dataset: Dataset) -> tuple:
    """Replace each categorical column by k-1 dummies, dropping the most frequent level.

    Frequency ties go to the lexicographically smallest level. A column with a
    single level carries no information and is dropped; it is listed in
    ``EncodingMap.dropped``.
    """
    enc = EncodingMap()
    out = []
    for c in dataset.columns:
        if c.kind != "categorical":
            out.append(c)
            continue
        if c.missing_mask().any():
            raise FormatError(f"categorical column {c.name!r} has missing cells; impute first")
        counts = Counter(c.values.tolist())
        if len(counts) <= 1:
            log.warning("categorical column %r has a single level and is dropped", c.name)
            enc.dropped.append(c.name)
            continue
        reference = min(counts, key=lambda lvl: (-counts[lvl], lvl))
        dummies = tuple(sorted(lvl for lvl in counts if lvl != reference))
        enc.levels[c.name] = (reference, dummies)
        for lvl in dummies:
            out.append(Column(f"{c.name}_{lvl}", c.role, "numeric", (c.values == lvl).astype(float)))
    return Dataset(out, row_count=dataset.row_count), enc


@dataclass(frozen=True)
class Standardization:
    means: dict
    sds: dict
    ddof: int = 1

    def apply(self, dataset: Dataset) -> Dataset:
        out = dataset
        for name, mu in self.means.items():
            col = dataset.column(name)
            out = out.with_column(col.replace(values=(col.values - mu) / self.sds[name]))
        return out

    def to_dict(self) -> dict:
        return {"means": dict(self.means), "sds": dict(self.sds), "ddof": self.ddof}


def standardize(dataset: Dataset, fit_rows=None, columns: Sequence[str] | None = None) -> tuple:
    """Centre and scale columns using statistics of ``fit_rows`` only.

    The scale is the unbiased (n - 1) standard deviation. By default every
    numeric feature or sensitive column is transformed.
    """
    if columns is None:
        columns = [c.name for c in dataset.columns
                   if c.kind == "numeric" and c.role in ("feature", "sensitive")]
    rows = slice(None) if fit_rows is None else np.asarray(fit_rows)
    means, sds = {}, {}
    for name in columns:
        v = dataset[name][rows]
        if v.size < 2:
            raise DegenerateVariance(name)
        sd = float(np.std(v, ddof=1))
        if not sd > 0:
            raise DegenerateVariance(name)
        means[name] = float(np.mean(v))
        sds[name] = sd
    params = Standardization(means, sds)
    return params.apply(dataset), params


def split_indices(n: int, train_fraction: float, stream: RandomStream) -> tuple:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n_train = math.floor(train_fraction * n + 1e-9)
    if n_train == 0 and n > 0:
        log.warning("split of %d row(s) leaves no training rows; assigning all to train", n)
        n_train = n
    perm = stream.generator().permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(dataset: Dataset, train_fraction: float, stream: RandomStream) -> tuple:
    """Random disjoint train/test partition; train size is ``floor(fraction * rows)``."""
    train, test = split_indices(dataset.row_count, train_fraction, stream)
    return dataset.take(train), dataset.take(test)
