"""Gaussian-copula simulation of mixed normal / uniform / Bernoulli columns.

Latent normals ``Z ~ N(0, R_Z)`` are pushed through ``Phi`` to uniforms and
then through each column's inverse CDF. Bernoulli columns threshold the
uniform intermediate at ``1 - p``, so their dependence on the other columns
stays tied to the latent correlation.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import (
    ConfigError,
    InvalidCholeskyRow,
    InvalidCorrelation,
    NotPositiveDefinite,
    SchemaError,
    UnsupportedPair,
)
from .numerics import (
    RandomStream,
    cholesky_factor,
    sample_mvn,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)
from .tabular import Column, Dataset, ROLES


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise ConfigError(f"normal sd must be positive, got {self.sd}")

    def ppf(self, u):
        return self.mean + self.sd * std_normal_quantile(u)

    def from_latent(self, z):
        # mean + sd * Phi^-1(Phi(z)) collapses to the affine map exactly
        return self.mean + self.sd * np.asarray(z, dtype=float)

    def to_dict(self):
        return {"dist": "normal", "mean": self.mean, "sd": self.sd}


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ConfigError(f"uniform needs a < b, got a={self.a}, b={self.b}")

    def ppf(self, u):
        return self.a + np.asarray(u, dtype=float) * (self.b - self.a)

    def from_latent(self, z):
        return self.ppf(std_normal_cdf(np.asarray(z, dtype=float)))

    def to_dict(self):
        return {"dist": "uniform", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"bernoulli p must lie in (0, 1), got {self.p}")

    def ppf(self, u):
        return bernoulli_threshold(u, self.p)

    def from_latent(self, z):
        return bernoulli_threshold(std_normal_cdf(np.asarray(z, dtype=float)), self.p).astype(float)

    def to_dict(self):
        return {"dist": "bernoulli", "p": self.p}


MarginalSpec = Union[Normal, Uniform, Bernoulli]


def marginal_from_dict(d: dict) -> MarginalSpec:
    dist = str(d.get("dist", d.get("kind", ""))).lower()
    try:
        if dist == "normal":
            return Normal(float(d["mean"]), float(d["sd"]))
        if dist == "uniform":
            return Uniform(float(d["a"]), float(d["b"]))
        if dist == "bernoulli":
            return Bernoulli(float(d["p"]))
    except KeyError as exc:
        raise SchemaError(f"marginal {d!r} is missing parameter {exc}") from None
    raise SchemaError(f"unknown marginal distribution {dist!r}")


def bernoulli_threshold(u, p):
    """1 where ``u >= 1 - p``, else 0; a uniform input gives Bernoulli(p)."""
    return (np.asarray(u, dtype=float) >= 1.0 - p).astype(np.int64)


def _strict_lower_rows(entries, dim=None):
    """Accept either nested rows ``[[L21], [L31, L32], ...]`` or a flat row-major list."""
    entries = list(entries)
    if entries and isinstance(entries[0], (list, tuple, np.ndarray)):
        rows = [list(map(float, r)) for r in entries]
        if any(len(r) != i + 1 for i, r in enumerate(rows)):
            raise SchemaError("nested strict-lower rows must have lengths 1, 2, 3, ...")
        return [[]] + rows
    flat = [float(v) for v in entries]
    if dim is None:
        dim = int(round((1 + math.sqrt(1 + 8 * len(flat))) / 2))
    if dim * (dim - 1) // 2 != len(flat):
        raise SchemaError(f"{len(flat)} strict-lower entries do not fill a triangular matrix")
    rows, k = [], 0
    for i in range(dim):
        rows.append(flat[k:k + i])
        k += i
    return rows


def build_latent_correlation(strict_lower, dim=None) -> np.ndarray:
    """Correlation matrix ``L @ L.T`` from the free strict-lower Cholesky entries.

    Each diagonal entry is set to ``sqrt(1 - sum of squares of its row)`` so
    the result has a unit diagonal; rows whose squares already reach 1 are
    rejected.
    """
    rows = _strict_lower_rows(strict_lower, dim)
    n = len(rows)
    L = np.zeros((n, n))
    for i, r in enumerate(rows):
        sum_sq = float(sum(v * v for v in r))
        if not sum_sq < 1.0:
            raise InvalidCholeskyRow(i, sum_sq)
        L[i, :i] = r
        L[i, i] = math.sqrt(1.0 - sum_sq)
    R = L @ L.T
    np.fill_diagonal(R, 1.0)
    _check_correlation(R)
    return R


def _check_correlation(R: np.ndarray) -> None:
    n = R.shape[0]
    for i in range(n):
        for j in range(i):
            if not -1.0 <= R[i, j] <= 1.0:
                raise InvalidCorrelation(i, j, R[i, j])
    cholesky_factor(R)


def validate_latent_correlation(matrix) -> np.ndarray:
    R = np.array(matrix, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise SchemaError("latent correlation must be a square matrix")
    if np.max(np.abs(np.diag(R) - 1.0)) > 1e-12:
        raise ConfigError("latent correlation must have a unit diagonal")
    if np.max(np.abs(R - R.T)) > 1e-12:
        raise ConfigError("latent correlation must be symmetric")
    try:
        _check_correlation(R)
    except NotPositiveDefinite as exc:
        raise ConfigError(f"latent correlation is not positive definite: {exc}") from None
    return R


def attenuation_factor(mi: MarginalSpec, mj: MarginalSpec) -> float:
    """Factor ``f`` with ``corr(X_i, X_j) = f * rho_latent`` for a supported pair."""
    pair = {type(mi), type(mj)}
    if pair == {Normal}:
        return 1.0
    if pair == {Uniform, Normal}:
        return math.sqrt(3.0 / math.pi)
    if pair == {Bernoulli, Normal}:
        bern = mi if isinstance(mi, Bernoulli) else mj
        tau = 1.0 - bern.p
        return float(std_normal_pdf(std_normal_quantile(tau)) / math.sqrt(tau * (1.0 - tau)))
    names = sorted(t.__name__ for t in (type(mi), type(mj)))
    raise UnsupportedPair(f"no closed-form attenuation for the pair {names[0]}-{names[1]}")


def normal_factor(m: MarginalSpec) -> float:
    """Attenuation of one column against a normal partner (1 for a normal column)."""
    return attenuation_factor(m, Normal(0.0, 1.0))


BINARY_PAIR_MODES = ("copy", "first_order")


def invert_target_correlation(target, marginals: Sequence[MarginalSpec], binary_pairs: str = "copy") -> np.ndarray:
    """Latent matrix whose transformed columns approximately reach ``target``.

    Pairs with a closed-form attenuation are divided by their factor. For the
    other pairs (binary-binary, uniform-uniform, uniform-binary)
    ``binary_pairs`` chooses between copying the target unchanged and dividing
    by the product of each column's factor against a normal partner, which is
    the first-order term of the series expansion of their correlation in the
    latent one.
    """
    if binary_pairs not in BINARY_PAIR_MODES:
        raise SchemaError(f"binary_pairs must be one of {BINARY_PAIR_MODES}")
    T = np.array(target, dtype=float)
    n = len(marginals)
    if T.shape != (n, n):
        raise SchemaError(f"target correlation must be {n}x{n}")
    R = T.copy()
    for i in range(n):
        for j in range(i):
            try:
                f = attenuation_factor(marginals[i], marginals[j])
            except UnsupportedPair:
                f = 1.0
                if binary_pairs == "first_order":
                    f = normal_factor(marginals[i]) * normal_factor(marginals[j])
            R[i, j] = R[j, i] = T[i, j] / f
    np.fill_diagonal(R, 1.0)
    return validate_latent_correlation(R)


@dataclass
class SimulationSpec:
    names: list
    marginals: list
    latent_corr: np.ndarray
    roles: dict = field(default_factory=dict)
    rows: int = 100_000
    replicates: int = 1
    seed: int = 0
    latent_source: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.names) != len(self.marginals):
            raise SchemaError("names and marginals differ in length")
        if len(set(self.names)) != len(self.names):
            raise SchemaError("duplicate column names in simulation spec")
        if self.latent_corr.shape != (len(self.names),) * 2:
            raise SchemaError("latent correlation size does not match the number of marginals")
        for name, role in self.roles.items():
            if name not in self.names:
                raise SchemaError(f"role given for unknown column {name!r}")
            if role not in ROLES:
                raise SchemaError(f"unknown role {role!r} for column {name!r}")
        if self.rows < 1 or self.replicates < 1:
            raise ConfigError("rows and replicates must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationSpec":
        try:
            raw_marginals = d["marginals"]
            latent = d["latent"]
        except KeyError as exc:
            raise SchemaError(f"simulation spec is missing {exc}") from None
        names = [m.get("name", f"X{i + 1}") for i, m in enumerate(raw_marginals)]
        marginals = [marginal_from_dict(m) for m in raw_marginals]
        roles = dict(d.get("roles", {}))
        for name, m in zip(names, raw_marginals):
            if "role" in m:
                roles[name] = m["role"]
        if "cholesky_strict_lower" in latent:
            R = build_latent_correlation(latent["cholesky_strict_lower"], len(marginals))
        elif "latent_corr" in latent:
            R = validate_latent_correlation(latent["latent_corr"])
        elif "target_corr" in latent:
            R = invert_target_correlation(latent["target_corr"], marginals,
                                          latent.get("binary_pairs", "copy"))
        else:
            raise SchemaError("latent must give cholesky_strict_lower, latent_corr or target_corr")
        return cls(
            names=names,
            marginals=marginals,
            latent_corr=R,
            roles=roles,
            rows=int(d.get("rows", 100_000)),
            replicates=int(d.get("replicates", 1)),
            seed=int(d.get("seed", 0)),
            latent_source=dict(latent),
        )

    def to_dict(self) -> dict:
        marginals = []
        for name, m in zip(self.names, self.marginals):
            entry = {"name": name, **m.to_dict()}
            marginals.append(entry)
        return {
            "marginals": marginals,
            "roles": dict(self.roles),
            "latent": {"latent_corr": self.latent_corr.tolist()},
            "rows": self.rows,
            "replicates": self.replicates,
            "seed": int(self.seed),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def sample_dataset(spec: SimulationSpec, replicate_index: int = 0) -> Dataset:
    L = cholesky_factor(spec.latent_corr)
    z = sample_mvn(L, spec.rows, RandomStream(spec.seed, replicate_index))
    columns = []
    for j, (name, marginal) in enumerate(zip(spec.names, spec.marginals)):
        columns.append(Column(name, spec.roles.get(name, "feature"), "numeric", marginal.from_latent(z[:, j])))
    return Dataset(columns)


def generate_replicates(spec: SimulationSpec, jobs: int = 1) -> list:
    """All replicates of ``spec``, ordered by replicate index."""
    indices = range(spec.replicates)
    if jobs <= 1 or spec.replicates == 1:
        return [sample_dataset(spec, r) for r in indices]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda r: sample_dataset(spec, r), indices))


# Observed correlation targets for four normal features, two Bernoulli
# sensitive columns and a Bernoulli outcome (order X1..X4, A, B, Y).
REFERENCE_TARGET_CORRELATION = [
    [1, 0.395, -0.018, 0.297, -0.230, 0.350, 0.139],
    [0.395, 1, -0.501, 0.103, 0.226, 0.111, 0.209],
    [-0.018, -0.501, 1, 0.294, 0.076, 0.294, -0.066],
    [0.297, 0.103, 0.294, 1, -0.227, 0.348, -0.208],
    [-0.230, 0.226, 0.076, -0.227, 1, 0.043, 0.105],
    [0.350, 0.111, 0.294, 0.348, 0.043, 1, 0.039],
    [0.139, 0.209, -0.066, -0.208, 0.105, 0.039, 1],
]


def reference_spec_dict(rows=100_000, replicates=100, seed=20230101) -> dict:
    """The seven-column benchmark: X1..X4 normal, A and B sensitive, Y outcome."""
    return {
        "marginals": [
            {"name": "X1", "dist": "normal", "mean": 2.0, "sd": 0.6},
            {"name": "X2", "dist": "normal", "mean": 0.2, "sd": 0.3},
            {"name": "X3", "dist": "normal", "mean": -0.3, "sd": 2.0},
            {"name": "X4", "dist": "normal", "mean": 0.7, "sd": 0.4},
            {"name": "A", "dist": "bernoulli", "p": 0.3},
            {"name": "B", "dist": "bernoulli", "p": 0.9},
            {"name": "Y", "dist": "bernoulli", "p": 0.2},
        ],
        "roles": {"X1": "feature", "X2": "feature", "X3": "feature", "X4": "feature",
                  "A": "sensitive", "B": "sensitive", "Y": "outcome"},
        "latent": {"target_corr": REFERENCE_TARGET_CORRELATION, "binary_pairs": "first_order"},
        "rows": rows,
        "replicates": replicates,
        "seed": seed,
    }


def reference_spec(rows=100_000, replicates=100, seed=20230101) -> SimulationSpec:
    return SimulationSpec.from_dict(reference_spec_dict(rows, replicates, seed))
