"""Synthetic worlds and evaluation metrics.

Worlds follow a fixed recipe: class-generative variables drawn from a
4-class Gaussian mixture with Wishart-sampled covariances, redundant
variables built as noisy sums of two generative parents, and noise variables
independent of the labels. The training view hides some classes and most
variables; the test view sees everything. Metrics are the adjusted Rand
index and the error rate after one-to-one class matching.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gaussian import cholesky_pd
from .rng import child_rng

#: Per-class mean ranges and Wishart setup of the 4-class recipe. Scale tags:
#: dense (unit diagonal, 0.7 off-diagonal), identity, and mid (0.5 off-diagonal).
CLASS_MEAN_RANGES = ((-7.0, 7.0), (-4.5, 4.5), (-0.5, 0.5), (-10.0, 10.0))
CLASS_WISHART_DF_OFFSETS = (0, 2, 1, 0)
CLASS_WISHART_SCALES = ("dense", "identity", "mid", "identity")
MIXING_WEIGHTS = (0.3, 0.4, 0.4, 0.3)   # normalized to sum 1 at generation


@dataclass
class ScenarioConfig:
    """Recipe for one synthetic world."""

    n_gen: int
    n_cor: int
    n_noi: int
    train_size: int
    test_size: int
    hidden_classes_removed: int = 2
    observed_variable_rule: str = "1.a"
    noi_correlated: bool = True
    seed: int = 0
    mixing: tuple = MIXING_WEIGHTS

    def __post_init__(self):
        if self.n_gen < 2:
            raise ValueError("need at least 2 generative variables (Cor needs two parents)")
        if not 0 <= self.hidden_classes_removed < len(self.mixing):
            raise ValueError("hidden_classes_removed must be below the class count")

    @property
    def n_classes(self) -> int:
        return len(self.mixing)

    @property
    def n_vars(self) -> int:
        return self.n_gen + self.n_cor + self.n_noi

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        path = Path(path)
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        else:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        if "mixing" in doc:
            doc["mixing"] = tuple(doc["mixing"])
        return cls(**doc)


@dataclass
class GeneratedWorld:
    x_train: np.ndarray
    labels_train: np.ndarray
    y_test: np.ndarray
    labels_test: np.ndarray
    variable_roles: list[str]            # per test column: Gen | Cor | Noi
    observed_in_training: np.ndarray     # bool mask over test columns
    variable_names: list[str]
    observed_classes: list[int]
    config: ScenarioConfig

    @property
    def observed_names(self) -> list[str]:
        return [v for v, m in zip(self.variable_names, self.observed_in_training) if m]


def sample_wishart(df: float, scale: np.ndarray, rng: np.random.Generator
                   ) -> np.ndarray:
    """Wishart draw via the Bartlett decomposition; always positive definite."""
    scale = np.asarray(scale, dtype=float)
    dim = scale.shape[0]
    if df < dim:
        raise ValueError(f"degrees of freedom {df} below dimension {dim}")
    chol = cholesky_pd(scale)
    a = np.zeros((dim, dim))
    for i in range(dim):
        a[i, i] = np.sqrt(rng.chisquare(df - i))
        a[i, :i] = rng.normal(size=i)
    la = chol @ a
    return la @ la.T


def _scale_matrix(tag: str, dim: int) -> np.ndarray:
    if tag == "identity":
        return np.eye(dim)
    off = {"dense": 0.7, "mid": 0.5}[tag]
    return np.full((dim, dim), off) + (1.0 - off) * np.eye(dim)


def _observed_columns(config: ScenarioConfig, rng: np.random.Generator
                      ) -> np.ndarray:
    """Training-visible column mask according to the scenario rule.

    Rules mirror the three canonical setups: "1.a" observes every generative
    variable plus random others up to twice the generative count, "1.b" half
    of the generative and some redundant ones, "1.c" only two generative
    variables. Everything else is drawn among the remaining columns.
    """
    n_gen, total = config.n_gen, config.n_vars
    n_observed = min(2 * n_gen, total)
    rule = config.observed_variable_rule
    if rule == "1.a":
        observed = list(range(n_gen))
    elif rule == "1.b":
        observed = sorted(rng.choice(n_gen, size=n_gen // 2, replace=False).tolist())
        cor_idx = np.arange(n_gen, n_gen + config.n_cor)
        observed += sorted(rng.choice(cor_idx, size=min(n_gen // 2, len(cor_idx)),
                                      replace=False).tolist())
    elif rule == "1.c":
        observed = sorted(rng.choice(n_gen, size=2, replace=False).tolist())
    else:
        raise ValueError(f"unknown observed-variable rule {rule!r}")
    rest = np.setdiff1d(np.arange(n_gen, total), np.asarray(observed, dtype=int))
    extra = sorted(rng.choice(rest, size=n_observed - len(observed),
                              replace=False).tolist())
    mask = np.zeros(total, dtype=bool)
    mask[np.asarray(observed + extra, dtype=int)] = True
    return mask


def _draw_rows(labels: np.ndarray, means, covs, parents, noi_cov,
               config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    n = labels.shape[0]
    gen = np.empty((n, config.n_gen))
    for c in range(config.n_classes):
        rows = labels == c
        if rows.any():
            gen[rows] = rng.multivariate_normal(means[c], covs[c],
                                                size=int(rows.sum()), method="cholesky")
    cols = [gen]
    if config.n_cor:
        cor = np.column_stack([
            gen[:, g1] + gen[:, g2] + rng.normal(size=n) for g1, g2 in parents
        ])
        cols.append(cor)
    if config.n_noi:
        cols.append(rng.multivariate_normal(np.zeros(config.n_noi), noi_cov,
                                            size=n, method="cholesky"))
    return np.hstack(cols)


def generate_world(config: ScenarioConfig) -> GeneratedWorld:
    """Generate one training/test pair; bit-reproducible for a given seed."""
    rng = child_rng(config.seed, 1)
    c = config.n_classes
    tau = np.asarray(config.mixing, dtype=float)
    tau = tau / tau.sum()

    means = [rng.uniform(lo, hi, size=config.n_gen)
             for lo, hi in CLASS_MEAN_RANGES[:c]]
    covs = [sample_wishart(config.n_gen + CLASS_WISHART_DF_OFFSETS[i],
                           _scale_matrix(CLASS_WISHART_SCALES[i], config.n_gen), rng)
            for i in range(c)]
    parents = [tuple(rng.choice(config.n_gen, size=2, replace=False))
               for _ in range(config.n_cor)]
    noi_cov = (_scale_matrix("mid", config.n_noi) if config.noi_correlated
               else np.eye(config.n_noi)) if config.n_noi else np.zeros((0, 0))

    observed_classes = np.sort(rng.choice(
        c, size=c - config.hidden_classes_removed, replace=False))
    tau_train = tau[observed_classes] / tau[observed_classes].sum()
    labels_train = observed_classes[rng.choice(len(observed_classes),
                                               size=config.train_size, p=tau_train)]
    labels_test = rng.choice(c, size=config.test_size, p=tau)

    x_full = _draw_rows(labels_train, means, covs, parents, noi_cov, config, rng)
    y_test = _draw_rows(labels_test, means, covs, parents, noi_cov, config, rng)

    mask = _observed_columns(config, rng)
    roles = (["Gen"] * config.n_gen + ["Cor"] * config.n_cor + ["Noi"] * config.n_noi)
    width = max(2, len(str(config.n_vars)))
    counters = {"Gen": 0, "Cor": 0, "Noi": 0}
    names = []
    for role in roles:
        counters[role] += 1
        names.append(f"{role.lower()}{counters[role]:0{width}d}")

    return GeneratedWorld(
        x_train=x_full[:, mask], labels_train=labels_train, y_test=y_test,
        labels_test=labels_test, variable_roles=roles,
        observed_in_training=mask, variable_names=names,
        observed_classes=[int(v) for v in observed_classes], config=config)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _contingency(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"partition lengths differ: {a.shape[0]} vs {b.shape[0]}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def ari(a, b) -> float:
    """Adjusted Rand index (Hubert-Arabie) between two partitions."""
    table = _contingency(a, b)
    n = table.sum()
    if n < 2:
        return 1.0   # no sample pairs to disagree on

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb2(n)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def matched_error(truth, pred) -> float:
    """Error rate after greedy one-to-one matching of predicted to true labels.

    Contingency cells are claimed in order of descending count (ties broken
    by label order); rows of any unmatched predicted class all count as
    errors.
    """
    table = _contingency(truth, pred)
    n = int(table.sum())
    cells = sorted(
        ((int(table[i, j]), i, j)
         for i in range(table.shape[0]) for j in range(table.shape[1])
         if table[i, j] > 0),
        key=lambda c: (-c[0], c[2], c[1]))
    matched_truth: set[int] = set()
    matched_pred: set[int] = set()
    correct = 0
    for count, i, j in cells:
        if i in matched_truth or j in matched_pred:
            continue
        matched_truth.add(i)
        matched_pred.add(j)
        correct += count
    return float(n - correct) / n


# ---------------------------------------------------------------------------
# World and metrics I/O
# ---------------------------------------------------------------------------

def write_matrix_csv(path, header: list[str], rows: np.ndarray,
                     labels=None, label_column: str = "label") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header) + ([label_column] if labels is not None else []))
        for i in range(rows.shape[0]):
            row = [repr(float(v)) for v in rows[i]]
            if labels is not None:
                row.append(str(labels[i]))
            writer.writerow(row)


def export_world(world: GeneratedWorld, out_dir) -> dict[str, str]:
    """Write train/test CSVs and the roles sidecar; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_path = out / "train.csv"
    test_path = out / "test.csv"
    roles_path = out / "roles.json"
    write_matrix_csv(train_path, world.observed_names, world.x_train,
                     labels=world.labels_train)
    write_matrix_csv(test_path, world.variable_names, world.y_test)
    sidecar = {
        "variables": [
            {"name": v, "role": r, "observed_in_training": bool(m)}
            for v, r, m in zip(world.variable_names, world.variable_roles,
                               world.observed_in_training)
        ],
        "observed_classes": world.observed_classes,
        "labels_test": [int(v) for v in world.labels_test],
        "seed": world.config.seed,
        "scenario": world.config.observed_variable_rule,
    }
    with open(roles_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return {"train": str(train_path), "test": str(test_path), "roles": str(roles_path)}


METRICS_FIELDS = ("replicate", "scenario", "method", "ari", "error", "H_selected")


def write_metrics_csv(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for key in ("ari", "error"):
                if isinstance(out.get(key), float):
                    out[key] = repr(out[key])
            writer.writerow(out)
