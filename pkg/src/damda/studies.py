"""Replicated end-to-end studies: hidden-class detection and variable selection.

Each study draws per-replicate worlds from seeds derived off one master
seed, runs the full learn/discover (or learn/select) pipeline, and collects
metric rows suitable for the shared report CSV. Replicates are independent
and may run in parallel; results are always assembled in replicate order, so
output files do not depend on the worker count.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .discovery import e_step, map_assignments, select_h
from .edda import fit_edda
from .rng import child_rng
from .simulate import ScenarioConfig, ari, generate_world, matched_error
from .varsel import SearchConfig, greedy_search, model_column_order


# ---------------------------------------------------------------------------
# Hidden-class detection study
# ---------------------------------------------------------------------------

@dataclass
class DetectionStudyConfig:
    replicates: int = 20
    seed: int = 1
    train_size: int = 300
    test_size: int = 400
    p: int = 3
    q: int = 2
    separation: float = 6.0          # pairwise class-mean distance, pooled sd units
    n_hidden_true: int = 2
    h_range: tuple = (0, 1, 2, 3, 4)


def _detection_world(cfg: DetectionStudyConfig, replicate: int):
    """Four unit-covariance classes at guaranteed pairwise separation."""
    rng = child_rng(cfg.seed, 100, replicate)
    r = cfg.p + cfg.q
    c = 4
    # Scaled standard basis vectors: pairwise distance = separation exactly.
    means = np.zeros((c, r))
    for i in range(c):
        means[i, i % r] = cfg.separation / np.sqrt(2.0)
        means[i] += 0.1 * i   # break symmetry so no two means collide when c > r
    observed = np.sort(rng.choice(c, size=c - cfg.n_hidden_true, replace=False))

    labels_train = observed[rng.integers(0, len(observed), size=cfg.train_size)]
    x_train = means[labels_train][:, :cfg.p] + rng.normal(
        size=(cfg.train_size, cfg.p))
    labels_test = rng.integers(0, c, size=cfg.test_size)
    y_test = means[labels_test] + rng.normal(size=(cfg.test_size, r))
    return x_train, labels_train, y_test, labels_test


def _detection_replicate(args) -> dict:
    cfg, replicate = args
    x_train, labels_train, y_test, labels_test = _detection_world(cfg, replicate)
    learned = fit_edda(x_train, labels_train)
    best = select_h(y_test, learned, cfg.h_range, seed=cfg.seed + replicate)
    assigned = map_assignments(e_step(y_test, best), best.K, best.H)
    return {
        "replicate": replicate,
        "scenario": f"detection-{cfg.separation:g}sigma",
        "method": "damda",
        "ari": float(ari(labels_test, assigned)),
        "error": float(matched_error(labels_test, assigned)),
        "H_selected": best.H,
    }


def detection_study(cfg: DetectionStudyConfig, jobs: int = 1) -> list[dict]:
    tasks = [(cfg, rep) for rep in range(cfg.replicates)]
    return _run_tasks(_detection_replicate, tasks, jobs)


# ---------------------------------------------------------------------------
# Variable-selection study
# ---------------------------------------------------------------------------

@dataclass
class SelectionStudyConfig:
    replicates: int = 10
    seed: int = 2
    n_gen: int = 10
    n_cor: int = 10
    n_noi: int = 20
    train_size: int = 200
    test_size: int = 200
    hidden_classes_removed: int = 2
    observed_variable_rule: str = "1.a"
    search: SearchConfig = field(
        default_factory=lambda: SearchConfig(h_range=(0, 1, 2, 3)))


def _selection_replicate(args) -> dict:
    cfg, replicate = args
    scenario = ScenarioConfig(
        n_gen=cfg.n_gen, n_cor=cfg.n_cor, n_noi=cfg.n_noi,
        train_size=cfg.train_size, test_size=cfg.test_size,
        hidden_classes_removed=cfg.hidden_classes_removed,
        observed_variable_rule=cfg.observed_variable_rule,
        seed=int(np.int64(cfg.seed) * 10_000 + replicate))
    world = generate_world(scenario)
    learned = fit_edda(world.x_train, world.labels_train,
                       variable_names=world.observed_names)
    search = SearchConfig(s=cfg.search.s, g=cfg.search.g, h_range=cfg.search.h_range,
                          max_steps=cfg.search.max_steps, seed=cfg.seed + replicate,
                          em_max_iter=cfg.search.em_max_iter,
                          em_rel_tol=cfg.search.em_rel_tol)
    result = greedy_search(learned, world.y_test, world.variable_names, search)

    order = model_column_order(learned, result.selected)
    cols = [world.variable_names.index(v) for v in order]
    assigned = map_assignments(e_step(world.y_test[:, cols], result.model),
                               result.model.K, result.model.H)
    role_of = dict(zip(world.variable_names, world.variable_roles))
    counts = {"Gen": 0, "Cor": 0, "Noi": 0}
    for v in result.selected:
        counts[role_of[v]] += 1
    return {
        "replicate": replicate,
        "scenario": cfg.observed_variable_rule,
        "method": "damda-varsel",
        "ari": float(ari(world.labels_test, assigned)),
        "error": float(matched_error(world.labels_test, assigned)),
        "H_selected": result.h,
        "selected": list(result.selected),
        "n_gen_selected": counts["Gen"],
        "n_cor_selected": counts["Cor"],
        "n_noi_selected": counts["Noi"],
        "variable_names": list(world.variable_names),
        "variable_roles": list(world.variable_roles),
    }


def selection_study(cfg: SelectionStudyConfig, jobs: int = 1) -> list[dict]:
    tasks = [(cfg, rep) for rep in range(cfg.replicates)]
    return _run_tasks(_selection_replicate, tasks, jobs)


def selection_frequencies(rows: list[dict]) -> list[dict]:
    """Per-variable selection counts across the replicates of one study."""
    if not rows:
        return []
    names = rows[0]["variable_names"]
    roles = rows[0]["variable_roles"]
    counts = {v: 0 for v in names}
    for row in rows:
        for v in row["selected"]:
            counts[v] += 1
    n = len(rows)
    return [{"variable": v, "role": r, "selected_count": counts[v],
             "replicates": n, "frequency": counts[v] / n}
            for v, r in zip(names, roles)]


def metrics_rows(rows: list[dict]) -> list[dict]:
    """Strip study rows down to the shared report-CSV fields."""
    keep = ("replicate", "scenario", "method", "ari", "error", "H_selected")
    return [{k: row[k] for k in keep} for row in rows]


def _run_tasks(fn, tasks, jobs: int) -> list[dict]:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with multiprocessing.get_context("spawn").Pool(min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
