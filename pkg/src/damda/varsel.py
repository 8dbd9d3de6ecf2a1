"""Greedy inductive variable selection.

At every step a candidate variable is judged by comparing two models: one
where it carries class information (the discovery model refitted with the
variable included, BIC maximized over the hidden-class range) and one where
it is redundant (discovery model without it, plus a stepwise linear
regression of the candidate on the already-selected variables). The search
alternates one best-add and one best-remove attempt per round. Variables the
classifier was trained on enter and leave through marginal restriction of
the learned parameters; test-only variables enter through the augmented side
of the discovery fit, so the learned blocks are never refit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .discovery import DamdaModel, EmError, select_h
from .edda import EddaModel, marginal_submodel
from .gaussian import InvalidAugmentedCovariance, NotPositiveDefinite
from .rng import child_rng

log = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))

#: Residual variance floor for the redundancy regression, relative to the
#: response variance; keeps perfect predictors from yielding -inf BIC terms.
RESIDUAL_FLOOR_REL = 1e-10


class SelectionError(RuntimeError):
    """The variable-selection search could not be started or completed."""


@dataclass
class SearchConfig:
    """Tuning knobs of the greedy search."""

    s: int = 10                      # seed subset size
    g: int | None = None             # univariate mixture cap; default K + 2
    h_range: tuple = (0, 1, 2, 3)
    max_steps: int = 20              # rounds; each is one add + one remove attempt
    seed: int = 0
    em_max_iter: int = 500
    em_rel_tol: float = 1e-7


@dataclass
class VarSelState:
    """Current partition of the test variables during the search."""

    selected: list[str]
    candidates: set[str]
    rejected: set[str]               # permanently dropped (fit failures)
    provenance: dict[str, str]       # variable -> 'trained' | 'test-only'
    history: list[dict] = field(default_factory=list)
    current_best: tuple | None = None   # (H, DamdaModel, bic)


@dataclass
class CandidateDecision:
    variable: str
    action: str                      # 'add' | 'remove'
    accept: bool
    delta_bic: float | None
    bic_class_with: float | None = None
    bic_class_without: float | None = None
    bic_reg: float | None = None
    fit: tuple | None = None         # (H, DamdaModel, bic) for the post-action set
    failure: str | None = None


@dataclass
class SelectionResult:
    seed: list[str]
    selected: list[str]
    h: int
    bic: float
    model: DamdaModel
    state: VarSelState


# ---------------------------------------------------------------------------
# Initial subset ranking
# ---------------------------------------------------------------------------

def _gmm1d_best_loglik(x: np.ndarray, g: int, rng: np.random.Generator,
                       restarts: int = 5, max_iter: int = 200,
                       tol: float = 1e-8) -> float:
    """Best log-likelihood of a g-component univariate Gaussian mixture."""
    n = x.shape[0]
    span = float(x.max() - x.min())
    floor = max(1e-8 * span**2, 1e-300)
    if g == 1:
        var = max(float(x.var()), floor)
        return float(-0.5 * n * (_LOG_2PI + np.log(var) + 1.0))
    best = -np.inf
    var0 = max(float(x.var()), floor)
    for _ in range(restarts):
        means = rng.choice(x, size=g, replace=n < g).astype(float)
        variances = np.full(g, var0)
        weights = np.full(g, 1.0 / g)
        loglik = -np.inf
        for _ in range(max_iter):
            with np.errstate(divide="ignore"):
                logcomp = (np.log(weights) - 0.5 * (_LOG_2PI + np.log(variances))
                           - 0.5 * (x[:, None] - means) ** 2 / variances)
            lse = logsumexp(logcomp, axis=1)
            new_loglik = float(lse.sum())
            resp = np.exp(logcomp - lse[:, None])
            nk = np.maximum(resp.sum(axis=0), 1e-12)
            weights = nk / n
            means = (resp * x[:, None]).sum(axis=0) / nk
            variances = np.maximum(
                (resp * (x[:, None] - means) ** 2).sum(axis=0) / nk, floor)
            if abs(new_loglik - loglik) < tol * (abs(new_loglik) + 1.0):
                loglik = new_loglik
                break
            loglik = new_loglik
        best = max(best, loglik)
    return best


def multimodality_score(x: np.ndarray, g_max: int, rng: np.random.Generator) -> float:
    """BIC gap between the best <=g_max-component mixture and a single Gaussian.

    Constant columns score -inf so they rank last.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if float(x.max() - x.min()) == 0.0:
        return -np.inf
    logn = float(np.log(n))
    best_bic = -np.inf
    for g in range(1, g_max + 1):
        ll = _gmm1d_best_loglik(x, g, rng)
        bic = 2.0 * ll - (3 * g - 1) * logn
        best_bic = max(best_bic, bic)
        if g == 1:
            bic_single = bic
    return best_bic - bic_single


def rank_initial_subset(y: np.ndarray, g_max: int, s: int,
                        seed: int = 0) -> list[int]:
    """Rank columns by mixture-vs-single-Gaussian BIC gap; return the top ``s``.

    ``y`` holds only the variables observed during training. Ties keep the
    lower column index first.
    """
    y = np.asarray(y, dtype=float)
    if not 1 <= s <= y.shape[1]:
        raise ValueError(f"subset size {s} out of range for {y.shape[1]} columns")
    scores = [multimodality_score(y[:, j], g_max, child_rng(seed, 11, j))
              for j in range(y.shape[1])]
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    return order[:s]


# ---------------------------------------------------------------------------
# Redundancy regression
# ---------------------------------------------------------------------------

def _regression_bic(y_prop: np.ndarray, design: np.ndarray,
                    floor: float) -> float | None:
    """BIC of a Gaussian linear fit; None when the design is rank-deficient."""
    n = y_prop.shape[0]
    beta, _, rank, _ = np.linalg.lstsq(design, y_prop, rcond=None)
    if rank < design.shape[1]:
        return None
    rss = float(np.sum((y_prop - design @ beta) ** 2))
    sigma2 = max(rss / n, floor)
    loglik = -0.5 * n * (_LOG_2PI + np.log(sigma2) + 1.0)
    eta = design.shape[1] + 1          # coefficients incl. intercept + variance
    return 2.0 * loglik - eta * float(np.log(n))


def stepwise_regression_bic(y_prop: np.ndarray, y_class: np.ndarray
                            ) -> tuple[list[int], float]:
    """Stepwise forward-backward regression of one column on the selected set.

    Returns the chosen predictor indices (into the columns of ``y_class``)
    and the BIC of the best model found. Exactly collinear candidates are
    dropped (the later-indexed predictor loses); the residual variance is
    floored at ``RESIDUAL_FLOOR_REL`` times the response variance.
    """
    y_prop = np.asarray(y_prop, dtype=float).reshape(-1)
    y_class = np.asarray(y_class, dtype=float)
    if y_class.size == 0:
        y_class = y_class.reshape(y_prop.shape[0], 0)
    n = y_prop.shape[0]
    floor = max(RESIDUAL_FLOOR_REL * float(y_prop.var()), 1e-300)
    intercept = np.ones((n, 1))

    def design(cols):
        return np.hstack([intercept] + [y_class[:, [j]] for j in cols])

    chosen: list[int] = []
    best_bic = _regression_bic(y_prop, intercept, floor)
    while True:
        improved = False
        additions = [j for j in range(y_class.shape[1]) if j not in chosen]
        best_add, best_add_bic = None, best_bic
        for j in additions:
            bic = _regression_bic(y_prop, design(chosen + [j]), floor)
            if bic is not None and bic > best_add_bic:
                best_add, best_add_bic = j, bic
        if best_add is not None:
            chosen.append(best_add)
            best_bic = best_add_bic
            improved = True
        best_drop, best_drop_bic = None, best_bic
        for j in chosen:
            cols = [c for c in chosen if c != j]
            bic = _regression_bic(y_prop, design(cols), floor)
            if bic is not None and bic > best_drop_bic:
                best_drop, best_drop_bic = j, bic
        if best_drop is not None:
            chosen.remove(best_drop)
            best_bic = best_drop_bic
            improved = True
        if not improved:
            return sorted(chosen), best_bic


# ---------------------------------------------------------------------------
# Classification-model BIC with caching
# ---------------------------------------------------------------------------

def model_column_order(learned: EddaModel, varset) -> list[str]:
    """Column order the discovery fit uses for a variable set.

    Trained variables first, in learned order; test-only variables after,
    sorted by name so the fit never depends on input column order.
    """
    sel = set(varset)
    trained = set(learned.variable_names)
    p_names = [v for v in learned.variable_names if v in sel]
    q_names = sorted(v for v in sel if v not in trained)
    return p_names + q_names


class _ClassModelCache:
    """BIC of the discovery model per selected-variable set, fitted lazily.

    Trained variables are pulled from the learned classifier by marginal
    restriction (learned order); test-only variables form the augmented side,
    ordered by name for determinism.
    """

    def __init__(self, y: np.ndarray, names: list[str], learned: EddaModel,
                 config: SearchConfig):
        self.y = y
        self.names = list(names)
        self.col = {v: j for j, v in enumerate(self.names)}
        self.learned = learned
        self.trained = [v for v in learned.variable_names if v in self.col]
        self.config = config
        self._store: dict[frozenset, tuple[int, DamdaModel, float]] = {}

    def fit(self, varset) -> tuple[int, DamdaModel, float]:
        key = frozenset(varset)
        if key in self._store:
            return self._store[key]
        order = model_column_order(self.learned, key)
        p_names = [v for v in order if v in set(self.learned.variable_names)]
        if not p_names:
            raise SelectionError("selected set contains no trained variables")
        sub = marginal_submodel(
            self.learned, [self.learned.variable_names.index(v) for v in p_names])
        cols = [self.col[v] for v in order]
        best = select_h(self.y[:, cols], sub, self.config.h_range,
                        seed=self.config.seed, max_iter=self.config.em_max_iter,
                        rel_tol=self.config.em_rel_tol)
        entry = (best.H, best, float(best.bic))
        self._store[key] = entry
        return entry


def evaluate_candidate(state: VarSelState, variable: str, action: str,
                       learned: EddaModel, y: np.ndarray, names: list[str],
                       h_range, *, cache: _ClassModelCache | None = None,
                       config: SearchConfig | None = None) -> CandidateDecision:
    """Compare the class-relevance and redundancy models for one variable.

    An add is accepted when BIC(class model with the variable) exceeds
    BIC(class model without) + BIC(regression); the inequality flips for a
    removal. The reported delta is positive exactly when the action is
    accepted.
    """
    if config is None:
        config = SearchConfig(h_range=tuple(h_range))
    if cache is None:
        cache = _ClassModelCache(np.asarray(y, dtype=float), names, learned, config)
    if action == "add":
        if variable not in state.candidates:
            raise ValueError(f"{variable!r} is not a candidate")
        with_set = state.selected + [variable]
        without_set = state.selected
    elif action == "remove":
        if variable not in state.selected:
            raise ValueError(f"{variable!r} is not selected")
        with_set = state.selected
        without_set = [v for v in state.selected if v != variable]
    else:
        raise ValueError(f"unknown action {action!r}")

    try:
        h_with, model_with, bic_with = cache.fit(with_set)
        h_without, model_without, bic_without = cache.fit(without_set)
    except (EmError, SelectionError, NotPositiveDefinite,
            InvalidAugmentedCovariance, ValueError) as exc:
        return CandidateDecision(variable=variable, action=action, accept=False,
                                 delta_bic=None, failure=str(exc))

    reg_cols = [cache.col[v] for v in without_set]
    _, bic_reg = stepwise_regression_bic(cache.y[:, cache.col[variable]],
                                         cache.y[:, reg_cols])
    diff = bic_with - (bic_without + bic_reg)   # BIC_1 - BIC_2
    if action == "add":
        accept = diff > 0
        delta = diff
        fit = (h_with, model_with, bic_with) if accept else None
    else:
        accept = diff < 0
        delta = -diff
        fit = (h_without, model_without, bic_without) if accept else None
    return CandidateDecision(variable=variable, action=action, accept=accept,
                             delta_bic=float(delta), bic_class_with=bic_with,
                             bic_class_without=bic_without, bic_reg=bic_reg,
                             fit=fit)


# ---------------------------------------------------------------------------
# Greedy search
# ---------------------------------------------------------------------------

def greedy_search(learned: EddaModel, y: np.ndarray, names: list[str],
                  config: SearchConfig | None = None) -> SelectionResult:
    """Stepwise forward-backward variable selection around the discovery model.

    The seed is the top-ranked subset of trained variables; every round tries
    the single best addition and the single best removal, and the search
    stops after a round with no change or when the round budget runs out.
    """
    config = config or SearchConfig()
    y = np.asarray(y, dtype=float)
    names = list(names)
    if y.shape[1] != len(names):
        raise ValueError("names length does not match column count")
    missing = [v for v in learned.variable_names if v not in names]
    if missing:
        raise SelectionError(f"test data lacks trained variables: {missing}")

    g_max = config.g if config.g is not None else learned.K + 2
    if g_max <= learned.K:
        raise ValueError(f"univariate mixture cap {g_max} must exceed K={learned.K}")
    cache = _ClassModelCache(y, names, learned, config)
    trained = cache.trained
    s = min(config.s, len(trained))
    trained_cols = [cache.col[v] for v in trained]
    ranked = rank_initial_subset(y[:, trained_cols], g_max, s, seed=config.seed)
    seed_names = [trained[j] for j in ranked]

    while True:
        try:
            cache.fit(seed_names)
            break
        except (EmError, SelectionError, NotPositiveDefinite,
                InvalidAugmentedCovariance) as exc:
            if len(seed_names) <= 2:
                raise SelectionError(f"seed fit failed at minimum size: {exc}") from exc
            log.info("seed fit failed (%s); dropping %r", exc, seed_names[-1])
            seed_names = seed_names[:-1]

    trained_set = set(trained)
    provenance = {v: ("trained" if v in trained_set else "test-only") for v in names}
    state = VarSelState(selected=list(seed_names),
                        candidates=set(names) - set(seed_names),
                        rejected=set(), provenance=provenance)
    step = 0

    for _ in range(config.max_steps):
        changed = False

        step += 1
        best: CandidateDecision | None = None
        for var in sorted(state.candidates):
            dec = evaluate_candidate(state, var, "add", learned, y, names,
                                     config.h_range, cache=cache, config=config)
            if dec.failure is not None:
                state.candidates.discard(var)
                state.rejected.add(var)
                state.history.append({"step": step, "var": var, "action": "reject",
                                      "delta_bic": None})
                log.info("candidate %r rejected: %s", var, dec.failure)
                continue
            if best is None or dec.delta_bic > best.delta_bic:
                best = dec
        if best is not None:
            if best.accept:
                state.selected.append(best.variable)
                state.candidates.discard(best.variable)
                state.current_best = best.fit
                state.history.append({"step": step, "var": best.variable,
                                      "action": "add",
                                      "delta_bic": best.delta_bic})
                changed = True
            else:
                state.history.append({"step": step, "var": best.variable,
                                      "action": "reject",
                                      "delta_bic": best.delta_bic})

        step += 1
        best = None
        n_trained_selected = sum(1 for v in state.selected if v in trained_set)
        for var in sorted(state.selected):
            if len(state.selected) <= 2:
                break
            if var in trained_set and n_trained_selected == 1:
                continue   # learned blocks need at least one trained variable
            dec = evaluate_candidate(state, var, "remove", learned, y, names,
                                     config.h_range, cache=cache, config=config)
            if dec.failure is not None:
                continue
            if best is None or dec.delta_bic > best.delta_bic:
                best = dec
        if best is not None:
            if best.accept:
                state.selected.remove(best.variable)
                state.candidates.add(best.variable)
                state.current_best = best.fit
                state.history.append({"step": step, "var": best.variable,
                                      "action": "remove",
                                      "delta_bic": best.delta_bic})
                changed = True
            else:
                state.history.append({"step": step, "var": best.variable,
                                      "action": "reject",
                                      "delta_bic": best.delta_bic})

        if not changed:
            break

    h_best, model_best, bic_best = cache.fit(state.selected)
    state.current_best = (h_best, model_best, bic_best)
    return SelectionResult(seed=list(seed_names), selected=list(state.selected),
                           h=h_best, bic=bic_best, model=model_best, state=state)


def selection_report(result: SelectionResult) -> dict:
    return {
        "seed": list(result.seed),
        "history": [dict(row) for row in result.state.history],
        "selected": list(result.selected),
        "H": result.h,
        "bic": float(result.bic),
    }
