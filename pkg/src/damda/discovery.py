"""Discovery phase: EM over unlabelled test data with frozen learned blocks.

The test data carries R = P + Q variables, the first P being the ones the
classifier was trained on. Known-class parameters are partitioned: the
P-block mean/covariance stay bitwise equal to the learned values, while the
Q-side mean, covariance and cross-covariance are re-estimated each M step by
conditional maximization (fit the conditional of the new variables given the
observed ones, then recompose the joint). Hidden classes are unconstrained
Gaussians on all R variables. The number of hidden classes is chosen by BIC.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.linalg import cho_solve
from scipy.special import logsumexp

from . import jsonio
from .edda import EddaModel
from .gaussian import (
    GaussianParams,
    InvalidAugmentedCovariance,
    NotPositiveDefinite,
    PartitionedCov,
    assemble_cov,
    is_positive_definite,
    kl_match_score,
    log_density_rows,
    symmetrize,
)
from .rng import child_rng

log = logging.getLogger(__name__)

#: A component whose responsibility mass drops below this fraction of N has
#: collapsed; one perturbed restart is attempted before giving up.
COLLAPSE_FRACTION = 1e-6

#: Floor for the regularization strength coefficient; the nominal log(R)/N
#: vanishes in the degenerate single-variable case R = 1.
GAMMA_FLOOR = 1e-8


class EmError(RuntimeError):
    """EM could not produce a valid fit."""


class ComponentCollapse(EmError):
    def __init__(self, component: int, mass: float):
        super().__init__(f"component {component} collapsed (mass {mass:.3g})")
        self.component = component


@dataclass
class ScatterPartition:
    """Blocks of a weighted class scatter matrix and the effective class size.

    ``w`` is the block over the training variables, ``u`` the block over the
    additional variables, ``v`` the cross products.
    """

    w: np.ndarray
    v: np.ndarray
    u: np.ndarray
    n_eff: float

    def __post_init__(self):
        self.w = symmetrize(self.w)
        self.u = symmetrize(np.asarray(self.u, dtype=float).reshape(self.v.shape[1],
                                                                    self.v.shape[1]))
        self.v = np.asarray(self.v, dtype=float)

    @classmethod
    def from_scatter(cls, o: np.ndarray, p: int, n_eff: float) -> "ScatterPartition":
        return cls(o[:p, :p], o[:p, p:], o[p:, p:], float(n_eff))


@dataclass
class KnownClassState:
    """One training-time class inside the discovery model.

    ``fixed`` is the learned P-variable Gaussian and is never re-estimated;
    ``aug_mean`` / ``aug_cov`` carry the re-estimated Q-side parameters.
    """

    fixed: GaussianParams
    aug_mean: np.ndarray
    aug_cov: PartitionedCov
    assembled: GaussianParams = field(init=False)

    def __post_init__(self):
        self.aug_mean = np.asarray(self.aug_mean, dtype=float).reshape(-1)
        if self.aug_cov.p != self.fixed.d or self.aug_cov.q != self.aug_mean.shape[0]:
            raise ValueError("augmented block dimensions are inconsistent")
        mean = np.concatenate([self.fixed.mean, self.aug_mean])
        self.assembled = GaussianParams(mean, assemble_cov(self.aug_cov))


@dataclass
class EmDiagnostics:
    """Optional per-iteration byproducts kept for verification."""

    covariances: list = field(default_factory=list)   # (iteration, component, cov)
    regularizations: list = field(default_factory=list)
    restarts: int = 0


@dataclass
class DamdaModel:
    """Discovery-phase state: frozen learned blocks plus estimated extensions."""

    K: int
    H: int
    tau: np.ndarray
    known_classes: list[KnownClassState]
    hidden_classes: list[GaussianParams]
    loglik_trace: list[float] = field(default_factory=list)
    bic: float | None = None
    diagnostics: EmDiagnostics | None = None

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float).reshape(-1)
        if self.tau.shape[0] != self.K + self.H:
            raise ValueError("tau length does not match K + H")

    @property
    def P(self) -> int:
        return self.known_classes[0].fixed.d

    @property
    def Q(self) -> int:
        return self.known_classes[0].aug_cov.q

    @property
    def R(self) -> int:
        return self.P + self.Q

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]

    def component_params(self) -> list[GaussianParams]:
        return [ks.assembled for ks in self.known_classes] + list(self.hidden_classes)


# ---------------------------------------------------------------------------
# E step and log-likelihood
# ---------------------------------------------------------------------------

def _log_weighted_densities(y: np.ndarray, model: DamdaModel) -> np.ndarray:
    cols = []
    for tau_c, params in zip(model.tau, model.component_params()):
        with np.errstate(divide="ignore"):
            lw = np.log(tau_c)
        cols.append(lw + log_density_rows(y, params))
    return np.column_stack(cols)


def e_step(y: np.ndarray, model: DamdaModel) -> np.ndarray:
    """Posterior membership probabilities, shape (N, K+H), rows summing to 1."""
    lp = _log_weighted_densities(y, model)
    mx = lp.max(axis=1)
    bad = np.flatnonzero(~np.isfinite(mx))
    if bad.size:
        raise EmError(f"non-finite component density for row {int(bad[0])}")
    return np.exp(lp - logsumexp(lp, axis=1, keepdims=True))


def discovery_loglik(y: np.ndarray, model: DamdaModel) -> float:
    """Observed-data mixture log-likelihood of the test rows."""
    return float(np.sum(logsumexp(_log_weighted_densities(y, model), axis=1)))


# ---------------------------------------------------------------------------
# M step pieces
# ---------------------------------------------------------------------------

def m_step_mixing(t: np.ndarray) -> np.ndarray:
    """Mixing proportions re-estimated on the test data for all classes."""
    t = np.asarray(t, dtype=float)
    return t.sum(axis=0) / t.shape[0]


@dataclass
class RegularizationContext:
    """Inputs of the scatter regularization, plus an event sink.

    Regularization is lazy but sticky: a component's scatter is only touched
    once it fails the PD gate, and from then on that component stays
    regularized for the rest of the run. Re-deciding at every iteration lets
    the M-step objective flip between two surfaces, which can trap the EM in
    a limit cycle.
    """

    s: np.ndarray          # full-test-data covariance
    n_classes: int         # K + H
    n: int                 # test sample size
    events: list | None = None
    iteration: int = 0
    sticky: set = field(default_factory=set)

    def apply(self, o: np.ndarray, component: str) -> np.ndarray:
        self.sticky.add(component)
        o_reg = regularize_scatter(o, self.s, self.n_classes, self.n)
        if self.events is not None:
            self.events.append({
                "iteration": self.iteration,
                "component": component,
                "scatter": o.copy(),
                "s": np.asarray(self.s, dtype=float).copy(),
                "scatter_reg": o_reg.copy(),
            })
        return o_reg

    def apply_if_needed(self, o: np.ndarray, component: str) -> np.ndarray:
        if component in self.sticky or not is_positive_definite(o):
            return self.apply(o, component)
        return o


def regularize_scatter(o: np.ndarray, s: np.ndarray, n_classes: int,
                       n: int) -> np.ndarray:
    """Additively regularize a class scatter toward the full-data covariance.

    Returns ``o + s / det(s)^(1/R) * (gamma / n_classes)^(1/R)`` with
    ``gamma = log(R) / N``, floored at ``GAMMA_FLOOR`` since log(1) = 0 makes
    the nominal coefficient vanish for R = 1.
    """
    o = symmetrize(o)
    r = o.shape[0]
    s = symmetrize(s)
    if not is_positive_definite(s):
        s = s + 1e-8 * np.eye(r)
    gamma = max(np.log(r) / n, GAMMA_FLOOR)
    _, logdet = np.linalg.slogdet(s)
    det_pow = np.exp(logdet / r)
    return o + (s / det_pow) * (gamma / n_classes) ** (1.0 / r)


def m_step_hidden(y: np.ndarray, t: np.ndarray, col: int,
                  reg: RegularizationContext | None = None) -> GaussianParams:
    """Weighted mean and covariance of one hidden class.

    ``col`` indexes the class column in ``t`` (hidden class h sits at K + h).
    The scatter is regularized lazily when it fails the PD gate.
    """
    w = np.asarray(t, dtype=float)[:, col]
    n_eff = float(w.sum())
    mu = (w @ y) / n_eff
    dev = y - mu
    scatter = symmetrize((dev * w[:, None]).T @ dev)
    if reg is not None:
        scatter = reg.apply_if_needed(scatter, f"hidden[{col}]")
    try:
        return GaussianParams(mu, scatter / n_eff)
    except NotPositiveDefinite as exc:
        raise EmError(
            f"hidden-class scatter singular after regularization (column {col})"
        ) from exc


def inductive_conditional_update(scatter: ScatterPartition, fixed: GaussianParams,
                                 sum_w_yq: np.ndarray, sum_w_devp: np.ndarray
                                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Estimate the cross block, new-variable covariance and new-variable mean.

    Maximizes the expected complete log-likelihood term of one known class
    over its Q-side parameters while the P-block stays fixed:

        C   = (Sb^-1 W Sb^-1)^-1 (Sb^-1 V)
        E   = [C' Sb^-1 W Sb^-1 C - 2 V' Sb^-1 C + U] / n
        SQ  = E + C' Sb^-1 C
        muQ = [sum_i w_i yQ_i - C' Sb^-1 sum_i w_i (yP_i - mu_fixed)] / n

    where Sb is the fixed covariance block and (W, V, U) partition the class
    scatter. The Schur complement of the assembled covariance equals E, so
    positive definiteness of the (regularized) scatter carries over.
    """
    p, q = scatter.v.shape
    if fixed.d != p:
        raise ValueError("fixed-block dimension does not match scatter partition")
    if q == 0:
        return np.zeros((p, 0)), np.zeros((0, 0)), np.zeros(0)
    sum_w_yq = np.asarray(sum_w_yq, dtype=float).reshape(q)
    sum_w_devp = np.asarray(sum_w_devp, dtype=float).reshape(p)
    n_eff = scatter.n_eff

    def sb_solve(rhs):
        return cho_solve((fixed.chol, True), rhs, check_finite=False)

    g = sb_solve(scatter.v)                       # Sb^-1 V
    m_mid = symmetrize(sb_solve(sb_solve(scatter.w).T))   # Sb^-1 W Sb^-1
    try:
        c_hat = cho_solve((np.linalg.cholesky(m_mid), True), g, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise EmError("scatter W-block singular in conditional update; "
                      "regularize the scatter first") from exc
    e_hat = symmetrize(c_hat.T @ m_mid @ c_hat - 2.0 * (g.T @ c_hat) + scatter.u) / n_eff
    if not is_positive_definite(e_hat):
        raise EmError("conditional covariance not positive definite after regularization")
    sigma_q = symmetrize(e_hat + c_hat.T @ sb_solve(c_hat))
    mu_q = (sum_w_yq - c_hat.T @ sb_solve(sum_w_devp)) / n_eff
    return c_hat, sigma_q, mu_q


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _merge_small_clusters(y: np.ndarray, assign: np.ndarray, min_size: int = 2
                          ) -> np.ndarray:
    """Fold clusters below ``min_size`` into the nearest cluster by centroid."""
    assign = assign.copy()
    while True:
        ids, counts = np.unique(assign, return_counts=True)
        if len(ids) <= 1 or counts.min() >= min_size:
            return assign
        small = ids[np.argmin(counts)]
        centroids = {i: y[assign == i].mean(axis=0) for i in ids}
        others = [i for i in ids if i != small]
        dists = [float(np.linalg.norm(centroids[small] - centroids[i])) for i in others]
        assign[assign == small] = others[int(np.argmin(dists))]


def _repaired_cov(scatter: np.ndarray, n_eff: float, reg: RegularizationContext,
                  component: str) -> np.ndarray:
    cov = scatter / n_eff
    if is_positive_definite(cov):
        return cov
    cov = reg.apply(scatter, component) / n_eff
    scale = float(np.mean(np.diag(cov))) or 1.0
    eps = 1e-8
    while not is_positive_definite(cov):   # defensive; regularized PSD+PD sum is PD
        cov = cov + eps * scale * np.eye(cov.shape[0])
        eps *= 10.0
    return cov


def _shrunk_partition(fixed_cov: np.ndarray, cross: np.ndarray,
                      new: np.ndarray) -> PartitionedCov:
    """Scale the cross block down until the assembled covariance is valid."""
    for alpha in (1.0, 0.5, 0.25, 0.1, 0.0):
        part = PartitionedCov(fixed_cov, alpha * cross, new)
        try:
            assemble_cov(part)
            return part
        except (InvalidAugmentedCovariance, NotPositiveDefinite):
            continue
    raise EmError("could not form a valid augmented covariance at initialization")


def initialize(y: np.ndarray, learned: EddaModel, n_classes: int,
               reg_events: list | None = None) -> DamdaModel:
    """Starting point for the discovery EM.

    A hierarchical (Ward-linkage) partition of the test rows is cut at
    ``n_classes`` clusters; each learned class greedily claims the cluster
    with the lowest matching score (without replacement, in learned order)
    and keeps its frozen P-block while taking the cluster's Q-side moments.
    Leftover clusters seed the hidden classes.
    """
    y = np.asarray(y, dtype=float)
    n, r = y.shape
    p = learned.P
    q = r - p
    k = learned.K
    if n_classes < k:
        raise ValueError(f"total class count {n_classes} below learned count {k}")
    if n < n_classes:
        raise ValueError(f"cannot initialize {n_classes} classes from {n} rows")
    h = n_classes - k

    grand_mean = y.mean(axis=0)
    dev = y - grand_mean
    s_full = symmetrize(dev.T @ dev / n)
    reg = RegularizationContext(s=s_full, n_classes=n_classes, n=n, events=reg_events)

    if n_classes == 1:
        assign = np.ones(n, dtype=int)
    else:
        assign = fcluster(linkage(y, method="ward"), t=n_classes, criterion="maxclust")
    assign = _merge_small_clusters(y, assign)
    ids = sorted(np.unique(assign).tolist())

    stats = {}
    for g in ids:
        rows = y[assign == g]
        n_g = rows.shape[0]
        mu_g = rows.mean(axis=0)
        dv = rows - mu_g
        cov_g = _repaired_cov(symmetrize(dv.T @ dv), n_g, reg, f"init-cluster[{g}]")
        stats[g] = (n_g, mu_g, cov_g)

    cluster_p_params = {}
    for g, (n_g, mu_g, cov_g) in stats.items():
        pcov = cov_g[:p, :p]
        if not is_positive_definite(pcov):
            pcov = _repaired_cov(pcov * n_g, n_g, reg, f"init-cluster-p[{g}]")
        cluster_p_params[g] = GaussianParams(mu_g[:p], pcov)

    # Greedy matching, learned-class order, without replacement.
    unmatched = list(ids)
    match: dict[int, int | None] = {}
    for ki in range(k):
        if not unmatched:
            match[ki] = None
            continue
        scores = [kl_match_score(cluster_p_params[g], learned.classes[ki])
                  for g in unmatched]
        g_best = unmatched[int(np.argmin(scores))]
        match[ki] = g_best
        unmatched.remove(g_best)

    s_qq = s_full[p:, p:]
    if q > 0 and not is_positive_definite(s_qq):
        s_qq = _repaired_cov(s_qq * n, n, reg, "init-grand-q")

    counts = []
    knowns = []
    for ki in range(k):
        g = match[ki]
        fixed = learned.classes[ki]
        if g is None:
            aug_mean = grand_mean[p:]
            cross = np.zeros((p, q))
            new = s_qq
            counts.append(1.0)
        else:
            n_g, mu_g, cov_g = stats[g]
            aug_mean = mu_g[p:]
            cross = cov_g[:p, p:]
            new = cov_g[p:, p:]
            counts.append(float(n_g))
        knowns.append(KnownClassState(fixed, aug_mean,
                                      _shrunk_partition(fixed.cov, cross, new)))

    hiddens = []
    for j in range(h):
        if j < len(unmatched):
            g = unmatched[j]
            n_g, mu_g, cov_g = stats[g]
            hiddens.append(GaussianParams(mu_g, cov_g))
            counts.append(float(n_g))
        else:
            # More hidden classes requested than clusters found (duplicate-heavy
            # data); seed deterministically from shifted grand moments.
            offset = 0.5 * (j + 1) * np.sqrt(np.diag(s_full))
            cov = s_full if is_positive_definite(s_full) else \
                _repaired_cov(s_full * n, n, reg, f"init-synth[{j}]")
            hiddens.append(GaussianParams(grand_mean + offset, cov))
            counts.append(1.0)

    tau = np.asarray(counts, dtype=float)
    tau = tau / tau.sum()
    return DamdaModel(K=k, H=h, tau=tau, known_classes=knowns, hidden_classes=hiddens)


# ---------------------------------------------------------------------------
# EM driver
# ---------------------------------------------------------------------------

def bic_h(loglik: float, h: int, k: int, p: int, q: int, n: int) -> float:
    """BIC of a discovery fit: 2*loglik - eta*log(N).

    ``eta`` counts only parameters estimated in the discovery phase: mixing
    proportions, full hidden-class Gaussians on R = P + Q variables, and the
    Q-side extension (mean, covariance, cross block) of each known class.
    """
    if min(h, k, p, q, n) < 0:
        raise ValueError("class, variable and sample counts must be nonnegative")
    r = p + q
    eta = ((h + k - 1) + 2 * h * r + h * (r * (r - 1) // 2)
           + 2 * k * q + k * p * q + k * (q * (q - 1) // 2))
    return 2.0 * loglik - eta * float(np.log(n))


def _perturbed_start(init: DamdaModel, rng: np.random.Generator,
                     s_full: np.ndarray) -> DamdaModel:
    scale = 0.1 * np.sqrt(np.diag(s_full))
    p = init.P
    knowns = [KnownClassState(ks.fixed,
                              ks.aug_mean + rng.normal(0.0, 1.0, ks.aug_mean.shape)
                              * scale[p:],
                              ks.aug_cov)
              for ks in init.known_classes]
    hiddens = [GaussianParams(g.mean + rng.normal(0.0, 1.0, g.d) * scale, g.cov)
               for g in init.hidden_classes]
    tau = 0.5 * (init.tau + 1.0 / len(init.tau))
    tau = tau / tau.sum()
    return DamdaModel(K=init.K, H=init.H, tau=tau, known_classes=knowns,
                      hidden_classes=hiddens)


def run_em(y: np.ndarray, learned: EddaModel, h: int, *, max_iter: int = 500,
           rel_tol: float = 1e-7, seed: int = 0, record: bool = False) -> DamdaModel:
    """Fit the discovery model with ``h`` hidden classes.

    Alternates responsibilities, mixing-proportion, hidden-class and
    known-class conditional updates until the relative log-likelihood change
    drops below ``rel_tol`` or ``max_iter`` is hit. A collapsed component
    triggers one perturbed restart.
    """
    y = np.asarray(y, dtype=float)
    n, r = y.shape
    p = learned.P
    if h < 0:
        raise ValueError("h must be >= 0")
    if r < p:
        raise ValueError(f"test data has {r} columns, expected at least {p}")

    grand_mean = y.mean(axis=0)
    dev = y - grand_mean
    s_full = symmetrize(dev.T @ dev / n)

    diag = EmDiagnostics() if record else None
    events = diag.regularizations if record else None
    init = initialize(y, learned, learned.K + h, reg_events=events)
    start = init
    for attempt in range(2):
        try:
            return _em_loop(y, learned, start, s_full, max_iter, rel_tol, diag)
        except ComponentCollapse as exc:
            log.warning("EM restart after collapse: %s", exc)
            if diag is not None:
                diag.restarts += 1
            if attempt == 1:
                raise EmError(f"component collapsed twice (H={h}): {exc}") from exc
            start = _perturbed_start(init, child_rng(seed, 7, h), s_full)
    raise AssertionError("unreachable")


def _em_loop(y: np.ndarray, learned: EddaModel, model: DamdaModel,
             s_full: np.ndarray, max_iter: int, rel_tol: float,
             diag: EmDiagnostics | None) -> DamdaModel:
    n, r = y.shape
    p = learned.P
    q = r - p
    k = model.K
    h = model.H
    c = k + h
    reg = RegularizationContext(s=s_full, n_classes=c, n=n,
                                events=diag.regularizations if diag else None)

    trace = [discovery_loglik(y, model)]
    _record_covs(diag, 0, model)
    for it in range(1, max_iter + 1):
        reg.iteration = it
        t = e_step(y, model)
        masses = t.sum(axis=0)
        low = np.flatnonzero(masses < COLLAPSE_FRACTION * n)
        if low.size:
            raise ComponentCollapse(int(low[0]), float(masses[low[0]]))
        tau = m_step_mixing(t)

        hiddens = [m_step_hidden(y, t, k + j, reg) for j in range(h)]

        if q > 0:
            knowns = []
            for ki in range(k):
                w = t[:, ki]
                n_eff = masses[ki]
                ybar = (w @ y) / n_eff
                dv = y - ybar
                scatter = symmetrize((dv * w[:, None]).T @ dv)
                scatter = reg.apply_if_needed(scatter, f"known[{ki}]")
                part = ScatterPartition.from_scatter(scatter, p, n_eff)
                fixed = model.known_classes[ki].fixed
                c_hat, sigma_q, mu_q = inductive_conditional_update(
                    part, fixed, w @ y[:, p:], w @ (y[:, :p] - fixed.mean))
                knowns.append(KnownClassState(
                    fixed, mu_q, PartitionedCov(fixed.cov, c_hat, sigma_q)))
        else:
            knowns = model.known_classes

        model = DamdaModel(K=k, H=h, tau=tau, known_classes=knowns,
                           hidden_classes=hiddens)
        trace.append(discovery_loglik(y, model))
        _record_covs(diag, it, model)
        if abs(trace[-1] - trace[-2]) / (abs(trace[-1]) + 1.0) < rel_tol:
            break

    model.loglik_trace = trace
    model.bic = bic_h(trace[-1], h, k, p, q, n)
    model.diagnostics = diag
    return model


def _record_covs(diag: EmDiagnostics | None, iteration: int, model: DamdaModel) -> None:
    if diag is None:
        return
    for ki, ks in enumerate(model.known_classes):
        diag.covariances.append((iteration, f"known[{ki}]", ks.assembled.cov))
    for j, g in enumerate(model.hidden_classes):
        diag.covariances.append((iteration, f"hidden[{j}]", g.cov))


def fit_h_range(y: np.ndarray, learned: EddaModel, h_range, *,
                seed: int = 0, **em_kwargs) -> tuple[dict[int, DamdaModel],
                                                     dict[int, Exception]]:
    """Run the discovery EM for every candidate hidden-class count."""
    fits: dict[int, DamdaModel] = {}
    errors: dict[int, Exception] = {}
    for h in sorted(set(int(v) for v in h_range)):
        try:
            fits[h] = run_em(y, learned, h, seed=seed, **em_kwargs)
        except (EmError, NotPositiveDefinite, InvalidAugmentedCovariance,
                ValueError) as exc:
            log.info("discovery fit failed for H=%d: %s", h, exc)
            errors[h] = exc
    return fits, errors


def select_h(y: np.ndarray, learned: EddaModel, h_range, *, seed: int = 0,
             **em_kwargs) -> DamdaModel:
    """Fit every H in the range and return the BIC-maximizing model.

    Ties are broken toward fewer hidden classes.
    """
    h_range = list(h_range)
    if not h_range:
        raise ValueError("h_range must be nonempty")
    fits, errors = fit_h_range(y, learned, h_range, seed=seed, **em_kwargs)
    if not fits:
        detail = "; ".join(f"H={h}: {exc}" for h, exc in errors.items())
        raise EmError(f"every hidden-class fit failed: {detail}")
    best_h = max(fits, key=lambda h: (fits[h].bic, -h))
    return fits[best_h]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def model_to_dict(model: DamdaModel) -> dict:
    def mat(a):
        return [[float(v) for v in row] for row in np.atleast_2d(a)] if a.size else []

    return {
        "tau": [float(t) for t in model.tau],
        "known": [{
            "mu_fixed": [float(v) for v in ks.fixed.mean],
            "mu_aug": [float(v) for v in ks.aug_mean],
            "cov_blocks": {
                "fixed": mat(ks.aug_cov.fixed_block),
                "cross": mat(ks.aug_cov.cross_block),
                "new": mat(ks.aug_cov.new_block),
            },
        } for ks in model.known_classes],
        "hidden": [{
            "mu": [float(v) for v in g.mean],
            "cov": mat(g.cov),
        } for g in model.hidden_classes],
        "H": model.H,
        "loglik_trace": [float(v) for v in model.loglik_trace],
        "bic": None if model.bic is None else float(model.bic),
    }


def save_model(model: DamdaModel, path) -> None:
    jsonio.dump(model_to_dict(model), path)


def component_labels(k: int, h: int) -> list[str]:
    return [f"K{i + 1}" for i in range(k)] + [f"H{j + 1}" for j in range(h)]


def map_assignments(t: np.ndarray, k: int, h: int) -> list[str]:
    labels = component_labels(k, h)
    return [labels[j] for j in np.argmax(t, axis=1)]


def write_assignments_csv(path, t: np.ndarray, k: int, h: int) -> None:
    """Per-row MAP class, its posterior, and the full posterior vector."""
    import csv

    labels = component_labels(k, h)
    assigned = map_assignments(t, k, h)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "map_class", "max_posterior"]
                        + [f"p_{lab}" for lab in labels])
        for i in range(t.shape[0]):
            writer.writerow([i, assigned[i], repr(float(t[i].max()))]
                            + [repr(float(v)) for v in t[i]])
