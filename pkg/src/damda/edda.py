"""Learning phase: parsimonious Gaussian classifier fit on labelled data.

Class covariances are constrained by one of six eigen-decomposition
structures (spherical / diagonal / full, each either shared across classes
or varying per class). All six have closed-form maximum-likelihood fits on
fully labelled data; the structure is then chosen by BIC. The fitted bundle
is serializable and is the only thing the discovery phase ever sees --
training data is discarded afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import jsonio
from .gaussian import GaussianParams, NotPositiveDefinite, log_density_rows

#: Covariance structure tags, in increasing-flexibility order within family:
#: E* shared across classes, V* varying; *II spherical, *EI/*VI diagonal,
#: *EE/*VV full.
STRUCTURES = ("EII", "VII", "EEI", "VVI", "EEE", "VVV")

_SPHERICAL = {"EII", "VII"}
_DIAGONAL = {"EEI", "VVI"}

# Relative floor applied to fitted variances, scaled by squared column range;
# prevents -inf likelihoods on (near-)constant columns.
VARIANCE_FLOOR_REL = 1e-8


class DegenerateClassError(ValueError):
    """A class has fewer than two training rows."""


class SingularFitError(RuntimeError):
    """Every requested covariance structure failed the PD gate."""


@dataclass
class EddaModel:
    """Learned-phase classifier: per-class Gaussians under one structure tag.

    ``classes[k]`` holds the class-k mean/covariance on the P training
    variables; ``tau`` are the training mixing proportions. Classes are
    ordered by ascending label (as strings) from the fit.
    """

    K: int
    tau: np.ndarray
    classes: list[GaussianParams]
    structure: str
    loglik: float | None
    bic: float | None
    variable_names: list[str] = field(default_factory=list)

    @property
    def P(self) -> int:
        return self.classes[0].d

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float).reshape(-1)
        if self.tau.shape[0] != self.K or len(self.classes) != self.K:
            raise ValueError("tau / classes length does not match K")
        if abs(self.tau.sum() - 1.0) > 1e-10 or np.any(self.tau <= 0):
            raise ValueError("tau must be a positive probability vector")
        if not self.variable_names:
            self.variable_names = [f"x{j}" for j in range(self.P)]
        if len(self.variable_names) != self.P:
            raise ValueError("variable_names length does not match dimension")


def count_free_parameters(structure: str, k: int, p: int) -> int:
    """Free-parameter count of a K-class P-variable model: mixing + means + covariance."""
    cov = {
        "EII": 1,
        "VII": k,
        "EEI": p,
        "VVI": k * p,
        "EEE": p * (p + 1) // 2,
        "VVV": k * (p * (p + 1) // 2),
    }[structure]
    return (k - 1) + k * p + cov


def _class_blocks(x: np.ndarray, labels) -> tuple[list, list[np.ndarray]]:
    """Split rows by class in ascending label order.

    Rows within each class are put in a canonical (lexicographic) order so
    that all reductions are independent of the input row order.
    """
    labels = np.asarray(labels)
    uniq = sorted(np.unique(labels).tolist(), key=str)
    blocks = []
    for lab in uniq:
        rows = x[labels == lab]
        order = np.lexsort(rows.T[::-1])
        blocks.append(rows[order])
    return uniq, blocks


def _structure_covs(structure: str, scatters: list[np.ndarray], sizes: np.ndarray,
                    p: int) -> list[np.ndarray]:
    """Closed-form ML covariance estimates for one structure tag.

    ``scatters[k]`` is the un-normalized within-class scatter of class k.
    """
    m = float(sizes.sum())
    k = len(scatters)
    pooled = np.sum(scatters, axis=0)
    if structure == "EII":
        lam = float(np.trace(pooled)) / (m * p)
        return [lam * np.eye(p)] * k
    if structure == "VII":
        return [(float(np.trace(w)) / (n * p)) * np.eye(p)
                for w, n in zip(scatters, sizes)]
    if structure == "EEI":
        return [np.diag(np.diag(pooled) / m)] * k
    if structure == "VVI":
        return [np.diag(np.diag(w) / n) for w, n in zip(scatters, sizes)]
    if structure == "EEE":
        return [pooled / m] * k
    if structure == "VVV":
        return [w / n for w, n in zip(scatters, sizes)]
    raise ValueError(f"unknown covariance structure {structure!r}")


def _apply_variance_floor(cov: np.ndarray, floor: np.ndarray) -> np.ndarray:
    deficit = np.maximum(floor - np.diag(cov), 0.0)
    if np.any(deficit > 0):
        cov = cov + np.diag(deficit)
    return cov


def fit_edda(x: np.ndarray, labels, structures=STRUCTURES,
             variable_names: list[str] | None = None) -> EddaModel:
    """Fit the classifier on labelled rows and select the structure by BIC.

    Means are per-class sample means for every structure; covariances use the
    structure's closed-form estimate. BIC = 2*loglik - eta*log(M); ties are
    broken toward the structure with fewer parameters.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("x must be a 2-D matrix")
    m, p = x.shape
    labels = np.asarray(labels)
    if labels.shape[0] != m:
        raise ValueError("labels length does not match row count")
    for tag in structures:
        if tag not in STRUCTURES:
            raise ValueError(f"unknown covariance structure {tag!r}")

    uniq, blocks = _class_blocks(x, labels)
    k = len(uniq)
    sizes = np.array([b.shape[0] for b in blocks], dtype=float)
    for lab, n in zip(uniq, sizes):
        if n < 2:
            raise DegenerateClassError(f"class {lab!r} has {int(n)} rows; need at least 2")

    means = [b.mean(axis=0) for b in blocks]
    scatters = []
    for b, mu in zip(blocks, means):
        dev = b - mu
        scatters.append(dev.T @ dev)
    tau = sizes / m
    col_range = x.max(axis=0) - x.min(axis=0)
    floor = VARIANCE_FLOOR_REL * col_range**2

    best = None
    failures = []
    for tag in structures:
        covs = [_apply_variance_floor(c, floor)
                for c in _structure_covs(tag, scatters, sizes, p)]
        try:
            params = [GaussianParams(mu, cov) for mu, cov in zip(means, covs)]
        except NotPositiveDefinite as exc:
            failures.append(f"{tag}: {exc}")
            continue
        loglik = 0.0
        for b, g, t in zip(blocks, params, tau):
            loglik += float(np.sum(log_density_rows(b, g))) + b.shape[0] * float(np.log(t))
        eta = count_free_parameters(tag, k, p)
        bic = 2.0 * loglik - eta * float(np.log(m))
        cand = (bic, -eta, tag, loglik, params)
        if best is None or (cand[0], cand[1]) > (best[0], best[1]):
            best = cand
    if best is None:
        raise SingularFitError(
            "all covariance structures failed the PD gate: " + "; ".join(failures)
        )

    bic, _, tag, loglik, params = best
    names = list(variable_names) if variable_names else [f"x{j}" for j in range(p)]
    return EddaModel(K=k, tau=tau, classes=params, structure=tag,
                     loglik=loglik, bic=bic, variable_names=names)


def predict_map_rows(model: EddaModel, y: np.ndarray) -> np.ndarray:
    """Posterior class probabilities for each row of ``y``, shape (N, K).

    Computed in log space with max subtraction.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y.reshape(1, -1)
    if y.shape[1] != model.P:
        raise ValueError(f"row length {y.shape[1]} does not match model dimension {model.P}")
    logpost = np.column_stack([
        np.log(model.tau[c]) + log_density_rows(y, model.classes[c])
        for c in range(model.K)
    ])
    return np.exp(logpost - logsumexp(logpost, axis=1, keepdims=True))


def predict_map(model: EddaModel, y) -> np.ndarray:
    """Posterior probability vector (length K) for a single observation."""
    return predict_map_rows(model, np.asarray(y, dtype=float).reshape(1, -1))[0]


def marginal_submodel(model: EddaModel, keep) -> EddaModel:
    """Restrict the classifier to a subset of its variables.

    The marginal of a Gaussian is the corresponding mean/covariance
    sub-blocks; mixing proportions are unchanged. Spherical and diagonal
    structure tags survive marginalization; full-covariance tags are
    downgraded to the unconstrained tag.
    """
    keep = [int(j) for j in keep]
    if not keep:
        raise ValueError("keep must be a nonempty index set")
    for j in keep:
        if not 0 <= j < model.P:
            raise ValueError(f"index {j} out of range for dimension {model.P}")
    idx = np.asarray(keep, dtype=int)
    classes = [GaussianParams(g.mean[idx], g.cov[np.ix_(idx, idx)]) for g in model.classes]
    structure = model.structure if model.structure in _SPHERICAL | _DIAGONAL else "VVV"
    names = [model.variable_names[j] for j in keep]
    return EddaModel(K=model.K, tau=model.tau.copy(), classes=classes,
                     structure=structure, loglik=None, bic=None, variable_names=names)


def structure_conforms(model: EddaModel, atol: float = 1e-8) -> bool:
    """Check the class covariances against their structure tag.

    Reconstructs each covariance from the structure's canonical parameters
    (shared/per-class volume, diagonal shape, full matrix) and compares.
    """
    covs = [g.cov for g in model.classes]
    p = model.P
    tag = model.structure
    if tag == "EII":
        lam = float(np.mean([np.trace(c) / p for c in covs]))
        recon = [lam * np.eye(p)] * model.K
    elif tag == "VII":
        recon = [(np.trace(c) / p) * np.eye(p) for c in covs]
    elif tag == "EEI":
        diag = np.mean([np.diag(c) for c in covs], axis=0)
        recon = [np.diag(diag)] * model.K
    elif tag == "VVI":
        recon = [np.diag(np.diag(c)) for c in covs]
    elif tag == "EEE":
        shared = np.mean(covs, axis=0)
        recon = [shared] * model.K
    elif tag == "VVV":
        recon = covs
    else:
        raise ValueError(f"unknown covariance structure {tag!r}")
    return all(np.max(np.abs(c - r)) <= atol for c, r in zip(covs, recon))


def model_to_dict(model: EddaModel) -> dict:
    return {
        "structure": model.structure,
        "tau": [float(t) for t in model.tau],
        "means": [[float(v) for v in g.mean] for g in model.classes],
        "covs": [[[float(v) for v in row] for row in g.cov] for g in model.classes],
        "variable_names": list(model.variable_names),
        "loglik": None if model.loglik is None else float(model.loglik),
        "bic": None if model.bic is None else float(model.bic),
        "K": model.K,
        "P": model.P,
    }


def model_from_dict(doc: dict) -> EddaModel:
    classes = [GaussianParams(mu, cov) for mu, cov in zip(doc["means"], doc["covs"])]
    return EddaModel(K=int(doc["K"]), tau=np.asarray(doc["tau"], dtype=float),
                     classes=classes, structure=doc["structure"],
                     loglik=doc.get("loglik"), bic=doc.get("bic"),
                     variable_names=list(doc["variable_names"]))


def save_model(model: EddaModel, path) -> None:
    jsonio.dump(model_to_dict(model), path)


def load_model(path) -> EddaModel:
    return model_from_dict(jsonio.load(path))
