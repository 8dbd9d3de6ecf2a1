"""Dense Gaussian primitives.

Everything downstream (classifier fitting, hidden-class discovery, variable
selection) is built on these: Cholesky-gated positive definiteness, log
densities evaluated through the factor, the cluster-to-class matching score,
and assembly of block-partitioned covariances with a Schur-complement
validity check.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular, cho_solve

# Single numerical gate used across all modules: a matrix counts as positive
# definite iff Cholesky succeeds and every pivot (squared factor diagonal)
# exceeds this floor.
PD_PIVOT_MIN = 1e-12

# Maximum allowed asymmetry |A - A'| at construction.
SYMMETRY_ATOL = 1e-10

_LOG_2PI = float(np.log(2.0 * np.pi))


class NotPositiveDefinite(ValueError):
    """Covariance failed the Cholesky pivot gate."""


class InvalidAugmentedCovariance(ValueError):
    """Schur complement of a partitioned covariance is not positive definite."""


def cholesky_pd(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``a``, or raise :class:`NotPositiveDefinite`.

    The gate is operational: ``np.linalg.cholesky`` must succeed and all
    pivots (diagonal of the factor, squared) must exceed ``PD_PIVOT_MIN``.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return a.reshape(0, 0)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"Cholesky factorization failed: {exc}") from exc
    pivots = np.diag(chol) ** 2
    if not np.all(pivots > PD_PIVOT_MIN):
        raise NotPositiveDefinite(
            f"Cholesky pivot below gate {PD_PIVOT_MIN:g}: min pivot {pivots.min():g}"
        )
    return chol


def is_positive_definite(a: np.ndarray) -> bool:
    """True iff ``a`` passes the Cholesky pivot gate."""
    try:
        cholesky_pd(a)
    except NotPositiveDefinite:
        return False
    return True


def symmetrize(a: np.ndarray) -> np.ndarray:
    """(A + A') / 2."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


class GaussianParams:
    """Mean vector and covariance matrix of one class on one variable set.

    The covariance must be symmetric within ``SYMMETRY_ATOL`` and pass the
    Cholesky gate; it is symmetrized exactly at construction and both arrays
    are frozen. The factor is cached for density evaluation.
    """

    __slots__ = ("mean", "cov", "d", "chol")

    def __init__(self, mean, cov):
        mean = np.array(mean, dtype=float).reshape(-1)
        cov = np.array(cov, dtype=float)
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ValueError(f"covariance shape {cov.shape} does not match dimension {d}")
        if d > 0 and np.max(np.abs(cov - cov.T)) > SYMMETRY_ATOL:
            raise ValueError(
                f"covariance asymmetric beyond {SYMMETRY_ATOL:g}: "
                f"max |A - A'| = {np.max(np.abs(cov - cov.T)):g}"
            )
        cov = symmetrize(cov)
        self.mean = mean
        self.cov = cov
        self.d = d
        self.chol = cholesky_pd(cov)
        self.mean.flags.writeable = False
        self.cov.flags.writeable = False
        self.chol.flags.writeable = False

    def __repr__(self):
        return f"GaussianParams(d={self.d})"

    @property
    def log_det_cov(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))


def log_density(x, params: GaussianParams) -> float:
    """Log of the multivariate normal density at ``x``.

    Evaluated through the cached Cholesky factor; no explicit inverse.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != params.d:
        raise ValueError(f"x has length {x.shape[0]}, expected {params.d}")
    z = solve_triangular(params.chol, x - params.mean, lower=True, check_finite=False)
    return float(-0.5 * params.d * _LOG_2PI - 0.5 * params.log_det_cov - 0.5 * (z @ z))


def log_density_rows(y: np.ndarray, params: GaussianParams) -> np.ndarray:
    """Row-wise log density for an (N, d) batch. Returns shape (N,)."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] != params.d:
        raise ValueError(f"batch shape {y.shape} does not match dimension {params.d}")
    z = solve_triangular(params.chol, (y - params.mean).T, lower=True, check_finite=False)
    quad = np.einsum("ij,ij->j", z, z)
    return -0.5 * params.d * _LOG_2PI - 0.5 * params.log_det_cov - 0.5 * quad


def kl_match_score(cluster: GaussianParams, learned: GaussianParams) -> float:
    """Divergence score used to match unsupervised clusters to learned classes.

    Computed exactly as

        tr(S_c^-1 S_l) + (m_c - m_l)' S_c^-1 (m_c - m_l) + log(det S_c / det S_l)

    with (m_c, S_c) the cluster parameters and (m_l, S_l) the learned-class
    parameters. This differs from the textbook Kullback-Leibler divergence by
    an affine constant; only the argmin over clusters is consumed downstream.
    """
    if cluster.d != learned.d:
        raise ValueError(f"dimension mismatch: cluster d={cluster.d}, learned d={learned.d}")
    tr = float(np.trace(cho_solve((cluster.chol, True), learned.cov, check_finite=False)))
    dev = solve_triangular(cluster.chol, cluster.mean - learned.mean, lower=True,
                           check_finite=False)
    quad = float(dev @ dev)
    log_ratio = cluster.log_det_cov - learned.log_det_cov
    return tr + quad + log_ratio


class PartitionedCov:
    """Covariance split into a fixed learned block, a cross block, and a new block.

    Blocks are (P, P), (P, Q) and (Q, Q); the assembled (P+Q, P+Q) matrix is
    valid iff the Schur complement of the fixed block is positive definite.
    """

    __slots__ = ("fixed_block", "cross_block", "new_block", "p", "q")

    def __init__(self, fixed_block, cross_block, new_block):
        fixed = np.array(fixed_block, dtype=float)
        p = fixed.shape[0]
        cross = np.array(cross_block, dtype=float).reshape(p, -1)
        q = cross.shape[1]
        new = np.array(new_block, dtype=float).reshape(q, q)
        if fixed.shape != (p, p):
            raise ValueError(f"fixed block must be square, got {fixed.shape}")
        self.fixed_block = symmetrize(fixed)
        self.cross_block = cross
        self.new_block = symmetrize(new)
        self.p = p
        self.q = q
        for arr in (self.fixed_block, self.cross_block, self.new_block):
            arr.flags.writeable = False

    def __repr__(self):
        return f"PartitionedCov(p={self.p}, q={self.q})"


def schur_complement(p: PartitionedCov) -> np.ndarray:
    """new_block - cross' fixed^-1 cross, computed through the fixed factor."""
    if p.q == 0:
        return np.zeros((0, 0))
    chol = cholesky_pd(p.fixed_block)
    half = solve_triangular(chol, p.cross_block, lower=True, check_finite=False)
    return symmetrize(p.new_block - half.T @ half)


def assemble_cov(p: PartitionedCov) -> np.ndarray:
    """Assemble [[fixed, cross], [cross', new]] after validating the Schur gate.

    Raises :class:`InvalidAugmentedCovariance` when the Schur complement of
    the fixed block fails the PD gate; with Q = 0 the fixed block is returned
    unchanged.
    """
    if p.q == 0:
        return p.fixed_block.copy()
    try:
        cholesky_pd(schur_complement(p))
    except NotPositiveDefinite as exc:
        raise InvalidAugmentedCovariance(
            f"Schur complement of the fixed block is not positive definite: {exc}"
        ) from exc
    return np.block([[p.fixed_block, p.cross_block],
                     [p.cross_block.T, p.new_block]])
