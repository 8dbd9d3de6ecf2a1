"""Shared generators and independent oracles for the test suite.

Oracles here deliberately avoid the library's own code paths: densities are
evaluated with explicit inverses and determinants, moments with plain loops,
metrics with pairwise enumeration, and the conditional M step with a direct
numerical maximization of the expected complete log-likelihood.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import minimize

from damda.edda import fit_edda
from damda.rng import child_rng


def random_spd(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(d, d))
    return scale * (a @ a.T / d + np.eye(d))


def dense_log_density(x, mean, cov) -> float:
    """Log Gaussian density via explicit inverse and determinant."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = x.shape[0]
    dev = x - mean
    return float(-0.5 * d * np.log(2 * np.pi)
                 - 0.5 * np.log(np.linalg.det(cov))
                 - 0.5 * dev @ np.linalg.inv(cov) @ dev)


def small_instance(seed: int):
    """One randomized discovery problem: learned classifier + test matrix.

    Dimensions follow the acceptance recipe: N in [20, 60], P and Q in
    [1, 3], K in {1, 2}, H in {0, 1}. Test rows are drawn from K + H
    full-dimension Gaussians whose P-marginals generated the training data.
    N is drawn with a dimension-aware lower bound and every component keeps
    more support points than dimensions, so class scatters have full rank and
    the exact M step applies (the EM ascent property presumes it).
    """
    rng = child_rng(seed, 55)
    p = int(rng.integers(1, 4))
    q = int(rng.integers(1, 4))
    k = int(rng.integers(1, 3))
    h = int(rng.integers(0, 2))
    r = p + q
    c = k + h
    n = int(rng.integers(max(20, 6 * r, 8 * c), 61))

    means = np.zeros((c, r))
    covs = []
    for j in range(c):
        direction = rng.normal(size=r)
        direction /= np.linalg.norm(direction)
        means[j] = 6.0 * j * direction + rng.uniform(-1, 1, size=r)
        covs.append(random_spd(rng, r))

    m_per = int(rng.integers(15, 30))
    labels_train = np.repeat(np.arange(k), m_per)
    x_train = np.vstack([
        rng.multivariate_normal(means[j][:p], covs[j][:p, :p], size=m_per,
                                method="cholesky")
        for j in range(k)
    ])
    learned = fit_edda(x_train, labels_train)

    labels_test = rng.integers(0, c, size=n)
    while min((labels_test == j).sum() for j in range(c)) < r + 2:
        labels_test = rng.integers(0, c, size=n)
    y = np.vstack([
        rng.multivariate_normal(means[j], covs[j], size=1, method="cholesky")[0]
        for j in labels_test
    ])
    return {"learned": learned, "y": y, "n": n, "p": p, "q": q, "k": k, "h": h,
            "labels_test": labels_test, "seed": seed}


def degenerate_instance(seed: int):
    """A discovery problem that must take the scatter-regularization path.

    The hidden component owns only 3 rows, fewer than the dimension, so its
    hard-assigned initialization cluster and its sharpened EM scatters are
    rank deficient. These runs exercise the regularized regime; the exact
    M-step ascent guarantee does not apply to them.
    """
    rng = child_rng(seed, 56)
    p = int(rng.integers(2, 4))
    q = int(rng.integers(2, 4))
    k = int(rng.integers(1, 3))
    r = p + q
    c = k + 1
    n = int(rng.integers(40, 61))

    means = np.zeros((c, r))
    for j in range(c):
        means[j, j % r] = 5.0
        means[j] += rng.uniform(-0.3, 0.3, size=r)

    m_per = 25
    labels_train = np.repeat(np.arange(k), m_per)
    x_train = means[labels_train][:, :p] + rng.normal(size=(k * m_per, p))
    learned = fit_edda(x_train, labels_train)

    labels_test = rng.integers(0, k, size=n)
    labels_test[:3] = k        # exactly 3 rows for the hidden component
    y = means[labels_test] + rng.normal(size=(n, r))
    return {"learned": learned, "y": y, "n": n, "p": p, "q": q, "k": k, "h": 1,
            "labels_test": labels_test, "seed": seed}


def expected_complete_loglik_term(y, weights, mu_fixed, sigma_fixed, mu_q, c_block,
                                  sigma_q) -> float:
    """Sum_i w_i log phi(y_i; assembled mean, assembled covariance).

    Brute-force objective of the known-class M step: the assembled matrix is
    built directly and the density evaluated densely; -inf if not PD.
    """
    p = np.asarray(mu_fixed).shape[0]
    mean = np.concatenate([np.asarray(mu_fixed, dtype=float),
                           np.atleast_1d(np.asarray(mu_q, dtype=float))])
    c_block = np.asarray(c_block, dtype=float).reshape(p, -1)
    sigma_q = np.atleast_2d(np.asarray(sigma_q, dtype=float))
    cov = np.block([[np.atleast_2d(sigma_fixed), c_block],
                    [c_block.T, sigma_q]])
    eigvals = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    if eigvals.min() <= 1e-12:
        return -np.inf
    return float(sum(w * dense_log_density(row, mean, cov)
                     for w, row in zip(weights, y)))


def brute_force_conditional_mstep(y, weights, mu_fixed, sigma_fixed):
    """Numerically maximize the complete-log-likelihood term, P = Q = 1.

    Optimizes (mu_q, c, log e) where e parameterizes the Schur complement, so
    the feasible set maps to an unconstrained space; multiple Nelder-Mead
    starts guard against local quirks.
    """
    y = np.asarray(y, dtype=float)
    weights = np.asarray(weights, dtype=float)
    sbar = float(np.atleast_2d(sigma_fixed)[0, 0])

    def negobj(theta):
        mu_q, c, log_e = theta
        sigma_q = np.exp(log_e) + c * c / sbar
        val = expected_complete_loglik_term(
            y, weights, np.atleast_1d(mu_fixed), [[sbar]], [mu_q], [[c]],
            [[sigma_q]])
        return -val

    n_eff = weights.sum()
    mu0 = float(weights @ y[:, 1] / n_eff)
    var0 = float(weights @ (y[:, 1] - mu0) ** 2 / n_eff)
    best = None
    for dc in (0.0, 0.5, -0.5):
        for dv in (1.0, 2.0):
            start = np.array([mu0, dc, np.log(max(var0 * dv, 1e-6))])
            res = minimize(negobj, start, method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-14,
                                    "maxiter": 20000, "maxfev": 20000})
            if best is None or res.fun < best.fun:
                best = res
    mu_q, c, log_e = best.x
    sigma_q = np.exp(log_e) + c * c / sbar
    return float(c), float(sigma_q), float(mu_q)


def pairwise_ari(a, b) -> float:
    """Adjusted Rand index from explicit enumeration of all sample pairs."""
    a = list(a)
    b = list(b)
    ss = sd = ds = dd = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        same_a = a[i] == a[j]
        same_b = b[i] == b[j]
        if same_a and same_b:
            ss += 1
        elif same_a:
            sd += 1
        elif same_b:
            ds += 1
        else:
            dd += 1
    num = 2.0 * (ss * dd - sd * ds)
    den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd)
    if den == 0:
        return 1.0
    return num / den


def greedy_matched_error_oracle(truth, pred) -> float:
    """Matched-class error via dict-of-dicts contingency and an explicit scan."""
    truth = list(truth)
    pred = list(pred)
    cells: dict = {}
    for t, p in zip(truth, pred):
        cells[(t, p)] = cells.get((t, p), 0) + 1
    t_order = {lab: i for i, lab in enumerate(sorted(set(map(str, truth))))}
    p_order = {lab: i for i, lab in enumerate(sorted(set(map(str, pred))))}
    ordered = sorted(cells.items(),
                     key=lambda kv: (-kv[1], p_order[str(kv[0][1])],
                                     t_order[str(kv[0][0])]))
    used_t: set = set()
    used_p: set = set()
    correct = 0
    for (t, p), count in ordered:
        if t in used_t or p in used_p:
            continue
        used_t.add(t)
        used_p.add(p)
        correct += count
    return (len(truth) - correct) / len(truth)


def enumerate_discovery_parameters(k: int, h: int, p: int, q: int) -> int:
    """Count discovery-phase free parameters by building the array shapes."""
    r = p + q
    count = (k + h) - 1                      # mixing proportions
    for _ in range(h):
        count += r                           # hidden mean
        count += r * (r + 1) // 2            # hidden covariance (upper triangle)
    for _ in range(k):
        count += q                           # augmented mean
        count += p * q                       # cross block
        count += q * (q + 1) // 2            # augmented covariance block
    return count
