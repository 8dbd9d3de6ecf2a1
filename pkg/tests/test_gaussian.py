import numpy as np
import pytest

from damda.gaussian import (
    GaussianParams,
    InvalidAugmentedCovariance,
    NotPositiveDefinite,
    PartitionedCov,
    assemble_cov,
    is_positive_definite,
    kl_match_score,
    log_density,
    log_density_rows,
    schur_complement,
)
from damda.rng import child_rng

from helpers import dense_log_density, random_spd


class TestLogDensity:
    def test_standard_normal_at_mode(self):
        g = GaussianParams([0.0], [[1.0]])
        assert log_density([0.0], g) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)

    def test_bivariate_identity_at_mode(self):
        g = GaussianParams([0.0, 0.0], np.eye(2))
        assert log_density([0.0, 0.0], g) == pytest.approx(-np.log(2 * np.pi), abs=1e-12)

    def test_scalar_formula_oracle(self):
        g = GaussianParams([0.0], [[4.0]])
        expected = -0.5 * np.log(2 * np.pi * 4.0) - 0.5 * (2.0 - 0.0) ** 2 / 4.0
        assert log_density([2.0], g) == pytest.approx(expected, abs=1e-12)

    def test_matches_dense_oracle(self):
        rng = child_rng(1, 0)
        for _ in range(20):
            d = int(rng.integers(1, 5))
            mean = rng.normal(size=d)
            cov = random_spd(rng, d)
            x = rng.normal(size=d)
            g = GaussianParams(mean, cov)
            assert log_density(x, g) == pytest.approx(dense_log_density(x, mean, cov),
                                                      abs=1e-9)

    def test_batch_matches_single(self):
        rng = child_rng(1, 1)
        g = GaussianParams(rng.normal(size=3), random_spd(rng, 3))
        rows = rng.normal(size=(6, 3))
        batch = log_density_rows(rows, g)
        for i in range(6):
            assert batch[i] == pytest.approx(log_density(rows[i], g), abs=1e-12)

    def test_integrates_to_one_on_grid(self):
        rng = child_rng(1, 2)
        for _ in range(5):
            mu = float(rng.uniform(-3, 3))
            sigma2 = float(rng.uniform(0.2, 4.0))
            g = GaussianParams([mu], [[sigma2]])
            sd = np.sqrt(sigma2)
            grid = np.linspace(mu - 10 * sd, mu + 10 * sd, 20001)
            dens = np.exp([log_density([x], g) for x in grid])
            assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-4)

    def test_dimension_mismatch(self):
        g = GaussianParams([0.0, 0.0], np.eye(2))
        with pytest.raises(ValueError):
            log_density([0.0], g)


class TestGaussianParamsConstruction:
    def test_rejects_asymmetric(self):
        cov = np.array([[1.0, 0.5], [0.3, 1.0]])
        with pytest.raises(ValueError):
            GaussianParams([0.0, 0.0], cov)

    def test_symmetrizes_tiny_asymmetry(self):
        cov = np.array([[1.0, 0.5 + 4e-11], [0.5, 1.0]])
        g = GaussianParams([0.0, 0.0], cov)
        assert np.array_equal(g.cov, g.cov.T)

    def test_rejects_non_pd(self):
        with pytest.raises(NotPositiveDefinite):
            GaussianParams([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_rejects_tiny_pivot(self):
        with pytest.raises(NotPositiveDefinite):
            GaussianParams([0.0], [[1e-14]])

    def test_arrays_frozen(self):
        g = GaussianParams([0.0], [[1.0]])
        with pytest.raises(ValueError):
            g.cov[0, 0] = 2.0


class TestKlMatchScore:
    def test_identical_params_give_dimension(self):
        rng = child_rng(2, 0)
        for _ in range(10):
            d = int(rng.integers(1, 6))
            g = GaussianParams(rng.normal(size=d), random_spd(rng, d))
            assert kl_match_score(g, g) == pytest.approx(d, abs=1e-10)

    def test_scalar_example(self):
        cluster = GaussianParams([1.0], [[1.0]])
        learned = GaussianParams([0.0], [[1.0]])
        assert kl_match_score(cluster, learned) == pytest.approx(2.0, abs=1e-12)

    def test_matches_direct_expression(self):
        rng = child_rng(2, 1)
        for _ in range(10):
            cluster = GaussianParams(rng.normal(size=2), random_spd(rng, 2))
            learned = GaussianParams(rng.normal(size=2), random_spd(rng, 2))
            inv = np.linalg.inv(cluster.cov)
            dev = cluster.mean - learned.mean
            expected = (np.trace(inv @ learned.cov) + dev @ inv @ dev
                        + np.log(np.linalg.det(cluster.cov)
                                 / np.linalg.det(learned.cov)))
            assert kl_match_score(cluster, learned) == pytest.approx(expected, abs=1e-9)

    def test_argmin_invariant_to_constant_shift(self):
        rng = child_rng(2, 2)
        learned = GaussianParams(rng.normal(size=2), random_spd(rng, 2))
        clusters = [GaussianParams(rng.normal(size=2), random_spd(rng, 2))
                    for _ in range(5)]
        scores = np.array([kl_match_score(c, learned) for c in clusters])
        assert np.argmin(scores) == np.argmin(scores + 123.456)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kl_match_score(GaussianParams([0.0], [[1.0]]),
                           GaussianParams([0.0, 0.0], np.eye(2)))


class TestAssembleCov:
    def test_empty_extension_returns_fixed(self):
        fixed = random_spd(child_rng(3, 0), 3)
        part = PartitionedCov(fixed, np.zeros((3, 0)), np.zeros((0, 0)))
        assert np.array_equal(assemble_cov(part), 0.5 * (fixed + fixed.T))

    def test_block_identity(self):
        part = PartitionedCov(np.eye(1), [[0.0]], [[1.0]])
        assert np.array_equal(assemble_cov(part), np.eye(2))

    def test_invalid_schur_complement(self):
        part = PartitionedCov([[1.0]], [[2.0]], [[1.0]])
        # Schur complement is 1 - 4 = -3; eigenvalue check confirms indefinite.
        raw = np.array([[1.0, 2.0], [2.0, 1.0]])
        assert np.linalg.eigvalsh(raw).min() < 0
        with pytest.raises(InvalidAugmentedCovariance):
            assemble_cov(part)

    def test_assembled_eigenvalues_positive(self):
        rng = child_rng(3, 1)
        for trial in range(25):
            p = int(rng.integers(2, 6))
            q = int(rng.integers(2, 6))
            full = random_spd(rng, p + q)
            part = PartitionedCov(full[:p, :p], full[:p, p:], full[p:, p:])
            assembled = assemble_cov(part)
            assert np.linalg.eigvalsh(assembled).min() > 0

    def test_schur_complement_value(self):
        rng = child_rng(3, 2)
        full = random_spd(rng, 4)
        part = PartitionedCov(full[:2, :2], full[:2, 2:], full[2:, 2:])
        expected = full[2:, 2:] - full[:2, 2:].T @ np.linalg.inv(full[:2, :2]) @ full[:2, 2:]
        assert schur_complement(part) == pytest.approx(expected, abs=1e-10)

    def test_is_positive_definite_gate(self):
        assert is_positive_definite(np.eye(2))
        assert not is_positive_definite(np.array([[1.0, 2.0], [2.0, 1.0]]))
