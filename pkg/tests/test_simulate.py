import numpy as np
import pytest
from scipy import stats

from damda.gaussian import is_positive_definite
from damda.rng import child_rng
from damda.simulate import (
    ScenarioConfig,
    ari,
    export_world,
    generate_world,
    matched_error,
    sample_wishart,
    write_metrics_csv,
)

from helpers import greedy_matched_error_oracle, pairwise_ari


class TestSampleWishart:
    def test_draws_pass_pd_gate(self):
        rng = child_rng(13, 0)
        scale = np.array([[1.0, 0.7], [0.7, 1.0]])
        for _ in range(50):
            assert is_positive_definite(sample_wishart(5.0, scale, rng))

    def test_monte_carlo_mean_matches_df_times_scale(self):
        rng = child_rng(13, 1)
        dim, df = 3, 10.0
        scale = np.full((dim, dim), 0.7) + 0.3 * np.eye(dim)
        draws = np.mean([sample_wishart(df, scale, rng) for _ in range(5000)], axis=0)
        rel = np.abs(draws - df * scale) / (df * np.abs(scale))
        assert rel.max() < 0.05

    def test_univariate_reduces_to_chi_square(self):
        rng = child_rng(13, 2)
        draws = np.array([sample_wishart(5.0, [[1.0]], rng)[0, 0]
                          for _ in range(2000)])
        assert stats.kstest(draws, "chi2", args=(5,)).pvalue > 0.01

    def test_low_degrees_of_freedom_rejected(self):
        with pytest.raises(ValueError):
            sample_wishart(1.0, np.eye(3), child_rng(13, 3))


class TestGenerateWorld:
    def config(self, **kw):
        base = dict(n_gen=4, n_cor=3, n_noi=3, train_size=120, test_size=400,
                    hidden_classes_removed=2, seed=7)
        base.update(kw)
        return ScenarioConfig(**base)

    def test_shapes(self):
        world = generate_world(self.config())
        assert world.y_test.shape == (400, 10)
        assert world.x_train.shape == (120, 8)   # 2 * n_gen observed under 1.a
        assert world.observed_in_training.sum() == 8
        assert len(world.variable_names) == 10
        assert world.variable_roles == ["Gen"] * 4 + ["Cor"] * 3 + ["Noi"] * 3

    def test_rule_1a_observes_every_generative_variable(self):
        world = generate_world(self.config())
        assert world.observed_in_training[:4].all()

    def test_training_labels_cover_observed_classes_only(self):
        world = generate_world(self.config())
        assert sorted(set(world.labels_train.tolist())) == world.observed_classes
        assert len(world.observed_classes) == 2
        assert sorted(set(world.labels_test.tolist())) == [0, 1, 2, 3]

    def test_cor_columns_track_their_parents(self):
        world = generate_world(self.config())
        gen = world.y_test[:, :4]
        for j in range(3):
            cor = world.y_test[:, 4 + j]
            best = max(abs(float(np.corrcoef(cor, gen[:, g])[0, 1]))
                       for g in range(4))
            assert best > 0.3

    def test_cor_marginally_informative_against_noise(self):
        # Two-sample t statistics between classes should be larger on a Cor
        # column than on a Noi column for most replicates.
        wins = 0
        for rep in range(20):
            world = generate_world(self.config(seed=100 + rep))
            a, b = world.observed_classes
            rows_a = world.labels_test == a
            rows_b = world.labels_test == b

            def tstat(col):
                return abs(stats.ttest_ind(world.y_test[rows_a, col],
                                           world.y_test[rows_b, col],
                                           equal_var=False).statistic)

            cor_best = max(tstat(4 + j) for j in range(3))
            noi_best = max(tstat(7 + j) for j in range(3))
            wins += cor_best > noi_best
        assert wins > 10

    def test_same_seed_bit_reproducible(self):
        a = generate_world(self.config())
        b = generate_world(self.config())
        assert np.array_equal(a.x_train, b.x_train)
        assert np.array_equal(a.y_test, b.y_test)
        assert np.array_equal(a.labels_test, b.labels_test)

    def test_uncorrelated_noise_flag(self):
        world = generate_world(self.config(noi_correlated=False, test_size=3000))
        noi = world.y_test[:, 7:]
        corr = np.corrcoef(noi.T)
        off = corr[~np.eye(3, dtype=bool)]
        assert np.abs(off).max() < 0.1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ScenarioConfig(n_gen=1, n_cor=1, n_noi=1, train_size=10, test_size=10)
        with pytest.raises(ValueError):
            self.config(hidden_classes_removed=4)

    def test_export_world(self, tmp_path):
        world = generate_world(self.config())
        paths = export_world(world, tmp_path)
        header = open(paths["train"]).readline().strip().split(",")
        assert header[-1] == "label" and len(header) == 9
        header_test = open(paths["test"]).readline().strip().split(",")
        assert header_test == world.variable_names
        import json
        sidecar = json.load(open(paths["roles"]))
        assert len(sidecar["labels_test"]) == 400
        assert sidecar["observed_classes"] == world.observed_classes


class TestAri:
    def test_identical_partitions(self):
        assert ari([1, 1, 2, 2], [1, 1, 2, 2]) == 1.0

    def test_label_permutation_invariance(self):
        assert ari([1, 1, 2, 2], [2, 2, 1, 1]) == 1.0

    def test_contingency_oracle_example(self):
        a = [1, 1, 2, 2]
        b = [1, 2, 1, 2]
        assert ari(a, b) == pytest.approx(pairwise_ari(a, b), abs=1e-12)

    def test_matches_pairwise_oracle_on_random_partitions(self):
        rng = child_rng(14, 0)
        for _ in range(50):
            n = int(rng.integers(2, 13))
            a = rng.integers(0, 3, size=n)
            b = rng.integers(0, 3, size=n)
            assert ari(a, b) == pytest.approx(pairwise_ari(a, b), abs=1e-12)

    def test_symmetry_and_upper_bound(self):
        rng = child_rng(14, 1)
        for _ in range(30):
            a = rng.integers(0, 4, size=30)
            b = rng.integers(0, 4, size=30)
            assert ari(a, b) == pytest.approx(ari(b, a), abs=1e-12)
            assert ari(a, b) <= 1.0 + 1e-12

    def test_random_partitions_center_near_zero(self):
        rng = child_rng(14, 2)
        values = []
        for _ in range(500):
            a = rng.integers(0, 3, size=100)
            b = rng.integers(0, 3, size=100)
            values.append(ari(a, b))
        assert abs(float(np.mean(values))) < 0.05

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ari([1, 2], [1, 2, 3])


class TestMatchedError:
    def test_identical_partitions(self):
        assert matched_error([1, 1, 2], [1, 1, 2]) == 0.0

    def test_permuted_labels_absorbed(self):
        assert matched_error([1, 1, 2, 2], ["b", "b", "a", "a"]) == 0.0

    def test_documented_four_row_example(self):
        assert matched_error([1, 1, 1, 2], [1, 1, 2, 2]) == pytest.approx(0.25)

    def test_unmatched_prediction_classes_count_as_errors(self):
        # Three predicted classes, two true ones: the leftover predicted
        # class has no match, so its rows are errors.
        assert matched_error([1, 1, 2, 2], [1, 1, 2, 3]) == pytest.approx(0.25)

    def test_relabeling_invariance(self):
        rng = child_rng(14, 3)
        for _ in range(30):
            truth = rng.integers(0, 3, size=20)
            pred = rng.integers(0, 3, size=20)
            relabeled = np.array(["xyz"[v] for v in pred])
            assert matched_error(truth, pred) == pytest.approx(
                matched_error(truth, relabeled), abs=1e-12)

    def test_matches_exhaustive_oracle(self):
        rng = child_rng(14, 4)
        for _ in range(50):
            n = int(rng.integers(2, 13))
            truth = rng.integers(0, 4, size=n)
            pred = rng.integers(0, 4, size=n)
            assert matched_error(truth, pred) == pytest.approx(
                greedy_matched_error_oracle(truth, pred), abs=1e-12)


class TestMetricsCsv:
    def test_round_trip_fields(self, tmp_path):
        rows = [{"replicate": 0, "scenario": "1.a", "method": "damda",
                 "ari": 0.5, "error": 0.25, "H_selected": 2}]
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, rows)
        lines = path.read_text().splitlines()
        assert lines[0] == "replicate,scenario,method,ari,error,H_selected"
        assert lines[1] == "0,1.a,damda,0.5,0.25,2"
