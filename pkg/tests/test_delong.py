import numpy as np
import pytest

from octroi.delong import (
    ComparisonMode,
    auroc_variance,
    delong_test,
    structural_components,
)
from octroi.metrics import ScoreSet, auroc


def make_set(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    return ScoreSet(scores=scores, labels=labels, subject_ids=tuple(f"s{i}" for i in range(len(scores))))


def random_labels(rng, n):
    while True:
        labels = rng.integers(0, 2, size=n)
        if 1 < labels.sum() < n - 1:  # at least 2 per class for variances
            return labels


def random_pair(rng, n_max=60, paired=True):
    n = int(rng.integers(8, n_max + 1))
    labels = random_labels(rng, n)
    grid = 12
    a = make_set(rng.integers(0, grid + 1, size=n) / grid, labels)
    if paired:
        b = make_set(rng.integers(0, grid + 1, size=n) / grid, labels)
    else:
        m = int(rng.integers(8, n_max + 1))
        b = make_set(rng.integers(0, grid + 1, size=m) / grid, random_labels(rng, m))
    return a, b


def naive_components(score_set):
    """O(n^2) structural components from the pairwise win/tie kernel."""
    x = score_set.scores[score_set.labels == 1]
    y = score_set.scores[score_set.labels == 0]
    psi = (x[:, None] > y[None, :]).astype(float) + 0.5 * (x[:, None] == y[None, :])
    return float(psi.mean()), psi.mean(axis=1), psi.mean(axis=0)


def naive_var(v, theta):
    return float(np.sum((v - theta) ** 2) / (len(v) - 1))


def naive_auc_variance(score_set):
    theta, v10, v01 = naive_components(score_set)
    return naive_var(v10, theta) / len(v10) + naive_var(v01, theta) / len(v01)


def naive_paired_cov(a, b):
    theta_a, v10_a, v01_a = naive_components(a)
    theta_b, v10_b, v01_b = naive_components(b)
    s10 = float(np.sum((v10_a - theta_a) * (v10_b - theta_b)) / (len(v10_a) - 1))
    s01 = float(np.sum((v01_a - theta_a) * (v01_b - theta_b)) / (len(v01_a) - 1))
    return s10 / len(v10_a) + s01 / len(v01_a)


class TestStructuralComponents:
    def test_theta_equals_auroc(self):
        rng = np.random.default_rng(200)
        for _ in range(50):
            a, _ = random_pair(rng)
            theta, _, _ = structural_components(a)
            assert theta == pytest.approx(auroc(a), abs=1e-12)

    def test_fast_matches_naive(self):
        rng = np.random.default_rng(201)
        for _ in range(100):
            a, _ = random_pair(rng)
            theta_f, v10_f, v01_f = structural_components(a)
            theta_n, v10_n, v01_n = naive_components(a)
            assert theta_f == pytest.approx(theta_n, abs=1e-12)
            np.testing.assert_allclose(v10_f, v10_n, atol=1e-12)
            np.testing.assert_allclose(v01_f, v01_n, atol=1e-12)


class TestVariance:
    def test_fast_variance_matches_naive(self):
        rng = np.random.default_rng(202)
        for _ in range(100):
            a, _ = random_pair(rng)
            assert auroc_variance(a) == pytest.approx(naive_auc_variance(a), abs=1e-10)

    def test_paired_covariance_matches_naive(self):
        rng = np.random.default_rng(203)
        for _ in range(50):
            a, b = random_pair(rng, paired=True)
            var_a = auroc_variance(a)
            var_b = auroc_variance(b)
            result = delong_test(a, b, ComparisonMode.PAIRED)
            if result.z == 0.0:
                continue
            var_delta_fast = (result.auroc_a - result.auroc_b) ** 2 / result.z**2
            var_delta_naive = var_a + var_b - 2 * naive_paired_cov(a, b)
            assert var_delta_fast == pytest.approx(var_delta_naive, abs=1e-10)


class TestDelongTest:
    def test_identical_paired_is_p_one(self):
        rng = np.random.default_rng(204)
        for _ in range(10):
            a, _ = random_pair(rng)
            result = delong_test(a, a, ComparisonMode.PAIRED)
            assert result.z == 0.0
            assert result.p_value == 1.0

    def test_symmetric_p_and_antisymmetric_z(self):
        rng = np.random.default_rng(205)
        for mode in ComparisonMode:
            for _ in range(20):
                a, b = random_pair(rng, paired=(mode is ComparisonMode.PAIRED))
                ab = delong_test(a, b, mode)
                ba = delong_test(b, a, mode)
                assert ab.p_value == ba.p_value
                assert ab.z == -ba.z

    def test_large_separation_significant(self):
        rng = np.random.default_rng(206)
        n = 200
        labels = np.r_[np.ones(n, dtype=int), np.zeros(n, dtype=int)]
        perfect = make_set(np.r_[rng.uniform(0.6, 1.0, n), rng.uniform(0.0, 0.4, n)], labels)
        chance = make_set(rng.uniform(0, 1, 2 * n), labels)
        result = delong_test(perfect, chance, ComparisonMode.UNPAIRED)
        assert result.auroc_a == 1.0
        assert result.p_value < 0.001

    def test_unpaired_allows_different_sizes(self):
        a = make_set([0.9, 0.7, 0.2, 0.1], [1, 1, 0, 0])
        b = make_set([0.8, 0.6, 0.5, 0.3, 0.2, 0.4], [1, 1, 1, 0, 0, 0])
        result = delong_test(a, b, ComparisonMode.UNPAIRED)
        assert 0.0 <= result.p_value <= 1.0

    def test_paired_requires_identical_labels(self):
        a = make_set([0.9, 0.7, 0.2, 0.1], [1, 1, 0, 0])
        b = make_set([0.9, 0.7, 0.2, 0.1], [1, 0, 1, 0])
        with pytest.raises(ValueError, match="paired"):
            delong_test(a, b, ComparisonMode.PAIRED)

    def test_degenerate_zero_variance_different_auc(self):
        # Both perfectly separated (zero variance) but different AUROCs
        # cannot be compared.
        a = make_set([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        b = make_set([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0])
        with pytest.raises(ValueError, match="degenerate"):
            delong_test(a, b, ComparisonMode.UNPAIRED)

    def test_zero_variance_equal_auc_is_p_one(self):
        a = make_set([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        b = make_set([0.95, 0.85, 0.15, 0.25], [1, 1, 0, 0])
        result = delong_test(a, b, ComparisonMode.UNPAIRED)
        assert result.p_value == 1.0

    def test_significance_convention(self):
        rng = np.random.default_rng(207)
        n = 200
        labels = np.r_[np.ones(n, dtype=int), np.zeros(n, dtype=int)]
        perfect = make_set(np.r_[rng.uniform(0.6, 1.0, n), rng.uniform(0.0, 0.4, n)], labels)
        chance = make_set(rng.uniform(0, 1, 2 * n), labels)
        assert delong_test(perfect, chance, ComparisonMode.UNPAIRED).significant
        assert not delong_test(chance, chance, ComparisonMode.PAIRED).significant
