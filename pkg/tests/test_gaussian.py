import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import gammaln

from oracles import niw_log_evidence_quadrature
from robustclust.gaussian import (EffectiveRlpp, LabelPrior, NiwModel, UncertaintyClass,
                                  build_effective, cluster_stats, log_label_weight,
                                  log_multivariate_gamma, partition_probs,
                                  posterior_label_probs, sample_inverse_wishart, sample_rlpp)
from robustclust.partitions import Partition

SEPARATED = np.array([-10.1, -9.9, 9.9, 10.1])


def unit_model(l=2, kappa=3.0):
    return NiwModel.symmetric(l, 1, m=0.0, nu=1.0, kappa=kappa, psi=[[1.0]])


class TestMultivariateGamma:
    @pytest.mark.parametrize("d, a, want", [(1, 2, 0.0), (2, 2, math.log(math.pi / 2)),
                                            (1, 0.5, math.log(math.sqrt(math.pi)))])
    def test_values(self, d, a, want):
        assert log_multivariate_gamma(d, a) == pytest.approx(want, abs=1e-12)

    def test_product_formula(self):
        d, a = 3, 4.2
        want = d * (d - 1) / 4 * math.log(math.pi) + sum(gammaln(a + (1 - j) / 2)
                                                         for j in range(1, d + 1))
        assert log_multivariate_gamma(d, a) == pytest.approx(want)

    def test_domain(self):
        with pytest.raises(ValueError):
            log_multivariate_gamma(2, 0.4)


class TestClusterStats:
    def test_pair(self):
        n, mean, cov = cluster_stats([[0.0], [2.0]])
        assert n == 2 and mean[0] == 1 and cov[0, 0] == 2

    def test_singleton(self):
        n, mean, cov = cluster_stats([[5.0]])
        assert n == 1 and mean[0] == 5 and cov is None

    def test_empty(self):
        assert cluster_stats(np.empty((0, 2)))[0] == 0


class TestNiwModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            NiwModel.symmetric(2, 2, kappa=0.5)
        with pytest.raises(ValueError):
            NiwModel.symmetric(2, 1, nu=0.0)
        with pytest.raises(ValueError):
            NiwModel.symmetric(2, 2, psi=[[1.0, 2.0], [2.0, 1.0]])

    def test_empty_label_term(self):
        m = NiwModel.symmetric(2, 2, kappa=5.0, psi=[[2.0, 0.3], [0.3, 1.0]], nu=0.7)
        pts = np.array([[0.1, 0.2], [0.3, -0.5]])
        both = log_label_weight(pts, [1, 1], m)
        # label 2 is empty; its factor is the prior normalizer
        empty = (log_multivariate_gamma(2, 2.5) - np.log(0.7)
                 - 2.5 * np.log(np.linalg.det(m.psi[1])))
        single = NiwModel(m.m[:1], m.nu[:1], m.kappa[:1], m.psi[:1])
        assert both == pytest.approx(log_label_weight(pts, [1, 1], single) + empty, abs=1e-12)

    def test_marginal_matches_quadrature(self):
        m = unit_model()
        lml = m.log_marginal_likelihood([[1.0], [-1.0]], [[1, 1]])[0]
        assert lml == pytest.approx(niw_log_evidence_quadrature([1.0, -1.0]), rel=1e-8)

    def test_label_swap_symmetry(self):
        m = NiwModel.symmetric(2, 2)
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(6, 2))
        phi = np.array([1, 2, 1, 2, 2, 1])
        assert log_label_weight(pts, phi, m) == pytest.approx(log_label_weight(pts, 3 - phi, m))

    def test_translation_invariance(self):
        m = NiwModel.symmetric(2, 2, m=[1.0, -2.0])
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(6, 2))
        labels = np.array([[1, 1, 2, 2, 1, 2], [1, 2, 1, 2, 1, 2]])
        a = m.log_marginal_likelihood(pts, labels)
        shifted = NiwModel.symmetric(2, 2, m=[4.0, 1.0])
        b = shifted.log_marginal_likelihood(pts + [3.0, 3.0], labels)
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            NiwModel.symmetric(2, 2).log_label_weights(np.zeros((3, 3)), [[1, 1, 2]])


class TestPosterior:
    def test_separated_example(self):
        probs = posterior_label_probs(SEPARATED[:, None], LabelPrior.fixed_sizes((2, 2)),
                                      unit_model())
        assert len(probs) == 6
        assert sum(probs.values()) == pytest.approx(1.0, abs=1e-12)
        top = sorted(probs, key=probs.get, reverse=True)[:2]
        assert set(top) == {(1, 1, 2, 2), (2, 2, 1, 1)}

    def test_two_points_symmetric(self):
        probs = posterior_label_probs([[0.3], [1.7]], LabelPrior.fixed_sizes((1, 1)), unit_model())
        assert probs == pytest.approx({(1, 2): 0.5, (2, 1): 0.5})

    def test_partition_probs(self):
        model = unit_model()
        prior = LabelPrior.fixed_sizes((2, 2))
        lf = posterior_label_probs(SEPARATED[:, None], prior, model)
        parts = partition_probs(SEPARATED[:, None], prior, model)
        assert len(parts) == 3
        assert sum(parts.values()) == pytest.approx(1.0, abs=1e-12)
        best = Partition.from_labels([1, 1, 2, 2])
        assert max(parts, key=parts.get) == best
        assert parts[best] == pytest.approx(2 * lf[(1, 1, 2, 2)], rel=1e-12)

    def test_matches_quadrature(self):
        pts = np.array([0.4, -0.3, 1.9])
        prior = LabelPrior.fixed_sizes((2, 1))
        probs = posterior_label_probs(pts[:, None], prior, unit_model())
        logs = {}
        for phi in probs:
            phi_a = np.array(phi)
            logs[phi] = sum(niw_log_evidence_quadrature(pts[phi_a == y]) for y in (1, 2))
        top = max(logs.values())
        z = sum(math.exp(v - top) for v in logs.values())
        for phi, p in probs.items():
            assert p == pytest.approx(math.exp(logs[phi] - top) / z, rel=1e-6)

    def test_explicit_table(self):
        table = {(1, 1, 2): 0.25, (1, 2, 2): 0.75}
        probs = posterior_label_probs([[0.0], [0.1], [0.2]], LabelPrior("explicit-table",
                                                                       table=table), unit_model())
        assert set(probs) == set(table)

    def test_empty_support(self):
        with pytest.raises(ValueError):
            LabelPrior.fixed_sizes((2, 2)).support(5)

    def test_support_is_size_multiset(self):
        labels, logp = LabelPrior.fixed_sizes((2, 1)).support(3, 2)
        assert labels.shape == (6, 3)
        assert sorted(np.bincount(labels[0], minlength=3)[1:]) == [1, 2]
        np.testing.assert_allclose(np.exp(logp), 1 / 6)


class TestEffective:
    def test_singleton_class(self):
        m = unit_model()
        eff = build_effective(UncertaintyClass((m,), (1.0,)))
        labels = np.array([[1, 1, 2], [1, 2, 2]])
        pts = [[0.1], [0.5], [2.0]]
        np.testing.assert_allclose(eff.log_likelihood(pts, labels),
                                   m.log_marginal_likelihood(pts, labels), atol=1e-12)

    def test_identical_states(self):
        m = unit_model()
        eff = EffectiveRlpp(UncertaintyClass((m, m), (0.5, 0.5)))
        labels = np.array([[1, 1, 2], [1, 2, 1]])
        pts = [[0.1], [0.5], [2.0]]
        np.testing.assert_allclose(eff.log_likelihood(pts, labels),
                                   m.log_marginal_likelihood(pts, labels), atol=1e-12)

    def test_mixture(self):
        a, b = unit_model(), NiwModel.symmetric(2, 1, psi=[[4.0]], kappa=3.0)
        eff = EffectiveRlpp(UncertaintyClass((a, b), (0.3, 0.7)))
        pts, lab = [[0.1], [0.5], [2.0]], [[1, 1, 2]]
        want = np.log(0.3 * np.exp(a.log_marginal_likelihood(pts, lab))
                      + 0.7 * np.exp(b.log_marginal_likelihood(pts, lab)))
        np.testing.assert_allclose(eff.log_likelihood(pts, lab), want, rtol=1e-12)

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            UncertaintyClass((unit_model(),), (0.9,))


class TestSampling:
    def test_sizes(self):
        pts, labels, _ = sample_rlpp(NiwModel.symmetric(2, 3), (5, 5), 3)
        assert pts.shape == (10, 3)
        assert sorted(np.bincount(labels)[1:]) == [5, 5]

    def test_deterministic(self):
        a = sample_rlpp(NiwModel.symmetric(2, 2), (4, 3), 11)
        b = sample_rlpp(NiwModel.symmetric(2, 2), (4, 3), 11)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_cluster_mean_law(self):
        # with m = 0, nu = 1, d = 1 the mean is Student-t with kappa dof and scale
        # sqrt(psi / kappa); at kappa = 3 its variance psi/(kappa - 2) = 1 but mu**2 has
        # infinite variance, so the law is checked whole instead of via a standard error
        model = NiwModel.symmetric(1, 1, kappa=3.0, psi=[[1.0]])
        rng = np.random.default_rng(2024)
        mus = np.array([model.sample_parameters(rng)[0][0, 0] for _ in range(20_000)])
        assert stats.kstest(mus, stats.t(df=3, scale=np.sqrt(1 / 3)).cdf).pvalue > 1e-3

    def test_cluster_mean_variance(self):
        model = NiwModel.symmetric(1, 1, kappa=9.0, psi=[[1.0]])
        rng = np.random.default_rng(7)
        mus = np.array([model.sample_parameters(rng)[0][0, 0] for _ in range(20_000)])
        sq = mus ** 2
        assert abs(sq.mean() - 1 / 7) < 3 * sq.std(ddof=1) / np.sqrt(sq.size)

    def test_inverse_wishart_mean(self):
        psi = np.array([[2.0, 0.5], [0.5, 1.0]])
        rng = np.random.default_rng(5)
        draws = np.array([sample_inverse_wishart(8.0, psi, rng) for _ in range(20_000)])
        np.testing.assert_allclose(draws.mean(axis=0), psi / (8.0 - 2 - 1), rtol=0.03)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_labels_follow_sizes(self, seed):
        _, labels, _ = sample_rlpp(NiwModel.symmetric(3, 1), (3, 2, 1), seed)
        assert sorted(np.bincount(labels, minlength=4)[1:]) == [1, 2, 3]
