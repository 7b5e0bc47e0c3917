import numpy as np
import pytest

from scoremix.schedule import build_schedule
from scoremix.scorefield import (
    AnalyticGaussianField,
    ConceptLabel,
    GaussianConceptSpec,
    GridOracleField,
    epsilon_of_gaussian,
    field_eval,
    gaussian_mixture_density,
)

from .conftest import spec2


def make_sched_with_ab(ab_target, T=10):
    """Pick the step of a dense schedule whose alpha_bar is closest to a target."""
    sched = build_schedule("cosine", 1000)
    t = int(np.argmin(np.abs(sched.alpha_bar - ab_target)))
    return sched, t


class TestEpsilonOfGaussian:
    def test_unit_diffused_variance_case(self):
        # uncond N(0, I): diffused variance is alpha_bar + (1 - alpha_bar) = 1,
        # so eps = sqrt(1 - alpha_bar) * x regardless of t
        sched = build_schedule("cosine", 1000)
        spec = spec2([0, 0], [1, 1])
        for t in (1, 400, 1000):
            ab = sched.alpha_bar[t]
            eps = epsilon_of_gaussian(spec, sched, np.array([1.0, 0.0]), t)
            assert eps == pytest.approx([np.sqrt(1 - ab), 0.0], abs=1e-14)

    def test_zero_at_diffused_mean(self):
        sched = build_schedule("linear", 100)
        spec = spec2([0.7, -0.3], [0.5, 2.0])
        for t in (1, 50, 100):
            x = np.sqrt(sched.alpha_bar[t]) * spec.mean
            assert epsilon_of_gaussian(spec, sched, x, t) == pytest.approx([0.0, 0.0], abs=1e-14)

    def test_half_alpha_bar_closed_form(self):
        # mu=(1,0), s2=0.25, alpha_bar=0.5, x=0:
        # eps = sqrt(.5) * (0 - sqrt(.5)) / (0.125 + 0.5) = -0.8
        sched, t = make_sched_with_ab(0.5)
        ab = sched.alpha_bar[t]
        spec = spec2([1, 0], [0.25, 0.25])
        eps = epsilon_of_gaussian(spec, sched, np.zeros(2), t)
        expected = np.sqrt(1 - ab) * (0 - np.sqrt(ab)) / (ab * 0.25 + (1 - ab))
        assert eps[0] == pytest.approx(expected, rel=1e-12)
        assert eps[0] == pytest.approx(-0.8, abs=0.01)  # at alpha_bar ~ 0.5
        assert eps[1] == 0.0

    def test_inversion_identity(self):
        # eps * (ab s^2 + 1-ab)/sqrt(1-ab) + sqrt(ab) mu recovers x exactly
        sched = build_schedule("cosine", 1000)
        spec = spec2([0.3, -1.2], [0.4, 1.7])
        rng = np.random.default_rng(0)
        for t in (1, 250, 777, 1000):
            ab = sched.alpha_bar[t]
            x = rng.normal(size=(8, 2))
            eps = epsilon_of_gaussian(spec, sched, x, t)
            back = eps * (ab * spec.var + 1 - ab) / np.sqrt(1 - ab) + np.sqrt(ab) * spec.mean
            assert back == pytest.approx(x, rel=1e-12, abs=1e-12)

    def test_errors(self):
        sched = build_schedule("cosine", 10)
        with pytest.raises(ValueError):
            GaussianConceptSpec(mean=np.zeros(2), var=np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            epsilon_of_gaussian(spec2([0, 0], [1, 1]), sched, np.zeros(2), 0)
        with pytest.raises(ValueError):
            epsilon_of_gaussian(spec2([0, 0], [1, 1]), sched, np.zeros(3), 5)


class TestAnalyticField:
    def test_null_label_is_uncond(self, pair_field):
        x = np.array([0.4, -0.2])
        a = pair_field.epsilon(x, 300, ConceptLabel.null())
        b = epsilon_of_gaussian(pair_field.uncond, pair_field.sched, x, 300)
        assert np.array_equal(a, b)

    def test_purity(self, pair_field):
        x = np.array([[0.1, 0.2], [-1.0, 0.5]])
        a = field_eval(pair_field, x, 123, ConceptLabel.discrete(1))
        b = field_eval(pair_field, x, 123, ConceptLabel.discrete(1))
        assert np.array_equal(a, b)

    def test_unknown_label(self, pair_field):
        with pytest.raises(ValueError, match="no concept"):
            pair_field.epsilon(np.zeros(2), 10, ConceptLabel.discrete(7))

    def test_dimension_mismatch(self, pair_field):
        with pytest.raises(ValueError, match="dimension"):
            field_eval(pair_field, np.zeros(3), 10, ConceptLabel.null())


class TestGridOracle:
    def test_matches_analytic_standard_normal(self, cosine1000):
        sched, t = make_sched_with_ab(0.75)
        oracle = GridOracleField.from_density_fn(gaussian_mixture_density([0, 0], [1, 1]), sched)
        eps = oracle.epsilon(np.array([1.0, 0.0]), t)
        ab = sched.alpha_bar[t]
        assert eps == pytest.approx([np.sqrt(1 - ab) * 1.0, 0.0], abs=1e-3)
        assert eps[0] == pytest.approx(0.5, abs=1e-2)  # sqrt(1 - 0.75)

    def test_symmetry_center(self, cosine1000):
        mix = gaussian_mixture_density([[-1, 0], [1, 0]], [[0.2, 0.2], [0.2, 0.2]])
        oracle = GridOracleField.from_density_fn(mix, cosine1000)
        eps = oracle.epsilon(np.zeros(2), 500)
        assert eps == pytest.approx([0.0, 0.0], abs=1e-6)

    def test_pure_noise_regime(self, cosine1000):
        # two tight bumps at +-1; at t=T the diffused marginal is ~N(0, I),
        # so eps ~ x; the oracle value IS the quadrature, the analytic
        # mixture-of-diffused-gaussians value is the reference
        mix = gaussian_mixture_density([[-1, 0], [1, 0]], [[0.04, 0.04], [0.04, 0.04]])
        oracle = GridOracleField.from_density_fn(mix, cosine1000)
        t = 1000
        ab = cosine1000.alpha_bar[t]
        x = np.array([0.9, -0.4])
        eps = oracle.epsilon(x, t)
        assert ab < 1e-6
        assert eps == pytest.approx(x, rel=0.02)

    def test_agreement_over_spotcheck_steps(self, cosine1000):
        from scoremix.evaluate import field_rmse, probe_grid

        spec = spec2([1.0, 0.0], [0.25, 0.25])
        analytic = AnalyticGaussianField(uncond=spec, cond={}, sched=cosine1000)
        oracle = GridOracleField.from_density_fn(gaussian_mixture_density(spec.mean, spec.var), cosine1000)
        probes = probe_grid(-0.5, 1.5)
        for t in (1, 250, 500, 750, 1000):
            rms = field_rmse(analytic, oracle, probes, t)
            assert rms < 1e-3, f"t={t}: rms={rms}"

    def test_boundary_rejection(self, cosine1000):
        oracle = GridOracleField.from_density_fn(gaussian_mixture_density([0, 0], [1, 1]), cosine1000)
        with pytest.raises(ValueError, match="inside"):
            oracle.epsilon(np.array([3.99, 0.0]), 100)
        with pytest.raises(ValueError):
            oracle.epsilon(np.zeros(2), 0)

    def test_normalization_enforced(self, cosine1000):
        n = 64
        bad = np.full((n, n), 1.0)  # integrates to 64 over [-4, 4]^2
        with pytest.raises(ValueError, match="integrates"):
            GridOracleField(density=bad, lo=-4, hi=4, sched=cosine1000)

    def test_one_dimensional_grid(self, cosine1000):
        oracle = GridOracleField.from_density_fn(
            gaussian_mixture_density([[0.0]], [[1.0]]), cosine1000, dim=1
        )
        sched, t = make_sched_with_ab(0.75)
        eps = oracle.epsilon(np.array([1.0]), t)
        ab = cosine1000.alpha_bar[t]
        assert eps[0] == pytest.approx(np.sqrt(1 - ab), abs=1e-3)


class TestTrainedFieldSanity:
    def test_finite_and_bounded(self, quick_trained_field):
        rng = np.random.default_rng(3)
        x = rng.normal(scale=2.0, size=(64, 2))
        for t in (1, 500, 1000):
            for label in (ConceptLabel.null(), ConceptLabel.discrete(0)):
                eps = quick_trained_field.epsilon(x, t, label)
                assert np.all(np.isfinite(eps))
                assert np.max(np.abs(eps)) < 1e3
