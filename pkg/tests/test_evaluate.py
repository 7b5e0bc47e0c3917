import numpy as np
import pytest

from scoremix.compose import Term
from scoremix.data import DatasetConfig, cell_centers, gen_blobs, gen_points2d, rasterize_blobs
from scoremix.evaluate import (
    BlobsVerifier,
    PointsVerifier,
    UnderpoweredVerifier,
    accuracy,
    concept_satisfied,
    energy_distance,
    field_rmse,
    metrics_report,
    probe_grid,
    train_binary_classifier,
)
from scoremix.scorefield import ConceptLabel

from .conftest import spec2

C0 = ConceptLabel.discrete(0)
C1 = ConceptLabel.discrete(1)

FAR_CONCEPTS = (spec2([-2, 0], [0.05, 0.05]), spec2([2, 0], [0.05, 0.05]))


class TestPointsVerifier:
    def test_sample_at_mean_satisfies_own_concept_only(self):
        v = PointsVerifier(concepts=FAR_CONCEPTS)
        at_a = np.array([-2.0, 0.0])
        assert concept_satisfied(at_a, C0, v)
        assert not concept_satisfied(at_a, C1, v)

    def test_unknown_concept(self):
        v = PointsVerifier(concepts=FAR_CONCEPTS)
        with pytest.raises(ValueError):
            concept_satisfied(np.zeros(2), ConceptLabel.discrete(5), v)


class TestBlobsVerifier:
    def grid(self):
        return BlobsVerifier(grid_h=16, grid_w=16)

    def test_bright_target_cell_true(self):
        ys, xs = cell_centers(16, 16)
        coord = (xs[5], ys[9])
        scene = 2.0 * rasterize_blobs(np.array([coord]), 16, 16, 1.0) - 1.0
        assert concept_satisfied(scene, ConceptLabel.of_coord(coord), self.grid())

    def test_empty_scene_false(self):
        scene = np.full(256, -1.0)  # all intensity 0
        assert not concept_satisfied(scene, ConceptLabel.of_coord((0.0, 0.0)), self.grid())

    def test_threshold_above_max_never_satisfied(self):
        v = BlobsVerifier(grid_h=16, grid_w=16, tau=1.01)
        ys, xs = cell_centers(16, 16)
        coord = (xs[8], ys[8])
        scene = 2.0 * rasterize_blobs(np.array([coord]), 16, 16, 1.0) - 1.0
        assert not concept_satisfied(scene, ConceptLabel.of_coord(coord), v)

    def test_real_scenes_satisfy_their_labels(self):
        ds = gen_blobs(DatasetConfig(kind="blobs", n=500, seed=21))
        v = self.grid()
        hits = [concept_satisfied(x, lab, v) for x, lab in zip(ds.x0, ds.labels)]
        assert np.mean(hits) >= 0.99


class TestAccuracy:
    def test_all_concepts_required(self):
        v = PointsVerifier(concepts=FAR_CONCEPTS)
        samples = np.array([[-2.0, 0.0], [2.0, 0.0]])
        assert accuracy(samples, [Term(C0)], v) == 0.5
        assert accuracy(samples, [Term(C0), Term(C1)], v) == 0.0

    def test_negated_concept_must_be_absent(self):
        v = PointsVerifier(concepts=FAR_CONCEPTS)
        samples = np.array([[-2.0, 0.0], [2.0, 0.0]])
        assert accuracy(samples, [Term(C0), Term(C1, "negative")], v) == 0.5

    def test_disjoint_support_unconditional_near_zero(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(size=(2000, 2))  # split between the two far concepts
        v = PointsVerifier(concepts=FAR_CONCEPTS)
        assert accuracy(samples, [Term(C0), Term(C1)], v) == pytest.approx(0.0, abs=0.01)

    def test_duplication_invariance(self):
        v = PointsVerifier(concepts=FAR_CONCEPTS)
        rng = np.random.default_rng(1)
        samples = rng.normal(loc=[-2, 0], scale=0.4, size=(257, 2))
        once = accuracy(samples, [Term(C0)], v)
        twice = accuracy(np.vstack([samples, samples]), [Term(C0)], v)
        assert once == twice

    def test_empty_terms_rejected(self):
        v = PointsVerifier(concepts=FAR_CONCEPTS)
        with pytest.raises(ValueError):
            accuracy(np.zeros((3, 2)), [], v)


class TestEnergyDistance:
    def test_identical_multisets_zero(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(300, 2))
        assert abs(energy_distance(a, a)) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(200, 2)), rng.normal(size=(150, 2)) + 1
        assert abs(energy_distance(a, b) - energy_distance(b, a)) < 1e-12

    def test_same_distribution_within_bootstrap_band(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=(2000, 2)), rng.normal(size=(2000, 2))
        observed = energy_distance(a, b)
        # bootstrap the null by resampling from the pooled set
        pooled = np.vstack([a, b])
        null = []
        for _ in range(200):
            idx = rng.integers(0, 4000, size=4000)
            null.append(energy_distance(pooled[idx[:2000]], pooled[idx[2000:]]))
        assert observed <= np.mean(null) + 3 * np.std(null)

    def test_separated_gaussians_match_mc_oracle(self):
        # frozen oracle: 2E|a-b| - E|a-a'| - E|b-b'| for N(0,I2) vs N((3,0),I2)
        # from 1e6 independent pairs per expectation
        oracle = 3.174
        rng = np.random.default_rng(5)
        a = rng.standard_normal((2000, 2))
        b = rng.standard_normal((2000, 2)) + [3, 0]
        assert energy_distance(a, b) == pytest.approx(oracle, rel=0.10)

    def test_degenerate_sizes_rejected(self):
        with pytest.raises(ValueError):
            energy_distance(np.zeros((1, 2)), np.zeros((5, 2)))


class TestFieldRmse:
    def test_field_against_itself_zero(self, pair_field):
        probes = probe_grid(-1, 1)
        assert field_rmse(pair_field, pair_field, probes, 100) == 0.0

    def test_analytic_vs_grid_small(self, cosine1000):
        from scoremix.scorefield import AnalyticGaussianField, GridOracleField, gaussian_mixture_density

        spec = spec2([0, 0], [1, 1])
        analytic = AnalyticGaussianField(uncond=spec, cond={}, sched=cosine1000)
        oracle = GridOracleField.from_density_fn(gaussian_mixture_density([0, 0], [1, 1]), cosine1000)
        assert field_rmse(analytic, oracle, probe_grid(-1, 1), 500) < 1e-3


class TestLearnedVerifier:
    def test_separable_points_reach_high_accuracy(self):
        ds = gen_points2d(DatasetConfig(kind="points2d", n=2000, seed=31, concepts=FAR_CONCEPTS))
        v = train_binary_classifier(ds, C0, seed=1)
        assert v.held_out_accuracy >= 0.99
        assert concept_satisfied(np.array([-2.0, 0.0]), C0, v)
        assert not concept_satisfied(np.array([2.0, 0.0]), C0, v)

    def test_determinism(self):
        ds = gen_points2d(DatasetConfig(kind="points2d", n=1500, seed=31, concepts=FAR_CONCEPTS))
        a = train_binary_classifier(ds, C0, seed=9)
        b = train_binary_classifier(ds, C0, seed=9)
        assert np.array_equal(a.weights, b.weights) and a.bias == b.bias

    def test_shuffled_labels_refused(self):
        ds = gen_points2d(DatasetConfig(kind="points2d", n=1500, seed=31, concepts=FAR_CONCEPTS))
        rng = np.random.default_rng(7)
        ds.labels = [ds.labels[i] for i in rng.permutation(len(ds.labels))]
        with pytest.raises(UnderpoweredVerifier):
            train_binary_classifier(ds, C0, seed=1)

    def test_blobs_classifier_agrees_with_analytic(self):
        ds = gen_blobs(DatasetConfig(kind="blobs", n=1500, seed=41))
        ys, xs = cell_centers(16, 16)
        coord = ConceptLabel.of_coord((xs[4], ys[11]))
        learned = train_binary_classifier(ds, coord, seed=2)
        analytic = BlobsVerifier(grid_h=16, grid_w=16)
        hold = gen_blobs(DatasetConfig(kind="blobs", n=600, seed=43))
        a = analytic.satisfied(hold.x0, coord)
        l = learned.satisfied(hold.x0, coord)
        assert np.mean(a == l) >= 0.95


def test_metrics_report_shape():
    v = PointsVerifier(concepts=FAR_CONCEPTS)
    rng = np.random.default_rng(11)
    samples = rng.normal(loc=[-2, 0], scale=0.3, size=(500, 2))
    ref = rng.normal(loc=[-2, 0], scale=0.3, size=(500, 2))
    rep = metrics_report(samples, [Term(C0)], v, reference=ref)
    assert set(rep) == {"accuracy", "energy_distance", "n", "verifier_kind", "per_concept_satisfaction"}
    assert rep["n"] == 500 and rep["verifier_kind"] == "analytic"
    assert rep["per_concept_satisfaction"][0]["label"] == "d0"
