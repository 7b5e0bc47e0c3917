import numpy as np
import pytest

from scoremix.data import DatasetConfig, gen_points2d
from scoremix.model import DenoiserConfig, DenoiserField
from scoremix.schedule import build_schedule
from scoremix.scorefield import AnalyticGaussianField, ConceptLabel, GaussianConceptSpec
from scoremix.train import TrainConfig, train_loop


def spec2(mean, var):
    return GaussianConceptSpec(mean=np.asarray(mean, dtype=float), var=np.asarray(var, dtype=float))


@pytest.fixture(scope="session")
def cosine1000():
    return build_schedule("cosine", 1000)


@pytest.fixture(scope="session")
def linear1000():
    return build_schedule("linear", 1000)


@pytest.fixture(scope="session")
def pair_field(cosine1000):
    """Analytic field with a wide unconditional and two unit concepts at ±1."""
    return AnalyticGaussianField(
        uncond=spec2([0.0, 0.0], [4.0, 4.0]),
        cond={
            ConceptLabel.discrete(0): spec2([-1.0, 0.0], [1.0, 1.0]),
            ConceptLabel.discrete(1): spec2([1.0, 0.0], [1.0, 1.0]),
        },
        sched=cosine1000,
    )


@pytest.fixture(scope="session")
def quick_trained_field(cosine1000):
    """A briefly trained two-concept denoiser; fidelity does not matter, only
    that it is a genuine trained network exercising the model code path."""
    concepts = (spec2([-1.0, 0.0], [0.25, 0.25]), spec2([1.0, 0.0], [0.25, 0.25]))
    ds = gen_points2d(DatasetConfig(kind="points2d", n=2000, seed=5, concepts=concepts))
    mcfg = DenoiserConfig(data_dim=2, hidden_widths=(32, 32), time_embed_dim=16, label_embed_dim=16, num_discrete_concepts=2)
    net, _ = train_loop(mcfg, ds, cosine1000, TrainConfig(steps=300, batch_size=64, learning_rate=2e-3, seed=7))
    return DenoiserField(net=net, sched=cosine1000)
