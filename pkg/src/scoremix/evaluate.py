"""Generation-quality metrics.

Concept-satisfaction accuracy follows the binary-verifier protocol: a
verifier decides, per sample and concept, whether the sample exhibits
the concept; a sample counts as correct only if every requested concept
is satisfied (and every negated concept is not). Verifiers come in an
analytic flavor (closed-form membership rules on raw features) and a
learned flavor (logistic regression on raw features, refused unless its
held-out accuracy clears 0.95).

Energy distance is the two-sample statistic

    ED(A, B) = 2 E‖a - b‖ - E‖a - a'‖ - E‖b - b'‖,

estimated with all-pairs (plug-in) averages, so identical multisets give
exactly 0 and the estimate is symmetric in its arguments. It is zero in
population iff the distributions coincide, which makes it a desk-scale
stand-in for feature-space distribution metrics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from . import data as data_mod
from .compose import Term
from .rng import DOMAIN_SPLIT, stream
from .scorefield import ConceptLabel, GaussianConceptSpec

VERIFIER_KINDS = ("analytic", "learned")

MIN_LEARNED_ACCURACY = 0.95
DEFAULT_BLOB_RADIUS_CELLS = 1.5
DEFAULT_BLOB_TAU = 0.5  # pre-mapping intensity threshold; 0.0 after [-1,1] mapping


class UnderpoweredVerifier(RuntimeError):
    """Raised when a learned verifier cannot reach the required accuracy."""


# ---------------------------------------------------------------------------
# Verifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointsVerifier:
    """Analytic points2d verifier: posterior responsibility above 0.5.

    With equal priors over the configured concepts, concept c is satisfied
    at x iff N(x; μ_c, s_c²) / Σ_k N(x; μ_k, s_k²) > 0.5.
    """

    concepts: tuple[GaussianConceptSpec, ...]
    kind: str = "analytic"

    def satisfied(self, samples: np.ndarray, concept: ConceptLabel) -> np.ndarray:
        if concept.kind != "discrete" or not 0 <= concept.discrete_id < len(self.concepts):
            raise ValueError(f"verifier has no concept for label {concept}")
        samples = np.atleast_2d(samples)
        dens = np.stack([_gaussian_pdf(samples, s) for s in self.concepts], axis=1)
        resp = dens[:, concept.discrete_id] / dens.sum(axis=1)
        return resp > 0.5


@dataclass(frozen=True)
class BlobsVerifier:
    """Analytic blobs verifier: bright pixel near the queried coordinate.

    Satisfied iff the maximum intensity over cells within
    ``radius_cells`` of the coordinate is at least ``tau`` (thresholds are
    in pre-mapping [0, 1] units; samples are in [-1, 1] model units).
    """

    grid_h: int
    grid_w: int
    radius_cells: float = DEFAULT_BLOB_RADIUS_CELLS
    tau: float = DEFAULT_BLOB_TAU
    kind: str = "analytic"

    def _cells_near(self, coord: tuple[float, float]) -> np.ndarray:
        ys, xs = data_mod.cell_centers(self.grid_h, self.grid_w)
        lo, hi = data_mod.BLOB_DOMAIN
        radius = self.radius_cells * (hi - lo) / self.grid_w
        gy, gx = np.meshgrid(ys, xs, indexing="ij")
        dist = np.sqrt((gx - coord[0]) ** 2 + (gy - coord[1]) ** 2)
        idx = np.flatnonzero(dist.ravel() <= radius)
        if idx.size == 0:
            raise ValueError(f"detection radius {self.radius_cells} cells covers no cell at {coord}")
        return idx

    def satisfied(self, samples: np.ndarray, concept: ConceptLabel) -> np.ndarray:
        if concept.kind != "coord" or len(concept.coord) != 2:
            raise ValueError(f"blob verifier needs 2-D coordinate labels, got {concept}")
        samples = np.atleast_2d(samples)
        if samples.shape[1] != self.grid_h * self.grid_w:
            raise ValueError("sample dimension does not match the verifier grid")
        idx = self._cells_near(concept.coord)
        intensity = (samples[:, idx] + 1.0) / 2.0  # back to pre-mapping units
        return intensity.max(axis=1) >= self.tau


@dataclass(frozen=True)
class LearnedVerifier:
    """Logistic-regression verifier for one concept; satisfied iff p >= 0.5."""

    concept: ConceptLabel
    weights: np.ndarray
    bias: float
    held_out_accuracy: float
    kind: str = "learned"

    def satisfied(self, samples: np.ndarray, concept: ConceptLabel) -> np.ndarray:
        if concept != self.concept:
            raise ValueError(f"learned verifier was trained for {self.concept}, asked about {concept}")
        samples = np.atleast_2d(samples)
        return samples @ self.weights + self.bias >= 0.0


def _gaussian_pdf(x: np.ndarray, spec: GaussianConceptSpec) -> np.ndarray:
    z = (x - spec.mean) ** 2 / spec.var
    norm = np.prod(2.0 * np.pi * spec.var) ** 0.5
    return np.exp(-0.5 * z.sum(axis=1)) / norm


def concept_satisfied(sample: np.ndarray, concept: ConceptLabel, verifier) -> bool:
    """Single-sample convenience over a verifier's batched ``satisfied``."""
    return bool(verifier.satisfied(np.atleast_2d(sample), concept)[0])


def accuracy(samples: np.ndarray, terms: Sequence[Term], verifier) -> float:
    """Fraction of samples satisfying every term.

    Positive terms must be satisfied; negative terms must NOT be. Invariant
    under sample order and duplication.
    """
    terms = tuple(terms)
    if not terms:
        raise ValueError("accuracy needs at least one concept term")
    samples = np.atleast_2d(samples)
    if samples.shape[0] == 0:
        raise ValueError("empty sample batch")
    ok = np.ones(samples.shape[0], dtype=bool)
    for tm in terms:
        sat = verifier.satisfied(samples, tm.label)
        ok &= sat if tm.polarity == "positive" else ~sat
    return float(ok.mean())


def per_concept_satisfaction(samples: np.ndarray, terms: Sequence[Term], verifier) -> list[dict]:
    """Per-term satisfaction rates (before the all-of-them conjunction)."""
    samples = np.atleast_2d(samples)
    out = []
    for tm in terms:
        rate = float(verifier.satisfied(samples, tm.label).mean())
        out.append({"label": str(tm.label), "polarity": tm.polarity, "satisfied_rate": rate})
    return out


# ---------------------------------------------------------------------------
# Two-sample statistic
# ---------------------------------------------------------------------------


def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in energy distance 2 E‖a-b‖ - E‖a-a'‖ - E‖b-b'‖.

    All three expectations are all-pairs means (diagonal included in the
    within-set terms), so ED(A, A) is exactly 0 and ED(A, B) = ED(B, A).
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("energy distance needs at least 2 samples per set")
    if a.shape[1] != b.shape[1]:
        raise ValueError("sample sets must share a dimension")
    ab = cdist(a, b).mean()
    aa = cdist(a, a).mean()
    bb = cdist(b, b).mean()
    return float(2.0 * ab - aa - bb)


# ---------------------------------------------------------------------------
# Field fidelity
# ---------------------------------------------------------------------------


def probe_grid(lo: float, hi: float, per_axis: int = 5) -> np.ndarray:
    """Cartesian 2-D probe grid with ``per_axis`` points per axis."""
    axis = np.linspace(lo, hi, per_axis)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def field_rmse(field_a, field_b, probes: np.ndarray, t: int, label: ConceptLabel = ConceptLabel.null()) -> float:
    """Root-mean-square ε disagreement over probe points:
    sqrt(mean over probes of ‖ε_a - ε_b‖²)."""
    probes = np.atleast_2d(probes)
    ea = field_a.epsilon(probes, t, label)
    eb = field_b.epsilon(probes, t, label)
    return float(np.sqrt(np.mean(((ea - eb) ** 2).sum(axis=1))))


# ---------------------------------------------------------------------------
# Learned verifier training
# ---------------------------------------------------------------------------


# mean distance from a uniform point in a unit cell to the cell center
_CELL_CENTER_OFFSET = (np.sqrt(2.0) + np.log(1.0 + np.sqrt(2.0))) / 6.0  # ~0.3826


def effective_object_radius_cells(radius_cells: float, blob_std: float, tau: float) -> float:
    """Object-to-query distance (in cells) at which the analytic blob rule fires.

    A blob lights cells out to blob_std·√(2 ln(1/τ)) above τ and the rule
    scans cells within ``radius_cells`` of the query, giving a continuous
    detection radius of their sum; scanning discrete cell centers loses
    the mean point-to-center offset. Ground-truth targets built with this
    radius make the learned and analytic verifiers answer the same
    "object near p" question.
    """
    reach = blob_std * np.sqrt(max(0.0, 2.0 * np.log(1.0 / tau))) if tau < 1.0 else 0.0
    return max(radius_cells, radius_cells + reach - _CELL_CENTER_OFFSET)


def _binary_targets(dataset: data_mod.Dataset, concept: ConceptLabel, radius_cells: float, tau: float) -> np.ndarray:
    if dataset.config.kind == "points2d":
        if concept.kind != "discrete":
            raise ValueError("points2d verifiers are trained per discrete concept id")
        return np.array([lab.discrete_id == concept.discrete_id for lab in dataset.labels], dtype=np.float64)
    if concept.kind != "coord":
        raise ValueError("blob verifiers are trained per coordinate concept")
    lo, hi = data_mod.BLOB_DOMAIN
    cells = effective_object_radius_cells(radius_cells, dataset.config.blob_std, tau)
    radius = cells * (hi - lo) / dataset.config.grid_w
    target = np.asarray(concept.coord)
    return np.array(
        [bool(np.any(np.linalg.norm(p - target, axis=1) <= radius)) for p in dataset.scene_positions],
        dtype=np.float64,
    )


def train_binary_classifier(
    dataset: data_mod.Dataset,
    concept: ConceptLabel,
    seed: int,
    radius_cells: float = DEFAULT_BLOB_RADIUS_CELLS,
    tau: float = DEFAULT_BLOB_TAU,
) -> LearnedVerifier:
    """Fit a logistic-regression verifier for one concept on raw features.

    Ground-truth targets for blob concepts mark scenes with an object
    within the analytic rule's effective radius (so the two verifier
    flavors are consistent). The dataset is split 80/20 with a seeded
    shuffle; the model is trained to convergence (L-BFGS on the convex
    log-loss with a tiny L2 term) and the held-out accuracy must reach
    0.95 or the verifier is refused.

    Raises:
        UnderpoweredVerifier: If held-out accuracy is below 0.95.
    """
    x = dataset.x0
    y = _binary_targets(dataset, concept, radius_cells, tau)
    n = x.shape[0]
    if n < 10 or len(np.unique(y)) < 2:
        raise UnderpoweredVerifier("need at least 10 examples with both classes present")
    perm = stream(seed, DOMAIN_SPLIT).permutation(n)
    cut = int(0.8 * n)
    tr, te = perm[:cut], perm[cut:]

    d = x.shape[1]
    l2 = 1e-6

    def loss_grad(theta):
        w, b = theta[:d], theta[d]
        z = x[tr] @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        eps = 1e-12
        nll = -np.mean(y[tr] * np.log(p + eps) + (1 - y[tr]) * np.log(1 - p + eps)) + 0.5 * l2 * w @ w
        r = (p - y[tr]) / len(tr)
        return nll, np.concatenate([x[tr].T @ r + l2 * w, [r.sum()]])

    res = minimize(loss_grad, np.zeros(d + 1), jac=True, method="L-BFGS-B", options={"maxiter": 2000})
    w, b = res.x[:d], float(res.x[d])
    acc = float(np.mean((x[te] @ w + b >= 0.0) == (y[te] > 0.5)))
    if acc < MIN_LEARNED_ACCURACY:
        raise UnderpoweredVerifier(
            f"learned verifier reached held-out accuracy {acc:.3f} < {MIN_LEARNED_ACCURACY} for {concept}"
        )
    return LearnedVerifier(concept=concept, weights=w, bias=b, held_out_accuracy=acc)


def metrics_report(
    samples: np.ndarray,
    terms: Sequence[Term],
    verifier,
    reference: np.ndarray | None = None,
) -> dict:
    """Bundle of the standard metrics, shaped for the JSON artifact."""
    report = {
        "accuracy": accuracy(samples, terms, verifier),
        "energy_distance": None if reference is None else energy_distance(samples, reference),
        "n": int(np.atleast_2d(samples).shape[0]),
        "verifier_kind": verifier.kind,
        "per_concept_satisfaction": per_concept_satisfaction(samples, terms, verifier),
    }
    return report
