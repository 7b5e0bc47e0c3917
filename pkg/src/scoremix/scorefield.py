"""Score fields: evaluators of the noise prediction ε(x_t, t | c).

A score field maps a point ``x`` at diffusion step ``t``, conditioned on
a concept label ``c``, to the predicted noise ε. The prediction is tied
to the score of the diffused conditional marginal p_t(x | c) by

    ε(x, t | c) = -√(1-ᾱ_t) · ∇_x log p_t(x | c),

so score fields are the common currency shared by analytic references,
brute-force oracles, and trained denoisers.

Two exactly verifiable implementations live here:

- ``AnalyticGaussianField``: concepts are diagonal Gaussians N(μ, s²I).
  Their diffused marginal is again Gaussian, N(√ᾱ μ, (ᾱ s² + 1-ᾱ) I),
  and ε has the closed form implemented by ``epsilon_of_gaussian``.
- ``GridOracleField``: an arbitrary base density tabulated on a regular
  grid. The diffused marginal is evaluated by direct quadrature of the
  convolution integral and ε is recovered by central finite differences
  of the log density, with no knowledge of any closed form.

The two must agree wherever both are defined, which is the backbone of
the package's verification suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, runtime_checkable

import numpy as np

from .schedule import NoiseSchedule

# ---------------------------------------------------------------------------
# Concept labels
# ---------------------------------------------------------------------------

KIND_NULL = "null"
KIND_DISCRETE = "discrete"
KIND_COORD = "coord"


@dataclass(frozen=True)
class ConceptLabel:
    """A conditioning concept: the null label, a discrete id, or a coordinate.

    Instances are immutable and hashable, so they can key conditional
    lookup tables. Use the factory methods rather than the constructor.
    """

    kind: str
    discrete_id: int | None = None
    coord: tuple[float, ...] | None = None

    @staticmethod
    def null() -> "ConceptLabel":
        return ConceptLabel(KIND_NULL)

    @staticmethod
    def discrete(concept_id: int) -> "ConceptLabel":
        if concept_id < 0:
            raise ValueError(f"discrete concept id must be >= 0, got {concept_id}")
        return ConceptLabel(KIND_DISCRETE, discrete_id=int(concept_id))

    @staticmethod
    def of_coord(values) -> "ConceptLabel":
        coord = tuple(float(v) for v in values)
        if not coord:
            raise ValueError("coordinate label needs at least one component")
        if any(not -1.0 <= v <= 1.0 for v in coord):
            raise ValueError(f"coordinate components must lie in [-1, 1], got {coord}")
        return ConceptLabel(KIND_COORD, coord=coord)

    @property
    def is_null(self) -> bool:
        return self.kind == KIND_NULL

    def sort_key(self) -> tuple:
        """Total order over labels, used for canonical term ordering."""
        if self.kind == KIND_NULL:
            return (0,)
        if self.kind == KIND_DISCRETE:
            return (1, self.discrete_id)
        return (2, self.coord)

    def __str__(self) -> str:
        if self.kind == KIND_NULL:
            return "null"
        if self.kind == KIND_DISCRETE:
            return f"d{self.discrete_id}"
        return "@" + ",".join(repr(v) for v in self.coord)


# ---------------------------------------------------------------------------
# Gaussian concepts and the analytic field
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianConceptSpec:
    """Diagonal Gaussian N(mean, diag(var)) describing one concept's density."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        var = np.asarray(self.var, dtype=np.float64)
        if mean.ndim != 1 or var.shape != mean.shape:
            raise ValueError("mean and var must be 1-D arrays of equal length")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(var)):
            raise ValueError("mean and var must be finite")
        if not np.all(var > 0.0):
            raise ValueError("all variances must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)
        mean.setflags(write=False)
        var.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GaussianConceptSpec):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.var, other.var)


def diffused_moments(spec: GaussianConceptSpec, sched: NoiseSchedule, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis mean and variance of the concept Gaussian diffused to step t."""
    sched._check_step(t, lowest=0)
    ab = sched.alpha_bar[t]
    return np.sqrt(ab) * spec.mean, ab * spec.var + (1.0 - ab)


def epsilon_of_gaussian(spec: GaussianConceptSpec, sched: NoiseSchedule, x: np.ndarray, t: int) -> np.ndarray:
    """Exact ε for a diagonal-Gaussian concept.

    The diffused marginal is N(√ᾱ_t μ, (ᾱ_t s² + 1-ᾱ_t) I), whose score is
    -(x - √ᾱ_t μ) / (ᾱ_t s² + 1-ᾱ_t) per axis, hence

        ε(x, t) = √(1-ᾱ_t) · (x - √ᾱ_t μ) / (ᾱ_t s² + 1-ᾱ_t).

    Args:
        spec: Concept Gaussian.
        sched: Noise schedule.
        x: Point(s) of shape (d,) or (n, d).
        t: Step index in [1, T].

    Returns:
        ε with the same shape as ``x``.
    """
    sched._check_step(t, lowest=1)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != spec.dim:
        raise ValueError(f"x has dimension {x.shape[-1]}, spec has {spec.dim}")
    ab = sched.alpha_bar[t]
    diffused_var = ab * spec.var + (1.0 - ab)
    return np.sqrt(1.0 - ab) * (x - np.sqrt(ab) * spec.mean) / diffused_var


@runtime_checkable
class ScoreField(Protocol):
    """Anything that evaluates ε(x, t | label) on batches of points."""

    dim: int
    sched: NoiseSchedule

    def epsilon(self, x: np.ndarray, t: int, label: ConceptLabel) -> np.ndarray: ...

    def describe(self) -> str: ...


def field_eval(field: ScoreField, x: np.ndarray, t: int, label: ConceptLabel) -> np.ndarray:
    """Evaluate a score field, validating shapes first.

    ``x`` may be a single point (d,) or a batch (n, d); the result has the
    same shape. Evaluation is a pure function of ``(field, x, t, label)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != field.dim:
        raise ValueError(f"point dimension {x.shape[-1]} does not match field dimension {field.dim}")
    return field.epsilon(x, t, label)


@dataclass(frozen=True)
class AnalyticGaussianField:
    """Score field whose conditionals are diagonal Gaussians in closed form.

    The null label evaluates the unconditional spec; every other label must
    have an entry in ``cond``.
    """

    uncond: GaussianConceptSpec
    cond: Mapping[ConceptLabel, GaussianConceptSpec]
    sched: NoiseSchedule

    def __post_init__(self):
        for label, spec in self.cond.items():
            if label.is_null:
                raise ValueError("cond map must not contain the null label; it resolves to uncond")
            if spec.dim != self.uncond.dim:
                raise ValueError(f"concept {label} has dimension {spec.dim}, unconditional has {self.uncond.dim}")

    @property
    def dim(self) -> int:
        return self.uncond.dim

    def spec_for(self, label: ConceptLabel) -> GaussianConceptSpec:
        if label.is_null:
            return self.uncond
        try:
            return self.cond[label]
        except KeyError:
            raise ValueError(f"field has no concept for label {label}") from None

    def epsilon(self, x: np.ndarray, t: int, label: ConceptLabel) -> np.ndarray:
        return epsilon_of_gaussian(self.spec_for(label), self.sched, x, t)

    def describe(self) -> str:
        return f"analytic-gaussian(d={self.dim}, concepts={len(self.cond)})"


# ---------------------------------------------------------------------------
# Brute-force grid oracle
# ---------------------------------------------------------------------------

GRID_DEFAULT_N = 512
GRID_DEFAULT_BOX = 4.0
_KERNEL_TRUNC_STDS = 6.0
_NORMALIZATION_TOL = 1e-6
_BOUNDARY_MARGIN_CELLS = 3


@dataclass(frozen=True)
class GridOracleField:
    """Brute-force ε oracle for a base density tabulated on a regular grid.

    The diffused density at step t is the convolution of the base density
    (coordinates scaled by √ᾱ_t) with N(0, (1-ᾱ_t) I). It is evaluated by
    direct spatial-domain quadrature over the grid cells,

        p_t(y) = Σ_cells density(x_c) h^d N(y; √ᾱ_t x_c, (1-ᾱ_t) I),

    with the Gaussian kernel truncated at ±6 standard deviations per axis
    (the neglected mass bounds the truncation error). ε is then recovered
    as -√(1-ᾱ_t) times the central finite difference of log p_t with step
    equal to one grid cell. Supports d in {1, 2} only; queries must stay
    at least 3 cells inside the bounding box.
    """

    density: np.ndarray  # shape (n,) for d=1 or (n, n) for d=2, nonnegative
    lo: float
    hi: float
    sched: NoiseSchedule
    _cells: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dens = np.asarray(self.density, dtype=np.float64)
        if dens.ndim not in (1, 2):
            raise ValueError("grid oracle supports only 1-D and 2-D densities")
        if dens.ndim == 2 and dens.shape[0] != dens.shape[1]:
            raise ValueError("2-D grid must be square")
        if np.any(dens < 0.0):
            raise ValueError("density must be nonnegative")
        total = dens.sum() * self.cell_size**dens.ndim
        if abs(total - 1.0) > _NORMALIZATION_TOL:
            raise ValueError(f"grid density integrates to {total}, expected 1 within {_NORMALIZATION_TOL}")
        object.__setattr__(self, "density", dens)
        dens.setflags(write=False)

        axes = [self._axis_centers()] * dens.ndim
        if dens.ndim == 1:
            cells = axes[0][:, None]
        else:
            gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
            cells = np.stack([gx.ravel(), gy.ravel()], axis=1)
        object.__setattr__(self, "_cells", cells)
        object.__setattr__(self, "_weights", dens.ravel() * self.cell_size**dens.ndim)

    @classmethod
    def from_density_fn(
        cls,
        fn: Callable[[np.ndarray], np.ndarray],
        sched: NoiseSchedule,
        lo: float = -GRID_DEFAULT_BOX,
        hi: float = GRID_DEFAULT_BOX,
        n: int = GRID_DEFAULT_N,
        dim: int = 2,
    ) -> "GridOracleField":
        """Tabulate ``fn`` (an unnormalized density over points) on the grid.

        ``fn`` receives an (m, dim) array and must return (m,) nonnegative
        values. The tabulated density is renormalized to integrate to 1.
        """
        if dim not in (1, 2):
            raise ValueError("grid oracle supports only dim 1 or 2")
        h = (hi - lo) / n
        centers = lo + (np.arange(n) + 0.5) * h
        if dim == 1:
            pts = centers[:, None]
            vals = np.asarray(fn(pts), dtype=np.float64).reshape(n)
        else:
            gx, gy = np.meshgrid(centers, centers, indexing="ij")
            pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
            vals = np.asarray(fn(pts), dtype=np.float64).reshape(n, n)
        vals = vals / (vals.sum() * h**dim)
        return cls(density=vals, lo=lo, hi=hi, sched=sched)

    @property
    def dim(self) -> int:
        return self.density.ndim

    @property
    def grid_n(self) -> int:
        return self.density.shape[0]

    @property
    def cell_size(self) -> float:
        return (self.hi - self.lo) / np.asarray(self.density).shape[0]

    def _axis_centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.grid_n) + 0.5) * self.cell_size

    def diffused_density(self, points: np.ndarray, t: int) -> np.ndarray:
        """Quadrature value of p_t at each row of ``points`` (m, d)."""
        self.sched._check_step(t, lowest=1)
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        ab = self.sched.alpha_bar[t]
        noise_var = 1.0 - ab
        sigma = np.sqrt(noise_var)
        delta = points[:, None, :] - np.sqrt(ab) * self._cells[None, :, :]
        inside = np.all(np.abs(delta) <= _KERNEL_TRUNC_STDS * sigma, axis=-1)
        sq = np.where(inside, (delta**2).sum(axis=-1), np.inf)
        kernel = np.exp(-0.5 * sq / noise_var) / (2.0 * np.pi * noise_var) ** (self.dim / 2.0)
        return kernel @ self._weights

    def epsilon(self, x: np.ndarray, t: int, label: ConceptLabel = ConceptLabel.null()) -> np.ndarray:
        """ε at ``x`` (shape (d,) or (n, d)) via finite differences of log p_t."""
        if not label.is_null:
            raise ValueError("grid oracle holds a single base density; only the null label is defined")
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.dim:
            raise ValueError(f"query dimension {pts.shape[1]} does not match grid dimension {self.dim}")
        margin = _BOUNDARY_MARGIN_CELLS * self.cell_size
        if np.any(pts <= self.lo + margin) or np.any(pts >= self.hi - margin):
            raise ValueError(f"query must stay {_BOUNDARY_MARGIN_CELLS} cells inside [{self.lo}, {self.hi}]^{self.dim}")

        h = self.cell_size
        m, d = pts.shape
        probes = np.repeat(pts, 2 * d, axis=0)
        for k in range(d):
            probes[2 * k :: 2 * d, k] += h
            probes[2 * k + 1 :: 2 * d, k] -= h
        dens = self.diffused_density(probes, t)
        if np.any(dens <= 0.0):
            raise ValueError("diffused density underflowed at a probe point; query too far from support")
        logp = np.log(dens).reshape(m, d, 2)
        grad = (logp[:, :, 0] - logp[:, :, 1]) / (2.0 * h)
        eps = -np.sqrt(1.0 - self.sched.alpha_bar[t]) * grad
        return eps[0] if single else eps

    def describe(self) -> str:
        return f"grid-oracle(d={self.dim}, n={self.grid_n}, box=[{self.lo},{self.hi}])"


def gaussian_mixture_density(means: np.ndarray, variances: np.ndarray, weights: np.ndarray | None = None):
    """Return a density callable for an equal- or given-weight diagonal Gaussian mixture.

    Convenience for building grid oracles over mixtures; means (k, d),
    variances (k, d), weights (k,) or None for equal weights.
    """
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    variances = np.atleast_2d(np.asarray(variances, dtype=np.float64))
    k = means.shape[0]
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=np.float64) / np.sum(weights)

    def fn(points: np.ndarray) -> np.ndarray:
        out = np.zeros(points.shape[0])
        for j in range(k):
            z = (points - means[j]) ** 2 / variances[j]
            norm = np.prod(2.0 * np.pi * variances[j]) ** 0.5
            out += w[j] * np.exp(-0.5 * z.sum(axis=1)) / norm
        return out

    return fn
