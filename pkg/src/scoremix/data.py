"""Seeded synthetic concept datasets.

Two families:

- ``points2d``: each example is a 2-D point drawn from one of a fixed set
  of diagonal Gaussian concepts, labeled with that concept's discrete id.
  Analytic score fields over the same concepts make every downstream
  quantity exactly checkable.
- ``blobs``: each example is a small grayscale scene (H×W grid, values in
  [-1, 1]) containing 1..5 Gaussian-intensity blobs at uniformly placed
  positions with a minimum separation, labeled with the coordinate of
  ONE uniformly chosen blob. Multi-blob scenes carrying a single
  positional label mirror the position-conditioned scene protocol where
  test-time conjunctions of several positions are genuinely out of
  distribution.

Generation is a pure function of (config, seed). points2d draws from a
single stream (concept choices first, then all point offsets); blobs
uses one substream per scene so scenes are independent of each other's
rejection-sampling history.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .rng import DOMAIN_DATA, DOMAIN_SHUFFLE, stream
from .scorefield import ConceptLabel, GaussianConceptSpec

DATASET_KINDS = ("points2d", "blobs")

BLOB_DOMAIN = (-1.0, 1.0)
_BLOBS_MAGIC = b"SMBLOBS1"


@dataclass(frozen=True)
class DatasetConfig:
    """Configuration for either dataset family.

    points2d uses ``concepts``; blobs uses the grid fields. ``blob_std``
    and the minimum separation (2·blob_std) are in grid-cell units.
    """

    kind: str
    n: int
    seed: int
    concepts: tuple[GaussianConceptSpec, ...] = ()
    grid_h: int = 16
    grid_w: int = 16
    blob_std: float = 1.0
    objects_min: int = 1
    objects_max: int = 5
    retry_budget: int = 100

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; expected one of {DATASET_KINDS}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "points2d":
            if not self.concepts:
                raise ValueError("points2d needs at least one concept")
            if any(s.dim != 2 for s in self.concepts):
                raise ValueError("points2d concepts must be 2-dimensional")
        else:
            if self.grid_h < 8 or self.grid_w < 8:
                raise ValueError("blob grids must be at least 8x8")
            if self.blob_std <= 0.0:
                raise ValueError("blob_std must be positive")
            if not 1 <= self.objects_min <= self.objects_max:
                raise ValueError("need 1 <= objects_min <= objects_max")

    @property
    def dim(self) -> int:
        return 2 if self.kind == "points2d" else self.grid_h * self.grid_w


@dataclass
class Dataset:
    """Generated examples: x0 rows plus one ConceptLabel per row.

    For blobs, ``scene_positions`` keeps every blob coordinate of each
    scene (ground truth beyond the single released label); verifier
    training and consistency checks need it.
    """

    config: DatasetConfig
    x0: np.ndarray
    labels: list[ConceptLabel]
    scene_positions: list[np.ndarray] = field(default_factory=list)

    def examples(self) -> tuple[np.ndarray, list[ConceptLabel]]:
        return self.x0, self.labels

    def __len__(self) -> int:
        return self.x0.shape[0]


def cell_centers(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Centers of the raster cells over the blob domain.

    Row r (of h) covers the y axis, column c (of w) the x axis; the flat
    pixel index is r*w + c. Returns (y_centers, x_centers).
    """
    lo, hi = BLOB_DOMAIN
    ys = lo + (np.arange(h) + 0.5) * (hi - lo) / h
    xs = lo + (np.arange(w) + 0.5) * (hi - lo) / w
    return ys, xs


def rasterize_blobs(positions: np.ndarray, h: int, w: int, blob_std: float) -> np.ndarray:
    """Render blob centers to a flat (h*w,) intensity image in [0, 1].

    Each blob contributes exp(-‖cell - pos‖² / (2σ²)) with σ = blob_std
    grid cells; contributions are summed and clipped to 1. A blob whose
    center coincides with a cell center therefore lights that cell to
    exactly 1.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    ys, xs = cell_centers(h, w)
    lo, hi = BLOB_DOMAIN
    sigma = blob_std * (hi - lo) / w
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    img = np.zeros((h, w))
    for px, py in positions:
        img += np.exp(-((gx - px) ** 2 + (gy - py) ** 2) / (2.0 * sigma**2))
    return np.clip(img, 0.0, 1.0).ravel()


def intensity_to_values(intensity: np.ndarray) -> np.ndarray:
    """Affine map of raster intensities [0, 1] to model values [-1, 1]."""
    return 2.0 * intensity - 1.0


def gen_points2d(config: DatasetConfig) -> Dataset:
    """Draw n points: concept index uniform, then that concept's Gaussian."""
    if config.kind != "points2d":
        raise ValueError("config is not a points2d config")
    rng = stream(config.seed, DOMAIN_DATA)
    k = len(config.concepts)
    ids = rng.integers(0, k, size=config.n)
    offsets = rng.standard_normal((config.n, 2))
    means = np.stack([s.mean for s in config.concepts])
    stds = np.sqrt(np.stack([s.var for s in config.concepts]))
    x0 = means[ids] + stds[ids] * offsets
    labels = [ConceptLabel.discrete(int(i)) for i in ids]
    return Dataset(config=config, x0=x0, labels=labels)


def _place_blobs(rng: np.random.Generator, k: int, min_sep: float, retry_budget: int) -> np.ndarray:
    lo, hi = BLOB_DOMAIN
    positions: list[np.ndarray] = []
    for _ in range(k):
        for attempt in range(retry_budget + 1):
            cand = rng.uniform(lo, hi, size=2)
            if all(np.linalg.norm(cand - p) >= min_sep for p in positions):
                positions.append(cand)
                break
        else:
            raise RuntimeError(
                f"could not place {k} blobs with separation {min_sep:.3f} within {retry_budget} retries"
            )
    return np.array(positions)


def gen_blobs(config: DatasetConfig) -> Dataset:
    """Generate n blob scenes; scene i uses data substream i.

    Per-scene draw order: the object count k, then the positions (with
    rejection for the separation constraint), then the released label's
    blob index.
    """
    if config.kind != "blobs":
        raise ValueError("config is not a blobs config")
    lo, hi = BLOB_DOMAIN
    min_sep = 2.0 * config.blob_std * (hi - lo) / config.grid_w
    x0 = np.empty((config.n, config.dim))
    labels: list[ConceptLabel] = []
    scenes: list[np.ndarray] = []
    for i in range(config.n):
        rng = stream(config.seed, DOMAIN_DATA, index=i)
        k = int(rng.integers(config.objects_min, config.objects_max + 1))
        positions = _place_blobs(rng, k, min_sep, config.retry_budget)
        intensity = rasterize_blobs(positions, config.grid_h, config.grid_w, config.blob_std)
        x0[i] = intensity_to_values(intensity)
        pick = int(rng.integers(0, k))
        labels.append(ConceptLabel.of_coord(positions[pick]))
        scenes.append(positions)
    return Dataset(config=config, x0=x0, labels=labels, scene_positions=scenes)


def gen_dataset(config: DatasetConfig) -> Dataset:
    return gen_points2d(config) if config.kind == "points2d" else gen_blobs(config)


def minibatches(
    dataset: Dataset, batch_size: int, epoch_seed: tuple[int, int]
) -> Iterator[tuple[np.ndarray, list[ConceptLabel]]]:
    """Seeded epoch permutation, yielded in batches; the short final batch
    is kept. ``epoch_seed`` = (seed, epoch index) picks the shuffle stream."""
    n = len(dataset)
    if batch_size < 1 or batch_size > n:
        raise ValueError(f"batch_size must lie in [1, {n}], got {batch_size}")
    seed, epoch = epoch_seed
    perm = stream(seed, DOMAIN_SHUFFLE, index=epoch).permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start : start + batch_size]
        yield dataset.x0[idx], [dataset.labels[j] for j in idx]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_points_csv(dataset: Dataset, path: str) -> None:
    """points2d rows as ``x,y,label_id`` (exact float round-trip via repr)."""
    if dataset.config.kind != "points2d":
        raise ValueError("dataset is not points2d")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write("x,y,label_id\n")
        for row, lab in zip(dataset.x0, dataset.labels):
            fh.write(f"{float(row[0])!r},{float(row[1])!r},{lab.discrete_id}\n")
    os.replace(tmp, path)


def load_points_csv(path: str) -> tuple[np.ndarray, list[ConceptLabel]]:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "x,y,label_id":
            raise ValueError(f"unexpected points2d CSV header {header!r}")
        xs, labels = [], []
        for line in fh:
            a, b, c = line.strip().split(",")
            xs.append((float(a), float(b)))
            labels.append(ConceptLabel.discrete(int(c)))
    return np.array(xs, dtype=np.float64), labels


def save_blobs(dataset: Dataset, path: str) -> None:
    """Blob raster container.

    Byte layout: 8-byte magic ``SMBLOBS1``; little-endian uint32 header
    length; UTF-8 JSON header {n, height, width, dtype:"<f8", labels
    [[x,y]...], scene_positions [[[x,y]...]...]}; then the n·h·w pixel
    values, row-major float64 little-endian, scene by scene.
    """
    if dataset.config.kind != "blobs":
        raise ValueError("dataset is not blobs")
    header = {
        "n": len(dataset),
        "height": dataset.config.grid_h,
        "width": dataset.config.grid_w,
        "dtype": "<f8",
        "labels": [list(lab.coord) for lab in dataset.labels],
        "scene_positions": [p.tolist() for p in dataset.scene_positions],
    }
    blob = json.dumps(header).encode("utf-8")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(_BLOBS_MAGIC)
        fh.write(np.uint32(len(blob)).astype("<u4").tobytes())
        fh.write(blob)
        fh.write(dataset.x0.astype("<f8").tobytes())
    os.replace(tmp, path)


def load_blobs(path: str) -> tuple[np.ndarray, list[ConceptLabel], list[np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _BLOBS_MAGIC:
            raise ValueError(f"not a blob raster file (magic {magic!r})")
        (hlen,) = np.frombuffer(fh.read(4), dtype="<u4")
        header = json.loads(fh.read(int(hlen)).decode("utf-8"))
        count = header["n"] * header["height"] * header["width"]
        x0 = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(header["n"], -1).copy()
    labels = [ConceptLabel.of_coord(c) for c in header["labels"]]
    scenes = [np.array(p, dtype=np.float64) for p in header["scene_positions"]]
    return x0, labels, scenes, header
