"""Fully-connected denoiser ε_θ(x_t, t, c) with hand-written backprop.

The network consumes the concatenation [x_t | time features | label
embedding] and predicts the injected noise. Time is encoded with fixed
sinusoidal features; labels are embedded through either a discrete table
with a reserved null row or an affine coordinate encoder with a
dedicated null vector, so one network serves both the conditional and
the unconditional role. Hidden activations use x·sigmoid(x), chosen for
smoothness so finite-difference gradient checks are clean.

Parameters live in a flat name -> array dict (see ``param_names``), which
keeps the optimizer, the gradient checker, and the JSON checkpoint format
all straightforward.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .rng import DOMAIN_INIT, stream
from .schedule import NoiseSchedule
from .scorefield import KIND_COORD, KIND_DISCRETE, KIND_NULL, ConceptLabel

CHECKPOINT_VERSION = 1

_EMBED_INIT_STD = 0.02


class CheckpointError(ValueError):
    """Raised for unreadable, mismatched, or corrupt checkpoint files."""


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture hyperparameters.

    Exactly one conditioning mode is active: ``num_discrete_concepts > 0``
    with ``coord_dim == 0``, or the reverse.
    """

    data_dim: int
    hidden_widths: tuple[int, ...] = (128, 128)
    time_embed_dim: int = 64
    label_embed_dim: int = 64
    num_discrete_concepts: int = 0
    coord_dim: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.data_dim < 1:
            raise ValueError("data_dim must be positive")
        if any(w < 1 for w in self.hidden_widths) or not self.hidden_widths:
            raise ValueError("hidden_widths must be nonempty positive integers")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2 != 0:
            raise ValueError("time_embed_dim must be a positive even integer")
        if self.label_embed_dim < 1:
            raise ValueError("label_embed_dim must be positive")
        if (self.num_discrete_concepts > 0) == (self.coord_dim > 0):
            raise ValueError("exactly one of discrete or coordinate conditioning must be enabled")

    @property
    def input_dim(self) -> int:
        return self.data_dim + self.time_embed_dim + self.label_embed_dim

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_widths, self.data_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


@dataclass
class DenoiserNet:
    """A config plus its parameter dict. The training loop owns the only
    mutable copy; everything else treats instances as read-only."""

    config: DenoiserConfig
    params: dict[str, np.ndarray]

    def copy(self) -> "DenoiserNet":
        return DenoiserNet(self.config, {k: v.copy() for k, v in self.params.items()})


def param_names(config: DenoiserConfig) -> list[str]:
    """Canonical parameter order: layers first, then the embedding side."""
    names = []
    for i in range(len(config.hidden_widths) + 1):
        names += [f"layer{i}.W", f"layer{i}.b"]
    if config.num_discrete_concepts > 0:
        names.append("embed.table")
    else:
        names += ["coord.W", "coord.b", "coord.null"]
    return names


def param_shape(config: DenoiserConfig, name: str) -> tuple[int, ...]:
    shapes = dict()
    for i, (out_d, in_d) in enumerate(config.layer_shapes()):
        shapes[f"layer{i}.W"] = (out_d, in_d)
        shapes[f"layer{i}.b"] = (out_d,)
    if config.num_discrete_concepts > 0:
        # one extra row at index num_discrete_concepts holds the null class
        shapes["embed.table"] = (config.num_discrete_concepts + 1, config.label_embed_dim)
    else:
        shapes["coord.W"] = (config.label_embed_dim, config.coord_dim)
        shapes["coord.b"] = (config.label_embed_dim,)
        shapes["coord.null"] = (config.label_embed_dim,)
    if name not in shapes:
        raise KeyError(name)
    return shapes[name]


def init_net(config: DenoiserConfig, seed: int) -> DenoiserNet:
    """Seeded initialization: layer weights uniform in ±√(6/(fan_in+fan_out)),
    biases zero, embedding-side parameters N(0, 0.02²) except zero encoder bias."""
    rng = stream(seed, DOMAIN_INIT)
    params: dict[str, np.ndarray] = {}
    for i, (out_d, in_d) in enumerate(config.layer_shapes()):
        bound = np.sqrt(6.0 / (in_d + out_d))
        params[f"layer{i}.W"] = rng.uniform(-bound, bound, size=(out_d, in_d))
        params[f"layer{i}.b"] = np.zeros(out_d)
    if config.num_discrete_concepts > 0:
        params["embed.table"] = rng.normal(0.0, _EMBED_INIT_STD, size=param_shape(config, "embed.table"))
    else:
        params["coord.W"] = rng.normal(0.0, _EMBED_INIT_STD, size=param_shape(config, "coord.W"))
        params["coord.b"] = np.zeros(config.label_embed_dim)
        params["coord.null"] = rng.normal(0.0, _EMBED_INIT_STD, size=(config.label_embed_dim,))
    return DenoiserNet(config, params)


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


def embed_time(t, dim: int) -> np.ndarray:
    """Sinusoidal step features: interleaved (sin(t ω_k), cos(t ω_k)) pairs.

    Frequencies ω_k are geometrically spaced from 1 down to 1/10000 over
    the ``dim/2`` pairs, so every component lies in [-1, 1]. ``t`` may be
    a scalar or an integer array; the output gains a trailing axis of
    length ``dim``.
    """
    if dim < 2 or dim % 2 != 0:
        raise ValueError("time embedding dimension must be a positive even integer")
    half = dim // 2
    if half == 1:
        freqs = np.array([1.0])
    else:
        freqs = 10.0 ** (-4.0 * np.arange(half) / (half - 1))
    t = np.asarray(t, dtype=np.float64)
    angles = t[..., None] * freqs
    out = np.empty(t.shape + (dim,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def _label_rows(config: DenoiserConfig, labels: Sequence[ConceptLabel]):
    """Split a label batch into the index/coordinate form the math needs."""
    if config.num_discrete_concepts > 0:
        ids = np.empty(len(labels), dtype=np.int64)
        for i, lab in enumerate(labels):
            if lab.kind == KIND_NULL:
                ids[i] = config.num_discrete_concepts
            elif lab.kind == KIND_DISCRETE:
                if not 0 <= lab.discrete_id < config.num_discrete_concepts:
                    raise ValueError(f"discrete id {lab.discrete_id} out of range [0, {config.num_discrete_concepts})")
                ids[i] = lab.discrete_id
            else:
                raise ValueError("this net conditions on discrete ids, not coordinates")
        return ids
    coords = np.zeros((len(labels), config.coord_dim))
    null_mask = np.zeros(len(labels), dtype=bool)
    for i, lab in enumerate(labels):
        if lab.kind == KIND_NULL:
            null_mask[i] = True
        elif lab.kind == KIND_COORD:
            if len(lab.coord) != config.coord_dim:
                raise ValueError(f"coordinate has {len(lab.coord)} components, net expects {config.coord_dim}")
            coords[i] = lab.coord
        else:
            raise ValueError("this net conditions on coordinates, not discrete ids")
    return coords, null_mask


def embed_label(net: DenoiserNet, label: ConceptLabel) -> np.ndarray:
    """Embedding of a single label: table row, affine coordinate map, or null vector."""
    return _embed_labels(net, [label])[0]


def _embed_labels(net: DenoiserNet, labels: Sequence[ConceptLabel]) -> np.ndarray:
    cfg = net.config
    if cfg.num_discrete_concepts > 0:
        ids = _label_rows(cfg, labels)
        return net.params["embed.table"][ids]
    coords, null_mask = _label_rows(cfg, labels)
    out = coords @ net.params["coord.W"].T + net.params["coord.b"]
    out[null_mask] = net.params["coord.null"]
    return out


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _silu(z: np.ndarray) -> np.ndarray:
    s = expit(z)
    return z * s


def _dsilu(z: np.ndarray) -> np.ndarray:
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


def _broadcast_labels(labels, n: int) -> Sequence[ConceptLabel]:
    if isinstance(labels, ConceptLabel):
        return [labels] * n
    if len(labels) != n:
        raise ValueError(f"got {len(labels)} labels for a batch of {n}")
    return labels


def _forward_cached(net: DenoiserNet, x_t: np.ndarray, t, labels):
    cfg = net.config
    x_t = np.asarray(x_t, dtype=np.float64)
    single = x_t.ndim == 1
    x2 = np.atleast_2d(x_t)
    if x2.shape[1] != cfg.data_dim:
        raise ValueError(f"x has dimension {x2.shape[1]}, net expects {cfg.data_dim}")
    if not np.all(np.isfinite(x2)):
        raise ValueError("non-finite network input")
    n = x2.shape[0]
    t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))

    te = embed_time(t_arr, cfg.time_embed_dim)
    if isinstance(labels, ConceptLabel):
        # constant-label batch (the sampling hot path): embed once, tile
        le = np.broadcast_to(embed_label(net, labels), (n, cfg.label_embed_dim))
    else:
        labels = _broadcast_labels(labels, n)
        le = _embed_labels(net, labels)
    a = np.concatenate([x2, te, le], axis=1)

    pre: list[np.ndarray] = []
    acts: list[np.ndarray] = [a]
    n_layers = len(cfg.hidden_widths) + 1
    for i in range(n_layers):
        z = acts[-1] @ net.params[f"layer{i}.W"].T + net.params[f"layer{i}.b"]
        pre.append(z)
        acts.append(_silu(z) if i < n_layers - 1 else z)
    cache = {"pre": pre, "acts": acts, "labels": labels, "single": single}
    return acts[-1], cache


def net_forward(net: DenoiserNet, x_t: np.ndarray, t, labels) -> np.ndarray:
    """Predict ε for ``x_t`` of shape (d,) or (n, d).

    ``t`` is a step index (scalar or length-n array) and ``labels`` is a
    single ``ConceptLabel`` applied to the whole batch or one per row.
    Deterministic in all arguments.
    """
    out, cache = _forward_cached(net, x_t, t, labels)
    return out[0] if cache["single"] else out


def net_backward(net: DenoiserNet, x_t: np.ndarray, t, labels, target: np.ndarray):
    """Loss and parameter gradients of the batch-mean squared error.

    The loss is mean_rows ‖net(x_t, t, label) - target‖² (summed over data
    axes, averaged over rows), matching the denoising objective. Returns
    ``(loss, grads)`` with ``grads`` keyed like ``net.params``.
    """
    cfg = net.config
    out, cache = _forward_cached(net, x_t, t, labels)
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if target.shape != out.shape:
        raise ValueError(f"target shape {target.shape} does not match prediction shape {out.shape}")
    n = out.shape[0]
    if n == 0:
        raise ValueError("empty batch")

    diff = out - target
    loss = float((diff**2).sum() / n)
    grads = {k: np.zeros_like(v) for k, v in net.params.items()}

    delta = 2.0 * diff / n
    n_layers = len(cfg.hidden_widths) + 1
    for i in range(n_layers - 1, -1, -1):
        a_in = cache["acts"][i]
        grads[f"layer{i}.W"] += delta.T @ a_in
        grads[f"layer{i}.b"] += delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.params[f"layer{i}.W"]) * _dsilu(cache["pre"][i - 1])

    # gradient w.r.t. the input concatenation; only the label block carries
    # parameters (time features are fixed functions of t)
    d_input = delta @ net.params["layer0.W"]
    d_le = d_input[:, cfg.data_dim + cfg.time_embed_dim :]
    labels_seq = _broadcast_labels(cache["labels"], n)
    if cfg.num_discrete_concepts > 0:
        ids = _label_rows(cfg, labels_seq)
        np.add.at(grads["embed.table"], ids, d_le)
    else:
        coords, null_mask = _label_rows(cfg, labels_seq)
        live = ~null_mask
        grads["coord.W"] += d_le[live].T @ coords[live]
        grads["coord.b"] += d_le[live].sum(axis=0)
        grads["coord.null"] += d_le[null_mask].sum(axis=0)
    return loss, grads


# ---------------------------------------------------------------------------
# Score-field adapter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DenoiserField:
    """Wraps a trained net as a ScoreField over its training schedule."""

    net: DenoiserNet
    sched: NoiseSchedule
    name: str = "denoiser"

    @property
    def dim(self) -> int:
        return self.net.config.data_dim

    def epsilon(self, x: np.ndarray, t: int, label: ConceptLabel) -> np.ndarray:
        self.sched._check_step(t, lowest=1)
        return net_forward(self.net, x, t, label)

    def describe(self) -> str:
        return f"{self.name}(d={self.dim}, sched={self.sched.kind}/{self.sched.T})"


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(net: DenoiserNet, sched: NoiseSchedule, path: str, meta: dict | None = None) -> None:
    """Write a versioned JSON checkpoint (atomic replace; exact float round-trip)."""
    cfg = net.config
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "data_dim": cfg.data_dim,
            "hidden_widths": list(cfg.hidden_widths),
            "time_embed_dim": cfg.time_embed_dim,
            "label_embed_dim": cfg.label_embed_dim,
            "num_discrete_concepts": cfg.num_discrete_concepts,
            "coord_dim": cfg.coord_dim,
        },
        "schedule": {"kind": sched.kind, "T": sched.T},
        "params": [
            {"name": name, "shape": list(net.params[name].shape), "data": net.params[name].ravel().tolist()}
            for name in param_names(cfg)
        ],
        "meta": dict(meta or {}),
    }
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_checkpoint(path: str, expect_schedule: tuple[str, int] | None = None) -> tuple[DenoiserNet, dict]:
    """Load a checkpoint, returning ``(net, info)``.

    ``info`` carries the stored schedule and metadata. If
    ``expect_schedule`` = (kind, T) is given, a stored schedule that
    differs is rejected.

    Raises:
        CheckpointError: On unreadable JSON, version or schedule mismatch,
            or parameter names/shapes inconsistent with the stored config.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version mismatch: expected {CHECKPOINT_VERSION}, found {doc.get('version')!r}")
    try:
        cfg = DenoiserConfig(
            data_dim=doc["config"]["data_dim"],
            hidden_widths=tuple(doc["config"]["hidden_widths"]),
            time_embed_dim=doc["config"]["time_embed_dim"],
            label_embed_dim=doc["config"]["label_embed_dim"],
            num_discrete_concepts=doc["config"]["num_discrete_concepts"],
            coord_dim=doc["config"]["coord_dim"],
        )
        stored = [(p["name"], tuple(p["shape"]), p["data"]) for p in doc["params"]]
        sched_info = (doc["schedule"]["kind"], int(doc["schedule"]["T"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc

    if expect_schedule is not None and tuple(expect_schedule) != sched_info:
        raise CheckpointError(
            f"schedule mismatch: checkpoint was trained with {sched_info}, run is configured for {tuple(expect_schedule)}"
        )
    if [s[0] for s in stored] != param_names(cfg):
        raise CheckpointError("checkpoint parameter names do not match its config")
    params = {}
    for name, shape, data in stored:
        if shape != param_shape(cfg, name):
            raise CheckpointError(f"parameter {name} has shape {shape}, config implies {param_shape(cfg, name)}")
        arr = np.asarray(data, dtype=np.float64)
        if arr.size != int(np.prod(shape)):
            raise CheckpointError(f"parameter {name} has {arr.size} values, shape {shape} needs {int(np.prod(shape))}")
        params[name] = arr.reshape(shape)
    info = {"schedule": sched_info, "meta": doc.get("meta", {})}
    return DenoiserNet(cfg, params), info
