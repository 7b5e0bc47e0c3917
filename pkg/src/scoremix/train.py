"""Denoising training loop with simultaneous conditional/unconditional
training via null-label dropout.

Each step draws, per batch row, a uniform step t in [1, T] and a noise
vector ε ~ N(0, I), forms x_t = √ᾱ_t x_0 + √(1-ᾱ_t) ε, replaces the
row's label with the null label with probability ``label_dropout_prob``
(default 0.1), and minimizes mean ‖ε_θ(x_t, t, label) - ε‖² with Adam
(decoupled weight decay available, default 0, which makes the optimizer
plain Adam).

The whole loop is a pure function of (configs, seed): the training stream
draws, per step, the t integers, then the ε matrix, then the dropout
uniforms, in that order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import data as data_mod
from .model import DenoiserConfig, DenoiserNet, init_net, net_backward
from .rng import DOMAIN_TRAIN, stream
from .schedule import NoiseSchedule
from .scorefield import ConceptLabel


class TrainingDiverged(RuntimeError):
    """Raised when the loss or a parameter stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20000
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    label_dropout_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.label_dropout_prob <= 1.0:
            raise ValueError("label_dropout_prob must lie in [0, 1]")


def apply_label_dropout(labels: Sequence[ConceptLabel], rng: np.random.Generator, prob: float) -> list[ConceptLabel]:
    """Replace each label with the null label with probability ``prob``.

    Draws exactly ``len(labels)`` uniforms from ``rng`` (also when prob is
    0 or 1, keeping the stream layout independent of the probability).
    """
    u = rng.random(len(labels))
    null = ConceptLabel.null()
    return [null if u[i] < prob else lab for i, lab in enumerate(labels)]


def denoising_loss(
    net: DenoiserNet,
    x0: np.ndarray,
    labels: Sequence[ConceptLabel],
    sched: NoiseSchedule,
    rng: np.random.Generator,
    label_dropout_prob: float = 0.1,
):
    """One batch of the denoising objective: loss plus parameter gradients.

    Stream draw order: t ~ Uniform{1..T} per row, then ε ~ N(0, I) per
    row, then the dropout uniforms.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    n = x0.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    t = rng.integers(1, sched.T + 1, size=n)
    eps = rng.standard_normal(x0.shape)
    ab = sched.alpha_bar[t][:, None]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    used = apply_label_dropout(labels, rng, label_dropout_prob)
    return net_backward(net, x_t, t, used, eps)


def init_adam_state(params: dict[str, np.ndarray]) -> dict:
    return {
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
        "step": 0,
    }


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: dict,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> dict:
    """In-place Adam update with bias correction and decoupled weight decay.

    ``state`` must come from ``init_adam_state``; the returned state is the
    same object with its step counter advanced.
    """
    if set(grads) != set(params):
        raise ValueError("gradient keys do not match parameter keys")
    state["step"] += 1
    k = state["step"]
    c1 = 1.0 - beta1**k
    c2 = 1.0 - beta2**k
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        m = state["m"][name]
        v = state["v"][name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * ((m / c1) / (np.sqrt(v / c2) + eps) + weight_decay * p)
    return state


_FINITE_CHECK_EVERY = 100
_SANITY_MIN_STEPS = 100


def train_loop(
    model_config: DenoiserConfig,
    dataset: data_mod.Dataset,
    sched: NoiseSchedule,
    cfg: TrainConfig,
) -> tuple[DenoiserNet, np.ndarray]:
    """Train a fresh net for ``cfg.steps`` steps; returns (net, per-step losses).

    Minibatches stream from seeded epoch permutations of the dataset.
    Parameters are checked for finiteness every 100 steps; a non-finite
    loss aborts immediately. After at least 100 steps, the mean loss over
    the final 10% of steps must fall below the mean over the first 1%
    (training-signal sanity).

    Raises:
        TrainingDiverged: On non-finite loss/parameters or a flat loss curve.
    """
    x0, labels = dataset.examples()
    if model_config.data_dim != x0.shape[1]:
        raise ValueError(f"model data_dim {model_config.data_dim} does not match dataset dimension {x0.shape[1]}")
    net = init_net(model_config, cfg.seed)
    state = init_adam_state(net.params)
    rng = stream(cfg.seed, DOMAIN_TRAIN)

    losses = np.empty(cfg.steps)
    step = 0
    epoch = 0
    while step < cfg.steps:
        for bx, blabels in data_mod.minibatches(dataset, cfg.batch_size, epoch_seed=(cfg.seed, epoch)):
            if step >= cfg.steps:
                break
            loss, grads = denoising_loss(net, bx, blabels, sched, rng, cfg.label_dropout_prob)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss} at step {step}")
            adam_step(
                net.params,
                grads,
                state,
                lr=cfg.learning_rate,
                beta1=cfg.beta1,
                beta2=cfg.beta2,
                eps=cfg.adam_eps,
                weight_decay=cfg.weight_decay,
            )
            losses[step] = loss
            step += 1
            if step % _FINITE_CHECK_EVERY == 0:
                for name, p in net.params.items():
                    if not np.all(np.isfinite(p)):
                        raise TrainingDiverged(f"non-finite parameter {name} at step {step}")
        epoch += 1

    if cfg.steps >= _SANITY_MIN_STEPS:
        head = losses[: max(1, cfg.steps // 100)].mean()
        tail = losses[-max(1, cfg.steps // 10) :].mean()
        if not tail < head:
            raise TrainingDiverged(
                f"no training signal: mean loss over final 10% ({tail:.4g}) "
                f"did not drop below the first 1% ({head:.4g})"
            )
    return net, losses


def save_loss_curve(losses: np.ndarray, path: str) -> None:
    """Write the per-step loss series as a two-column CSV (step, loss)."""
    import os

    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(losses):
            fh.write(f"{i},{float(v)!r}\n")
    os.replace(tmp, path)
