"""Diffusion noise schedules.

A schedule fixes, for T discrete steps, the per-step variance increments
β_t of the forward corruption process

    q(x_t | x_{t-1}) = N(√(1-β_t) x_{t-1}, β_t I),

together with the derived coefficients α_t = 1 - β_t and the cumulative
signal retention ᾱ_t = Π_{u≤t} α_u (with ᾱ_0 = 1), which give the closed
form of the forward marginal

    x_t = √ᾱ_t x_0 + √(1-ᾱ_t) ε,   ε ~ N(0, I).

Two constructions are provided:

- ``cosine``: ᾱ_t = f(t/T)/f(0) with f(u) = cos²(((u + s)/(1 + s))·π/2),
  offset s = 0.008, and β_t clipped to at most 0.999.
- ``linear``: β_t interpolated linearly from 1e-4 to 0.02.

Steps are 1-indexed: β_t and α_t are defined for t = 1..T, ᾱ_t for
t = 0..T. The t = 1 posterior standard deviation under the ``beta_tilde``
variant is exactly 0 because 1 - ᾱ_0 = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCHEDULE_KINDS = ("linear", "cosine")
SIGMA_VARIANTS = ("beta", "beta_tilde")

_COSINE_OFFSET = 0.008
_BETA_CLIP = 0.999
_LINEAR_BETA_START = 1e-4
_LINEAR_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable table of per-step diffusion coefficients.

    Attributes:
        kind: Schedule construction, ``"linear"`` or ``"cosine"``.
        T: Number of diffusion steps.
        beta: Array of length T+1; ``beta[t]`` is β_t for t = 1..T and
            ``beta[0]`` is NaN (steps are 1-indexed, slot 0 is unused).
        alpha: Array of length T+1; ``alpha[t]`` = 1 - β_t, slot 0 NaN.
        alpha_bar: Array of length T+1; ``alpha_bar[t]`` = ᾱ_t with
            ``alpha_bar[0]`` = 1 exactly.
    """

    kind: str
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        for arr in (self.beta, self.alpha, self.alpha_bar):
            arr.setflags(write=False)

    def _check_step(self, t: int, lowest: int) -> None:
        if not lowest <= t <= self.T:
            raise ValueError(f"step index {t} outside [{lowest}, {self.T}]")


def build_schedule(kind: str, T: int) -> NoiseSchedule:
    """Construct a noise schedule.

    Args:
        kind: ``"linear"`` or ``"cosine"``.
        T: Step count, at least 1.

    Returns:
        A validated ``NoiseSchedule``.

    Raises:
        ValueError: If ``kind`` is unknown or ``T`` < 1.
    """
    if kind not in SCHEDULE_KINDS:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")

    if kind == "cosine":
        grid = np.arange(T + 1, dtype=np.float64)
        f = np.cos(((grid / T) + _COSINE_OFFSET) / (1.0 + _COSINE_OFFSET) * np.pi / 2.0) ** 2
        ratio = f[1:] / f[:-1]
        beta_steps = np.clip(1.0 - ratio, None, _BETA_CLIP)
    else:
        beta_steps = np.linspace(_LINEAR_BETA_START, _LINEAR_BETA_END, T)

    alpha_steps = 1.0 - beta_steps
    # alpha_bar is recomputed as the running product of alpha so the
    # recurrence alpha_bar[t] = alpha_bar[t-1] * alpha[t] holds exactly
    # even where beta was clipped.
    alpha_bar = np.concatenate([[1.0], np.cumprod(alpha_steps)])
    beta = np.concatenate([[np.nan], beta_steps])
    alpha = np.concatenate([[np.nan], alpha_steps])

    sched = NoiseSchedule(kind=kind, T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar)
    _validate(sched)
    return sched


def _validate(sched: NoiseSchedule) -> None:
    beta = sched.beta[1:]
    if not np.all((beta > 0.0) & (beta <= _BETA_CLIP)):
        raise ValueError("beta values must lie in (0, 0.999]")
    ab = sched.alpha_bar
    if ab[0] != 1.0:
        raise ValueError("alpha_bar[0] must be exactly 1")
    if not np.all(np.diff(ab) < 0.0):
        raise ValueError("alpha_bar must be strictly decreasing")
    if not (0.0 < ab[-1] < 1.0):
        raise ValueError("alpha_bar[T] must lie in (0, 1)")
    if not np.all(np.isfinite(ab)):
        raise ValueError("alpha_bar contains non-finite entries")


def marginal_coeffs(sched: NoiseSchedule, t: int) -> tuple[float, float]:
    """Return ``(√ᾱ_t, √(1-ᾱ_t))``, the forward-marginal scale and noise std.

    Valid for t = 0..T; the two outputs satisfy scale² + noise_std² = 1.
    """
    sched._check_step(t, lowest=0)
    ab = sched.alpha_bar[t]
    return float(np.sqrt(ab)), float(np.sqrt(1.0 - ab))


def posterior_sigma(sched: NoiseSchedule, t: int, variant: str = "beta_tilde") -> float:
    """Reverse-step noise standard deviation σ_t for t = 1..T.

    Args:
        sched: Schedule to query.
        t: Step index in [1, T].
        variant: ``"beta"`` gives √β_t; ``"beta_tilde"`` gives
            √(β_t (1-ᾱ_{t-1}) / (1-ᾱ_t)), which is 0 at t = 1.
    """
    if variant not in SIGMA_VARIANTS:
        raise ValueError(f"unknown sigma variant {variant!r}; expected one of {SIGMA_VARIANTS}")
    sched._check_step(t, lowest=1)
    if variant == "beta":
        return float(np.sqrt(sched.beta[t]))
    return float(np.sqrt(sched.beta[t] * (1.0 - sched.alpha_bar[t - 1]) / (1.0 - sched.alpha_bar[t])))


def schedule_table(sched: NoiseSchedule) -> list[dict[str, float]]:
    """Rows of all coefficients for t = 1..T, as written by ``schedule dump``."""
    rows = []
    for t in range(1, sched.T + 1):
        rows.append(
            {
                "t": t,
                "beta": float(sched.beta[t]),
                "alpha": float(sched.alpha[t]),
                "alpha_bar": float(sched.alpha_bar[t]),
                "sigma_beta": posterior_sigma(sched, t, "beta"),
                "sigma_beta_tilde": posterior_sigma(sched, t, "beta_tilde"),
            }
        )
    return rows
