"""Samplers over (possibly composed) score fields.

Ancestral sampling iterates the reverse kernel from t = T down to 1,
with the per-step noise prediction supplied by the composition operator.
Two update rules are provided:

- ``standard``: x_{t-1} = (x_t - (β_t/√(1-ᾱ_t)) ε̂) / √α_t + σ_t z,
  the usual reverse-step mean for ε-parameterized denoisers.
- ``schematic``: x_{t-1} = x_t - ε̂ + σ_t z, the bare
  "subtract the predicted noise" update with no mean rescaling. Kept for
  side-by-side comparison; it does not preserve data scale (see the
  divergence report in the verification suite) and ``standard`` is the
  default.

In both rules the final step (t = 1) adds no noise. Langevin dynamics is
the EBM-style alternative: it refines samples against the composed score
at one fixed step t_eval, x ← x - (λ/2) g + N(0, λI) with
g = ε̂/√(1-ᾱ_{t_eval}), whose stationary law approximates the composed
time-t_eval density for small λ.

Determinism: sample row r reads exclusively from its own Philox
substream. For ancestral sampling a row's stream yields d values for
x_T, then d values per step for z_t, t = T..1 (the t = 1 draw is made
and discarded since σ_1 = 0); for Langevin it yields d values for the
start point, then d per iteration. Rows are therefore reproducible
independent of batch size, chunking, or execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .compose import CompositionSpec, composed_epsilon
from .rng import DOMAIN_LANGEVIN_ROW, DOMAIN_SAMPLE_ROW, stream
from .schedule import NoiseSchedule, posterior_sigma
from .scorefield import ScoreField

SAMPLER_RULES = ("standard", "schematic")

_DEFAULT_CHUNK_BYTES = 256 * 1024 * 1024


@dataclass
class SampleBatch:
    """Generated samples plus full provenance of how they were produced."""

    samples: np.ndarray
    provenance: dict

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass
class Trajectory:
    """Stored intermediate states x_t keyed by step, from x_T down to x_0."""

    snapshots: dict[int, np.ndarray] = field(default_factory=dict)

    def steps(self) -> list[int]:
        return sorted(self.snapshots, reverse=True)


def ddpm_step(
    x_t: np.ndarray,
    t: int,
    eps_hat: np.ndarray,
    sched: NoiseSchedule,
    rule: str = "standard",
    sigma_variant: str = "beta_tilde",
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """One reverse step x_t -> x_{t-1}.

    ``noise`` must be a standard-normal draw shaped like ``x_t`` whenever
    the step's σ is positive; at t = 1 the step is deterministic (σ
    forced to 0) and ``noise`` is ignored.
    """
    if rule not in SAMPLER_RULES:
        raise ValueError(f"unknown sampler rule {rule!r}; expected one of {SAMPLER_RULES}")
    sched._check_step(t, lowest=1)
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if eps_hat.shape != x_t.shape:
        raise ValueError(f"eps_hat shape {eps_hat.shape} does not match x shape {x_t.shape}")

    if rule == "standard":
        beta = sched.beta[t]
        mean = (x_t - beta / np.sqrt(1.0 - sched.alpha_bar[t]) * eps_hat) / np.sqrt(sched.alpha[t])
    else:
        mean = x_t - eps_hat

    sigma = 0.0 if t == 1 else posterior_sigma(sched, t, sigma_variant)
    if sigma == 0.0:
        return mean
    if noise is None:
        raise ValueError("noise draw required for a stochastic step")
    return mean + sigma * noise


def _chunk_rows(n: int, per_row_values: int, chunk_bytes: int) -> int:
    rows = max(1, chunk_bytes // (per_row_values * 8))
    return min(n, rows)


def ddpm_sample(
    field_: ScoreField,
    spec: CompositionSpec,
    sched: NoiseSchedule,
    n: int,
    seed: int,
    rule: str = "standard",
    sigma_variant: str = "beta_tilde",
    store_at: Sequence[int] = (),
    chunk_bytes: int = _DEFAULT_CHUNK_BYTES,
) -> tuple[SampleBatch, Trajectory | None]:
    """Ancestral sampling of n rows from the composed field.

    Rows are driven by independent per-row substreams (see module
    docstring for the draw order), generated in memory-capped chunks;
    the result is identical for any chunk size. ``store_at`` lists step
    indices whose states are snapshotted into a Trajectory (x_T and the
    final x_0 are always included when any are requested).

    Returns:
        (batch, trajectory); ``trajectory`` is None unless requested.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    d = field_.dim
    T = sched.T
    want = {int(s) for s in store_at}
    if want:
        want |= {T, 0}
    traj = Trajectory() if want else None

    out = np.empty((n, d))
    chunk = _chunk_rows(n, (T + 1) * d, chunk_bytes)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        rows = stop - start
        noise = np.empty((rows, T + 1, d))
        for r in range(rows):
            g = stream(seed, DOMAIN_SAMPLE_ROW, index=start + r)
            noise[r] = g.standard_normal((T + 1) * d).reshape(T + 1, d)
        x = noise[:, 0, :].copy()
        if traj is not None and T in want:
            traj.snapshots.setdefault(T, np.empty((n, d)))[start:stop] = x
        for t in range(T, 0, -1):
            eps_hat = composed_epsilon(field_, x, t, spec)
            x = ddpm_step(x, t, eps_hat, sched, rule, sigma_variant, noise=noise[:, T - t + 1, :])
            if traj is not None and (t - 1) in want:
                traj.snapshots.setdefault(t - 1, np.empty((n, d)))[start:stop] = x
        out[start:stop] = x

    provenance = {
        "sampler": "ddpm",
        "n": n,
        "seed": seed,
        "spec": str(spec),
        "schedule_kind": sched.kind,
        "schedule_T": sched.T,
        "rule": rule,
        "sigma_variant": sigma_variant,
        "field": field_.describe(),
    }
    return SampleBatch(samples=out, provenance=provenance), traj


def langevin_sample(
    field_: ScoreField,
    spec: CompositionSpec,
    t_eval: int,
    steps: int,
    lam: float,
    seed: int,
    n: int,
    chunk_bytes: int = _DEFAULT_CHUNK_BYTES,
) -> SampleBatch:
    """Langevin refinement against the composed score at a fixed step.

    Starts from N(0, I) and iterates
    x ← x - (λ/2) ε̂(x, t_eval)/√(1-ᾱ_{t_eval}) + N(0, λI).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not lam > 0.0:
        raise ValueError("lambda must be positive")
    if n < 1:
        raise ValueError("need n >= 1 samples")
    sched = field_.sched
    sched._check_step(t_eval, lowest=1)
    d = field_.dim
    scale = 1.0 / np.sqrt(1.0 - sched.alpha_bar[t_eval])
    root_lam = np.sqrt(lam)

    out = np.empty((n, d))
    chunk = _chunk_rows(n, (steps + 1) * d, chunk_bytes)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        rows = stop - start
        noise = np.empty((rows, steps + 1, d))
        for r in range(rows):
            g = stream(seed, DOMAIN_LANGEVIN_ROW, index=start + r)
            noise[r] = g.standard_normal((steps + 1) * d).reshape(steps + 1, d)
        x = noise[:, 0, :].copy()
        for k in range(1, steps + 1):
            grad = scale * composed_epsilon(field_, x, t_eval, spec)
            x = x - 0.5 * lam * grad + root_lam * noise[:, k, :]
        out[start:stop] = x

    provenance = {
        "sampler": "langevin",
        "n": n,
        "seed": seed,
        "spec": str(spec),
        "schedule_kind": sched.kind,
        "schedule_T": sched.T,
        "t_eval": t_eval,
        "steps": steps,
        "lambda": lam,
        "field": field_.describe(),
    }
    return SampleBatch(samples=out, provenance=provenance)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_samples(batch: SampleBatch, path: str, extra_provenance: dict | None = None) -> None:
    """Write samples as CSV (columns x1..xd) plus a ``.provenance.json`` sidecar."""
    import json
    import os

    n, d = batch.samples.shape
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(",".join(f"x{i + 1}" for i in range(d)) + "\n")
        for row in batch.samples:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    os.replace(tmp, path)

    prov = dict(batch.provenance)
    if extra_provenance:
        prov.update(extra_provenance)
    ptmp = f"{path}.provenance.json.tmp.{os.getpid()}"
    with open(ptmp, "w") as fh:
        json.dump(prov, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(ptmp, f"{path}.provenance.json")


def load_samples_csv(path: str) -> np.ndarray:
    """Read a samples CSV back into an (n, d) array."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header or not header.split(",")[0].startswith("x"):
            raise ValueError(f"unexpected samples CSV header {header!r}")
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    if not rows:
        return np.empty((0, len(header.split(","))))
    return np.array(rows, dtype=np.float64)
