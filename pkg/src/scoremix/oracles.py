"""Fast self-verification suite behind the ``oracle-check`` command.

Runs the package's exact cross-checks against a config's analytic field:

- schedule invariants (monotone ᾱ, recurrence exactness, coefficient ranges)
- analytic Gaussian ε against the brute-force grid oracle
- composition reduction identities on randomized inputs
- the closed-form composition target on randomized specs

Each check reports PASS/FAIL with its measured worst case; the suite is
meant as a sub-minute gate run before trusting any longer experiment.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .compose import CompositionSpec, Term, composed_epsilon, composition_target_epsilon, conjunction_epsilon, negation_epsilon
from .config import ExperimentConfig
from .schedule import build_schedule
from .scorefield import AnalyticGaussianField, ConceptLabel, GridOracleField, field_eval, gaussian_mixture_density


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _spot_steps(T: int) -> list[int]:
    return sorted({1, max(1, T // 4), max(1, T // 2), max(1, 3 * T // 4), T})


def run_oracle_checks(cfg: ExperimentConfig, rng_seed: int = 2024) -> list[CheckResult]:
    """Execute every check against the config's schedule and analytic field."""
    results: list[CheckResult] = []
    rng = np.random.default_rng(rng_seed)
    sched = build_schedule(cfg.schedule.kind, cfg.schedule.T)
    field = cfg.analytic_field(sched)
    labels = list(field.cond)
    if not labels:
        raise ValueError("oracle-check needs at least one [concept:*] section")

    def record(name: str, fn):
        start = time.perf_counter()
        try:
            passed, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(CheckResult(name, passed, detail, time.perf_counter() - start))

    def schedule_invariants():
        ab = sched.alpha_bar
        ok = ab[0] == 1.0 and np.all(np.diff(ab) < 0) and 0 < ab[-1] < 1
        recur = np.max(np.abs(ab[1:] - ab[:-1] * sched.alpha[1:]))
        ok &= recur <= 1e-15
        return bool(ok), f"max recurrence residual {recur:.2e}"

    def grid_agreement():
        worst = 0.0
        for label in [ConceptLabel.null(), *labels]:
            spec = field.spec_for(label)
            oracle = GridOracleField.from_density_fn(
                gaussian_mixture_density(spec.mean, spec.var), sched
            )
            probes = _probe_box(spec)
            for t in _spot_steps(sched.T):
                ea = field.epsilon(probes, t, label)
                eo = oracle.epsilon(probes, t)
                rms = float(np.sqrt(np.mean(((ea - eo) ** 2).sum(axis=1))))
                worst = max(worst, rms)
        return worst < 1e-3, f"worst probe RMS {worst:.2e} (bound 1e-3)"

    def reduction_identities():
        worst = 0.0
        for _ in range(200):
            x = rng.normal(0.0, 1.5, size=field.dim)
            t = int(rng.integers(1, sched.T + 1))
            la = labels[rng.integers(len(labels))]
            lb = labels[rng.integers(len(labels))]
            w = float(rng.uniform(0.0, 3.0))
            single = composed_epsilon(field, x, t, CompositionSpec.of(Term(la, weight=1.0)))
            worst = max(worst, float(np.max(np.abs(single - field_eval(field, x, t, la)))))
            zero = composed_epsilon(field, x, t, CompositionSpec.of(Term(la, weight=0.0)))
            worst = max(worst, float(np.max(np.abs(zero - field_eval(field, x, t, ConceptLabel.null())))))
            neg = negation_epsilon(field, x, t, la, lb, w)
            signed = composed_epsilon(
                field, x, t, CompositionSpec.of(Term(la, "positive", w), Term(lb, "negative", w))
            )
            worst = max(worst, float(np.max(np.abs(neg - signed))))
        return worst <= 1e-12, f"worst identity residual {worst:.2e} (bound 1e-12)"

    def closure():
        worst = 0.0
        improper = 0
        for _ in range(200):
            spec = _random_spec(rng, labels)
            t = int(rng.integers(1, sched.T + 1))
            x = rng.normal(0.0, 1.5, size=(4, field.dim))
            target, proper = composition_target_epsilon(field, spec, x, t)
            if not proper:
                improper += 1
                continue
            got = composed_epsilon(field, x, t, spec)
            worst = max(worst, float(np.max(np.abs(got - target))))
        return worst <= 1e-9, f"worst closure residual {worst:.2e} over proper specs ({improper} improper skipped)"

    def permutation():
        worst = 0.0
        for _ in range(50):
            spec = _random_spec(rng, labels, max_terms=4)
            t = int(rng.integers(1, sched.T + 1))
            x = rng.normal(0.0, 1.5, size=field.dim)
            base = composed_epsilon(field, x, t, spec)
            perm = list(spec.terms)
            rng.shuffle(perm)
            other = composed_epsilon(field, x, t, CompositionSpec(tuple(perm)))
            worst = max(worst, float(np.max(np.abs(base - other))))
        return worst == 0.0, f"worst permutation residual {worst:.2e} (must be exactly 0)"

    record("schedule invariants", schedule_invariants)
    record("analytic vs grid oracle", grid_agreement)
    record("composition reductions", reduction_identities)
    record("analytic closure", closure)
    record("permutation exactness", permutation)
    return results


def _probe_box(spec) -> np.ndarray:
    from .evaluate import probe_grid

    half = float(np.max(np.sqrt(spec.var)) * 1.5)
    lo = float(np.min(spec.mean) - half)
    hi = float(np.max(spec.mean) + half)
    return probe_grid(max(lo, -3.5), min(hi, 3.5))


def _random_spec(rng: np.random.Generator, labels, max_terms: int = 3) -> CompositionSpec:
    k = int(rng.integers(1, max_terms + 1))
    terms = [Term(labels[rng.integers(len(labels))], "positive", float(rng.uniform(0.0, 2.5)))]
    for _ in range(k - 1):
        polarity = "negative" if rng.random() < 0.3 else "positive"
        terms.append(Term(labels[rng.integers(len(labels))], polarity, float(rng.uniform(0.0, 2.5))))
    return CompositionSpec(tuple(terms))


def format_results(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name.ljust(width)}  {status}  [{r.seconds:6.2f}s]  {r.detail}")
    total = sum(r.seconds for r in results)
    ok = sum(r.passed for r in results)
    lines.append(f"{ok}/{len(results)} checks passed in {total:.1f}s")
    return "\n".join(lines)
