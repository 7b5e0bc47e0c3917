"""Quantify the gap between ancestral guidance sampling and the composed
target, and show that Langevin dynamics against the composed score at a
low-noise step does hit the target.

Composing score fields multiplies the underlying densities, but running
the ancestral reverse chain on the composed field is not the same as
sampling that product: the composed per-step fields are not the
marginals of any single diffusion, and the chain lands on a measurably
narrower distribution. The per-step Gaussian algebra lets us compute the
chain's terminal variance exactly, so the gap is predictable, not noise.
"""

import numpy as np

from scoremix import AnalyticGaussianField, CompositionSpec, ConceptLabel, GaussianConceptSpec, Term, build_schedule
from scoremix.compose import composition_target
from scoremix.sample import ddpm_sample, langevin_sample

sched = build_schedule("cosine", 1000)
c0, c1 = ConceptLabel.discrete(0), ConceptLabel.discrete(1)
field = AnalyticGaussianField(
    uncond=GaussianConceptSpec(mean=np.zeros(2), var=np.full(2, 4.0)),
    cond={
        c0: GaussianConceptSpec(mean=np.array([-1.0, 0.0]), var=np.ones(2)),
        c1: GaussianConceptSpec(mean=np.array([1.0, 0.0]), var=np.ones(2)),
    },
    sched=sched,
)
spec = CompositionSpec.of(Term(c0, weight=1.0), Term(c1, weight=1.0))
lam, eta, _ = composition_target(field, spec, t=1)
target_var = 1.0 / lam[0]
print(f"composed product target: N(0, {target_var:.4f} I)")


def predicted_ancestral_variance():
    # exact variance recursion of the linear-Gaussian reverse chain driven
    # by the composed field (mean-zero case)
    w = 1.0
    for t in range(sched.T, 0, -1):
        lam_t, _, _ = composition_target(field, spec, t)
        v_star = 1.0 / lam_t[0]
        contraction = (1.0 - sched.beta[t] / v_star) / np.sqrt(sched.alpha[t])
        sig2 = 0.0 if t == 1 else sched.beta[t] * (1 - sched.alpha_bar[t - 1]) / (1 - sched.alpha_bar[t])
        w = w * contraction**2 + sig2
    return w


pred = predicted_ancestral_variance()
batch, _ = ddpm_sample(field, spec, sched, n=8000, seed=4)
emp = batch.samples.var(0).mean()
print(f"ancestral chain: predicted terminal variance {pred:.4f}, sampled {emp:.4f}")
print(f"  -> {100 * (1 - emp / target_var):.1f}% narrower than the product target")

lang = langevin_sample(field, spec, t_eval=1, steps=2000, lam=0.01, seed=5, n=8000)
print(f"langevin at t_eval=1: sampled variance {lang.samples.var(0).mean():.4f} (target {target_var:.4f})")
print("the refinement chain targets the composed density directly, so it lands on it")
