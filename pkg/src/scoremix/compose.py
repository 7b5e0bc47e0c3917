"""Score composition operators: conjunction (AND), negation (NOT), and
their common generalization as a signed, weighted sum of guidance terms.

Writing ε(c) for a conditional evaluation and ε(∅) for the unconditional
one at a fixed (x, t), the operators are

    conjunction:  ε(∅) + Σ_i w_i (ε(c_i) - ε(∅))
    negation:     ε(∅) + w (ε(c_i) - ε(c̃_j))
    general:      ε(∅) + Σ_k s_k w_k (ε(c_k) - ε(∅)),   s_k = ±1

A single positive term at w = 1 collapses to the plain conditional
evaluation (unit-scale classifier-free guidance); a positive/negative
pair with a shared weight reproduces the negation formula because the
ε(∅) contributions cancel algebraically.

Because each conditional evaluation enters linearly, composing analytic
Gaussian concepts has an exact closed form: per axis, the composed field
equals the ε of the Gaussian whose natural parameters are the signed
combination of the time-t diffused concept Gaussians' natural parameters
(``composition_target``). That identity is exact at every timestep and
is the workhorse oracle of the verification suite.

Terms are summed in a canonical sorted order so permuting a spec's terms
is bit-exact, not merely within floating-point reassociation error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .scorefield import ConceptLabel, ScoreField, field_eval

POLARITIES = ("positive", "negative")


@dataclass(frozen=True)
class Term:
    """One composition term: a non-null concept, a polarity, and a weight."""

    label: ConceptLabel
    polarity: str = "positive"
    weight: float = 1.0

    def __post_init__(self):
        if self.label.is_null:
            raise ValueError("composition terms must use non-null labels")
        if self.polarity not in POLARITIES:
            raise ValueError(f"polarity must be one of {POLARITIES}, got {self.polarity!r}")
        if not np.isfinite(self.weight) or self.weight < 0.0:
            raise ValueError(f"weight must be finite and >= 0, got {self.weight}")

    @property
    def sign(self) -> float:
        return 1.0 if self.polarity == "positive" else -1.0


@dataclass(frozen=True)
class CompositionSpec:
    """Ordered list of terms defining an AND/NOT composition.

    At least one term is required, and a spec containing any negated term
    must also contain a positive one: negation on its own does not pin
    down a target distribution.
    """

    terms: tuple[Term, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ValueError("composition needs at least one term")
        if any(t.polarity == "negative" for t in terms) and not any(
            t.polarity == "positive" for t in terms
        ):
            raise ValueError("a negated concept must be accompanied by a positive concept")

    @staticmethod
    def of(*terms: Term) -> "CompositionSpec":
        return CompositionSpec(tuple(terms))

    def canonical_terms(self) -> tuple[Term, ...]:
        """Terms sorted by (label, polarity, weight); fixes summation order."""
        return tuple(sorted(self.terms, key=lambda t: (t.label.sort_key(), t.polarity, t.weight)))

    def distinct_labels(self) -> tuple[ConceptLabel, ...]:
        seen: dict[ConceptLabel, None] = {}
        for t in self.canonical_terms():
            seen.setdefault(t.label, None)
        return tuple(seen)

    def __str__(self) -> str:
        return format_composition(self)


def _conditionals(field: ScoreField, x: np.ndarray, t: int, labels: Sequence[ConceptLabel]):
    """Evaluate each distinct label exactly once (evaluation-count contract)."""
    out: dict[ConceptLabel, np.ndarray] = {}
    for label in labels:
        if label not in out:
            out[label] = field_eval(field, x, t, label)
    return out


def composed_epsilon(field: ScoreField, x: np.ndarray, t: int, spec: CompositionSpec) -> np.ndarray:
    """Signed weighted guidance sum ε(∅) + Σ_k s_k w_k (ε(c_k) - ε(∅)).

    Exactly (number of distinct labels in ``spec``) + 1 field evaluations
    are performed. Terms are accumulated in canonical order, so any
    permutation of ``spec.terms`` returns bit-identical output.
    """
    terms = spec.canonical_terms()
    eps_null = field_eval(field, x, t, ConceptLabel.null())
    cond = _conditionals(field, x, t, [tm.label for tm in terms])
    out = eps_null.copy()
    for tm in terms:
        out += (tm.sign * tm.weight) * (cond[tm.label] - eps_null)
    return out


def conjunction_epsilon(field: ScoreField, x: np.ndarray, t: int, terms: Sequence[Term]) -> np.ndarray:
    """AND composition over positive terms: ε(∅) + Σ_i w_i (ε(c_i) - ε(∅))."""
    terms = tuple(terms)
    if any(tm.polarity != "positive" for tm in terms):
        raise ValueError("conjunction accepts positive terms only")
    return composed_epsilon(field, x, t, CompositionSpec(terms))


def negation_epsilon(field: ScoreField, x: np.ndarray, t: int, positive: ConceptLabel, negated: ConceptLabel, weight: float = 1.0) -> np.ndarray:
    """NOT composition with a shared weight: ε(∅) + w (ε(c_i) - ε(c̃_j)).

    Exactly 3 field evaluations. Agrees with the signed-sum form
    ``composed_epsilon`` on [(c_i, +, w), (c̃_j, -, w)] up to floating
    round-off (the ε(∅) terms cancel algebraically).
    """
    if positive.is_null or negated.is_null:
        raise ValueError("negation needs non-null positive and negated labels")
    if not np.isfinite(weight) or weight < 0.0:
        raise ValueError(f"weight must be finite and >= 0, got {weight}")
    eps_null = field_eval(field, x, t, ConceptLabel.null())
    eps_pos = field_eval(field, x, t, positive)
    eps_neg = eps_pos if negated == positive else field_eval(field, x, t, negated)
    return eps_null + weight * (eps_pos - eps_neg)


# ---------------------------------------------------------------------------
# Exact composition target for analytic Gaussian fields
# ---------------------------------------------------------------------------


def composition_target(field, spec: CompositionSpec, t: int) -> tuple[np.ndarray, np.ndarray, bool]:
    """Natural parameters of the composed time-t Gaussian for an analytic field.

    Each concept's time-t marginal N(m_k, v_k) has per-axis precision
    λ_k = 1/v_k and natural mean η_k = m_k/v_k. The composed field's
    log-density gradient is the same signed combination as the ε terms,
    so the composed Gaussian has

        λ* = λ_∅ + Σ_k s_k w_k (λ_k - λ_∅)
        η* = η_∅ + Σ_k s_k w_k (η_k - η_∅)

    Returns:
        ``(lam, eta, proper)`` where ``proper`` is False when λ* has a
        nonpositive axis; the composed ε is still a well-defined vector
        field there but no normalizable Gaussian matches it.
    """
    from .scorefield import diffused_moments  # local import avoids cycle at module load

    mean0, var0 = diffused_moments(field.uncond, field.sched, t)
    lam = 1.0 / var0
    eta = mean0 / var0
    for tm in spec.canonical_terms():
        mean_k, var_k = diffused_moments(field.spec_for(tm.label), field.sched, t)
        lam = lam + tm.sign * tm.weight * (1.0 / var_k - 1.0 / var0)
        eta = eta + tm.sign * tm.weight * (mean_k / var_k - mean0 / var0)
    proper = bool(np.all(lam > 0.0))
    return lam, eta, proper


def composition_target_epsilon(field, spec: CompositionSpec, x: np.ndarray, t: int) -> tuple[np.ndarray, bool]:
    """ε of the natural-parameter-combined Gaussian at (x, t).

    Independent oracle for ``composed_epsilon`` on analytic fields: the
    score of the combined Gaussian is η* - λ* x, so

        ε*(x, t) = √(1-ᾱ_t) (λ* x - η*).
    """
    lam, eta, proper = composition_target(field, spec, t)
    root = np.sqrt(1.0 - field.sched.alpha_bar[t])
    return root * (lam * np.asarray(x, dtype=np.float64) - eta), proper


# ---------------------------------------------------------------------------
# Textual composition specs
# ---------------------------------------------------------------------------


def format_composition(spec: CompositionSpec) -> str:
    """Render a spec in the textual grammar accepted by ``parse_composition``.

    Labels render canonically (``d<N>`` for discrete ids, ``@x,y`` for
    coordinates); feeding the output back through ``parse_composition``
    needs a resolver that understands those canonical names.
    """
    parts = []
    for tm in spec.terms:
        prefix = "~" if tm.polarity == "negative" else ""
        parts.append(f"{prefix}{tm.label}:{tm.weight!r}")
    return ",".join(parts)


class ComposeParseError(ValueError):
    """Parse failure with the offending position in the source text."""

    def __init__(self, text: str, pos: int, message: str):
        super().__init__(f"compose spec error at position {pos}: {message} (in {text!r})")
        self.pos = pos


def parse_composition(text: str, resolve: Callable[[str], ConceptLabel]) -> CompositionSpec:
    """Parse ``term ("," term)*`` with ``term := ["~"] label [":" weight]``.

    Labels are resolved through ``resolve``; coordinate labels are written
    inline as ``@x,y`` (the comma inside a coordinate binds tighter than
    the term separator). The default weight is 1.0.

    Raises:
        ComposeParseError: On empty input, malformed terms, bad weights,
            or unresolvable labels, with the failing position.
    """
    if not text.strip():
        raise ComposeParseError(text, 0, "empty composition")
    terms: list[Term] = []
    i = 0
    n = len(text)
    while i < n:
        start = i
        polarity = "positive"
        if text[i] == "~":
            polarity = "negative"
            i += 1
        if i >= n:
            raise ComposeParseError(text, i, "expected a label after '~'")
        if text[i] == "@":
            i += 1
            comps = []
            while True:
                j = i
                while j < n and text[j] not in ",:":
                    j += 1
                try:
                    comps.append(float(text[i:j]))
                except ValueError:
                    raise ComposeParseError(text, i, f"bad coordinate component {text[i:j]!r}") from None
                i = j
                if len(comps) < 2 and i < n and text[i] == ",":
                    i += 1
                    continue
                break
            if len(comps) != 2:
                raise ComposeParseError(text, start, "coordinate labels need exactly two components")
            try:
                label = ConceptLabel.of_coord(comps)
            except ValueError as exc:
                raise ComposeParseError(text, start, str(exc)) from None
        else:
            j = i
            while j < n and text[j] not in ",:":
                j += 1
            name = text[i:j]
            if not name:
                raise ComposeParseError(text, i, "empty label")
            try:
                label = resolve(name)
            except KeyError:
                raise ComposeParseError(text, i, f"unknown label {name!r}") from None
            i = j
        weight = 1.0
        if i < n and text[i] == ":":
            j = i + 1
            while j < n and text[j] != ",":
                j += 1
            try:
                weight = float(text[i + 1 : j])
            except ValueError:
                raise ComposeParseError(text, i + 1, f"bad weight {text[i + 1:j]!r}") from None
            if weight < 0.0:
                raise ComposeParseError(text, i + 1, "weights must be >= 0")
            i = j
        terms.append(Term(label=label, polarity=polarity, weight=weight))
        if i < n:
            if text[i] != ",":
                raise ComposeParseError(text, i, f"expected ',' between terms, found {text[i]!r}")
            i += 1
            if i == n:
                raise ComposeParseError(text, i, "trailing comma")
    try:
        return CompositionSpec(tuple(terms))
    except ValueError as exc:
        raise ComposeParseError(text, 0, str(exc)) from None
