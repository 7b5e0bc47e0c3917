"""Experiment configuration: a small INI dialect with strict validation.

A config file has these sections (all keys case-sensitive):

    [schedule]   kind = cosine|linear, T = <int>
    [uncond]     mean = <floats>, var = <floats>   (analytic unconditional)
    [concept:NAME]  mean = <floats>, var = <floats>  (one per concept;
                 section order assigns the discrete ids 0, 1, ...)
    [dataset]    kind = points2d|blobs, n, seed, and for blobs:
                 grid = H W, blob_std, objects = MIN MAX
    [model]      hidden_widths, time_embed_dim, label_embed_dim
    [train]      steps, batch_size, learning_rate, beta1, beta2, adam_eps,
                 weight_decay, label_dropout_prob, seed
    [sample]     n, rule, sigma_variant, seed, compose (term grammar)
    [eval]       verifier = analytic|learned, n, blob_radius_cells, blob_tau

Vector values are whitespace-separated floats. Serialization uses
``repr`` for floats so parse -> serialize -> parse is the identity.
For points2d runs the [uncond] and [concept:*] sections double as the
analytic score field and as the dataset's sampling mixture; for blobs
runs concept sections are absent and compose specs use inline ``@x,y``
coordinate labels.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field as dc_field

import numpy as np

from .compose import CompositionSpec, parse_composition
from .data import DatasetConfig
from .model import DenoiserConfig
from .schedule import SCHEDULE_KINDS, SIGMA_VARIANTS
from .sample import SAMPLER_RULES
from .scorefield import AnalyticGaussianField, ConceptLabel, GaussianConceptSpec
from .train import TrainConfig


class ValidationError(ValueError):
    """Configuration or command-line input rejected before any work ran."""


@dataclass(frozen=True)
class ScheduleConfig:
    kind: str = "cosine"
    T: int = 1000


@dataclass(frozen=True)
class SampleConfig:
    n: int = 1000
    rule: str = "standard"
    sigma_variant: str = "beta_tilde"
    seed: int = 0
    compose: str = ""


@dataclass(frozen=True)
class EvalConfig:
    verifier: str = "analytic"
    n: int = 5000
    blob_radius_cells: float = 1.5
    blob_tau: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    schedule: ScheduleConfig
    dataset: DatasetConfig
    model: DenoiserConfig
    train: TrainConfig
    sample: SampleConfig
    eval: EvalConfig
    uncond: GaussianConceptSpec | None
    concept_names: tuple[str, ...] = ()

    def concept_label(self, name: str) -> ConceptLabel:
        try:
            return ConceptLabel.discrete(self.concept_names.index(name))
        except ValueError:
            raise KeyError(name) from None

    def resolve_label(self, name: str) -> ConceptLabel:
        """Label resolver for the compose grammar (coord labels parse inline)."""
        return self.concept_label(name)

    def parse_compose(self, text: str) -> CompositionSpec:
        return parse_composition(text, self.resolve_label)

    def analytic_field(self, sched) -> AnalyticGaussianField:
        if self.uncond is None:
            raise ValidationError("config has no [uncond] section; analytic field unavailable")
        cond = {
            ConceptLabel.discrete(i): spec
            for i, spec in enumerate(self.dataset.concepts)
        }
        return AnalyticGaussianField(uncond=self.uncond, cond=cond, sched=sched)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _floats(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in raw.split())
    except ValueError:
        raise ValidationError(f"expected whitespace-separated floats, got {raw!r}") from None


def _ints(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in raw.split())
    except ValueError:
        raise ValidationError(f"expected whitespace-separated integers, got {raw!r}") from None


class _Section:
    def __init__(self, name: str, items: dict[str, str]):
        self.name = name
        self.items = dict(items)
        self.seen: set[str] = set()

    def get(self, key: str, default=None, cast=str):
        if key not in self.items:
            if default is None:
                raise ValidationError(f"[{self.name}] is missing required key {key!r}")
            return default
        self.seen.add(key)
        raw = self.items[key]
        try:
            return cast(raw)
        except ValidationError:
            raise
        except (TypeError, ValueError):
            raise ValidationError(f"[{self.name}] key {key!r}: cannot parse {raw!r}") from None

    def finish(self):
        extra = set(self.items) - self.seen
        if extra:
            raise ValidationError(f"[{self.name}] has unknown keys: {sorted(extra)}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and cross-validate a config document."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config syntax error: {exc}") from exc

    sections = {name: _Section(name, dict(parser.items(name))) for name in parser.sections()}

    def take(name: str, required: bool = True) -> _Section | None:
        if name not in sections:
            if required:
                raise ValidationError(f"config is missing required section [{name}]")
            return None
        return sections.pop(name)

    sched_sec = take("schedule")
    sched = ScheduleConfig(kind=sched_sec.get("kind", "cosine"), T=sched_sec.get("T", cast=int))
    sched_sec.finish()
    if sched.kind not in SCHEDULE_KINDS:
        raise ValidationError(f"schedule kind must be one of {SCHEDULE_KINDS}, got {sched.kind!r}")
    if sched.T < 1:
        raise ValidationError("schedule T must be >= 1")

    uncond = None
    usec = take("uncond", required=False)
    if usec is not None:
        uncond = _gaussian_from(usec)

    concept_names: list[str] = []
    concepts: list[GaussianConceptSpec] = []
    for name in list(sections):
        if name.startswith("concept:"):
            cname = name.split(":", 1)[1]
            if not cname:
                raise ValidationError("concept section needs a name: [concept:NAME]")
            if cname in concept_names:
                raise ValidationError(f"duplicate concept name {cname!r}")
            concept_names.append(cname)
            concepts.append(_gaussian_from(sections.pop(name)))

    dsec = take("dataset")
    dkind = dsec.get("kind")
    try:
        if dkind == "points2d":
            dataset = DatasetConfig(
                kind="points2d",
                n=dsec.get("n", cast=int),
                seed=dsec.get("seed", cast=int),
                concepts=tuple(concepts),
            )
        else:
            grid = dsec.get("grid", default=(16, 16), cast=_ints)
            objects = dsec.get("objects", default=(1, 5), cast=_ints)
            if len(grid) != 2 or len(objects) != 2:
                raise ValidationError("[dataset] grid and objects each need two integers")
            dataset = DatasetConfig(
                kind=dkind,
                n=dsec.get("n", cast=int),
                seed=dsec.get("seed", cast=int),
                grid_h=grid[0],
                grid_w=grid[1],
                blob_std=dsec.get("blob_std", default=1.0, cast=float),
                objects_min=objects[0],
                objects_max=objects[1],
            )
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    dsec.finish()

    msec = take("model", required=False)
    model_kwargs = {}
    if msec is not None:
        model_kwargs = {
            "hidden_widths": msec.get("hidden_widths", default=(128, 128), cast=_ints),
            "time_embed_dim": msec.get("time_embed_dim", default=64, cast=int),
            "label_embed_dim": msec.get("label_embed_dim", default=64, cast=int),
        }
        msec.finish()
    try:
        model = DenoiserConfig(
            data_dim=dataset.dim,
            num_discrete_concepts=len(concepts) if dataset.kind == "points2d" else 0,
            coord_dim=0 if dataset.kind == "points2d" else 2,
            **model_kwargs,
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from None

    tsec = take("train", required=False)
    train = TrainConfig()
    if tsec is not None:
        try:
            train = TrainConfig(
                steps=tsec.get("steps", default=TrainConfig.steps, cast=int),
                batch_size=tsec.get("batch_size", default=TrainConfig.batch_size, cast=int),
                learning_rate=tsec.get("learning_rate", default=TrainConfig.learning_rate, cast=float),
                beta1=tsec.get("beta1", default=TrainConfig.beta1, cast=float),
                beta2=tsec.get("beta2", default=TrainConfig.beta2, cast=float),
                adam_eps=tsec.get("adam_eps", default=TrainConfig.adam_eps, cast=float),
                weight_decay=tsec.get("weight_decay", default=TrainConfig.weight_decay, cast=float),
                label_dropout_prob=tsec.get("label_dropout_prob", default=TrainConfig.label_dropout_prob, cast=float),
                seed=tsec.get("seed", default=TrainConfig.seed, cast=int),
            )
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        tsec.finish()

    ssec = take("sample", required=False)
    sample = SampleConfig()
    if ssec is not None:
        sample = SampleConfig(
            n=ssec.get("n", default=SampleConfig.n, cast=int),
            rule=ssec.get("rule", default=SampleConfig.rule),
            sigma_variant=ssec.get("sigma_variant", default=SampleConfig.sigma_variant),
            seed=ssec.get("seed", default=SampleConfig.seed, cast=int),
            compose=ssec.get("compose", default=""),
        )
        ssec.finish()
    if sample.rule not in SAMPLER_RULES:
        raise ValidationError(f"sample rule must be one of {SAMPLER_RULES}, got {sample.rule!r}")
    if sample.sigma_variant not in SIGMA_VARIANTS:
        raise ValidationError(f"sigma_variant must be one of {SIGMA_VARIANTS}, got {sample.sigma_variant!r}")
    if sample.n < 1:
        raise ValidationError("sample n must be >= 1")

    esec = take("eval", required=False)
    eval_cfg = EvalConfig()
    if esec is not None:
        eval_cfg = EvalConfig(
            verifier=esec.get("verifier", default=EvalConfig.verifier),
            n=esec.get("n", default=EvalConfig.n, cast=int),
            blob_radius_cells=esec.get("blob_radius_cells", default=EvalConfig.blob_radius_cells, cast=float),
            blob_tau=esec.get("blob_tau", default=EvalConfig.blob_tau, cast=float),
        )
        esec.finish()
    if eval_cfg.verifier not in ("analytic", "learned"):
        raise ValidationError(f"eval verifier must be analytic or learned, got {eval_cfg.verifier!r}")

    if sections:
        raise ValidationError(f"unknown config sections: {sorted(sections)}")

    cfg = ExperimentConfig(
        schedule=sched,
        dataset=dataset,
        model=model,
        train=train,
        sample=sample,
        eval=eval_cfg,
        uncond=uncond,
        concept_names=tuple(concept_names),
    )
    _cross_validate(cfg)
    return cfg


def _gaussian_from(sec: _Section) -> GaussianConceptSpec:
    mean = sec.get("mean", cast=_floats)
    var = sec.get("var", cast=_floats)
    sec.finish()
    try:
        return GaussianConceptSpec(mean=np.array(mean), var=np.array(var))
    except ValueError as exc:
        raise ValidationError(f"[{sec.name}]: {exc}") from None


def _cross_validate(cfg: ExperimentConfig) -> None:
    if cfg.dataset.kind == "points2d":
        if cfg.uncond is not None and cfg.uncond.dim != 2:
            raise ValidationError("[uncond] must be 2-dimensional for points2d runs")
    else:
        if cfg.concept_names:
            raise ValidationError("blobs runs condition on coordinates; remove [concept:*] sections")
    if cfg.sample.compose:
        try:
            cfg.parse_compose(cfg.sample.compose)
        except ValueError as exc:
            raise ValidationError(f"[sample] compose: {exc}") from None


def parse_config_file(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None


# ---------------------------------------------------------------------------
# Serialization (canonical form; parse(serialize(cfg)) == cfg)
# ---------------------------------------------------------------------------


def serialize_config(cfg: ExperimentConfig) -> str:
    out = io.StringIO()

    def sec(name: str, items: dict):
        out.write(f"[{name}]\n")
        for k, v in items.items():
            out.write(f"{k} = {v}\n")
        out.write("\n")

    def vec(values) -> str:
        return " ".join(repr(float(v)) for v in values)

    sec("schedule", {"kind": cfg.schedule.kind, "T": cfg.schedule.T})
    if cfg.uncond is not None:
        sec("uncond", {"mean": vec(cfg.uncond.mean), "var": vec(cfg.uncond.var)})
    for name, spec in zip(cfg.concept_names, cfg.dataset.concepts):
        sec(f"concept:{name}", {"mean": vec(spec.mean), "var": vec(spec.var)})
    d = cfg.dataset
    if d.kind == "points2d":
        sec("dataset", {"kind": d.kind, "n": d.n, "seed": d.seed})
    else:
        sec(
            "dataset",
            {
                "kind": d.kind,
                "n": d.n,
                "seed": d.seed,
                "grid": f"{d.grid_h} {d.grid_w}",
                "blob_std": repr(d.blob_std),
                "objects": f"{d.objects_min} {d.objects_max}",
            },
        )
    sec(
        "model",
        {
            "hidden_widths": " ".join(str(w) for w in cfg.model.hidden_widths),
            "time_embed_dim": cfg.model.time_embed_dim,
            "label_embed_dim": cfg.model.label_embed_dim,
        },
    )
    t = cfg.train
    sec(
        "train",
        {
            "steps": t.steps,
            "batch_size": t.batch_size,
            "learning_rate": repr(t.learning_rate),
            "beta1": repr(t.beta1),
            "beta2": repr(t.beta2),
            "adam_eps": repr(t.adam_eps),
            "weight_decay": repr(t.weight_decay),
            "label_dropout_prob": repr(t.label_dropout_prob),
            "seed": t.seed,
        },
    )
    s = cfg.sample
    items = {"n": s.n, "rule": s.rule, "sigma_variant": s.sigma_variant, "seed": s.seed}
    if s.compose:
        items["compose"] = s.compose
    sec("sample", items)
    e = cfg.eval
    sec(
        "eval",
        {
            "verifier": e.verifier,
            "n": e.n,
            "blob_radius_cells": repr(e.blob_radius_cells),
            "blob_tau": repr(e.blob_tau),
        },
    )
    return out.getvalue()
