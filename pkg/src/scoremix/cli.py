"""Command-line entry point.

Subcommands:

    schedule dump   write all schedule coefficients as CSV
    data gen        generate the configured dataset and persist it
    train           train the denoiser; writes checkpoint + loss curve
    sample          draw samples from the analytic field or a checkpoint,
                    optionally through a --compose spec
    eval            score a sample CSV against concepts; writes metrics JSON
    oracle-check    run the exact self-verification suite
    plot            render a sample CSV to SVG (scatter or blob grid)

Exit codes: 0 success, 1 validation error (bad flags, config, or inputs),
2 runtime failure. Every artifact gets a ``<name>.provenance.json``
sidecar holding the exact command, the full config text, and the package
version; re-running the recorded command reproduces the artifact
byte-for-byte (``regenerate`` automates that). Relative output paths are
placed under $SCOREMIX_OUTDIR when it is set.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .compose import CompositionSpec, Term
from .config import ExperimentConfig, ValidationError, parse_config_file
from .data import gen_dataset, load_blobs, load_points_csv, save_blobs, save_points_csv
from .evaluate import BlobsVerifier, PointsVerifier, metrics_report, train_binary_classifier
from .model import DenoiserField, load_checkpoint, save_checkpoint
from .oracles import format_results, run_oracle_checks
from .plot import svg_blob_grid, svg_scatter
from .sample import SampleBatch, ddpm_sample, load_samples_csv, save_samples
from .schedule import build_schedule, schedule_table
from .train import save_loss_curve, train_loop

OUTDIR_ENV = "SCOREMIX_OUTDIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); flag misuse is a validation error
        raise ValidationError(message)


def _out_path(path: str) -> str:
    base = os.environ.get(OUTDIR_ENV)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _provenance(kind: str, argv: list[str], config_text: str | None, extra: dict | None = None) -> dict:
    doc = {
        "artifact": kind,
        "command": argv,
        "package_version": __version__,
    }
    if config_text is not None:
        doc["config_sha256"] = hashlib.sha256(config_text.encode()).hexdigest()
        doc["config_text"] = config_text
    if extra:
        doc.update(extra)
    return doc


def _write_provenance(path: str, doc: dict) -> None:
    _write_text(f"{path}.provenance.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_config(path: str) -> tuple[ExperimentConfig, str]:
    cfg = parse_config_file(path)
    with open(path) as fh:
        return cfg, fh.read()


def _compose_spec(cfg: ExperimentConfig, text: str | None) -> CompositionSpec:
    source = text if text is not None else cfg.sample.compose
    if not source:
        raise ValidationError("no composition given: pass --compose or set [sample] compose")
    try:
        return cfg.parse_compose(source)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _score_field(cfg: ExperimentConfig, sched, ckpt: str | None):
    if ckpt is None:
        return cfg.analytic_field(sched)
    net, _ = load_checkpoint(ckpt, expect_schedule=(sched.kind, sched.T))
    if net.config.data_dim != cfg.dataset.dim:
        raise ValidationError(
            f"checkpoint dimension {net.config.data_dim} does not match dataset dimension {cfg.dataset.dim}"
        )
    return DenoiserField(net=net, sched=sched, name=os.path.basename(ckpt))


def _verifier(cfg: ExperimentConfig):
    if cfg.eval.verifier == "analytic":
        if cfg.dataset.kind == "points2d":
            return PointsVerifier(concepts=cfg.dataset.concepts)
        return BlobsVerifier(
            grid_h=cfg.dataset.grid_h,
            grid_w=cfg.dataset.grid_w,
            radius_cells=cfg.eval.blob_radius_cells,
            tau=cfg.eval.blob_tau,
        )
    return None  # learned verifiers are trained per concept in cmd_eval


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_schedule_dump(args, argv) -> int:
    cfg, cfg_text = _load_config(args.config)
    sched = build_schedule(cfg.schedule.kind, cfg.schedule.T)
    rows = schedule_table(sched)
    out = _out_path(args.out)
    lines = ["t,beta,alpha,alpha_bar,sigma_beta,sigma_beta_tilde"]
    for r in rows:
        lines.append(
            f"{r['t']},{r['beta']!r},{r['alpha']!r},{r['alpha_bar']!r},"
            f"{r['sigma_beta']!r},{r['sigma_beta_tilde']!r}"
        )
    _write_text(out, "\n".join(lines) + "\n")
    _write_provenance(out, _provenance("schedule-table", argv, cfg_text))
    print(f"wrote {sched.T} schedule rows to {out}")
    return 0


def cmd_data_gen(args, argv) -> int:
    cfg, cfg_text = _load_config(args.config)
    dataset = gen_dataset(cfg.dataset)
    out = _out_path(args.out)
    if cfg.dataset.kind == "points2d":
        save_points_csv(dataset, out)
    else:
        save_blobs(dataset, out)
    _write_provenance(out, _provenance("dataset", argv, cfg_text, {"n": len(dataset), "kind": cfg.dataset.kind}))
    print(f"wrote {len(dataset)} {cfg.dataset.kind} examples to {out}")
    return 0


def cmd_train(args, argv) -> int:
    cfg, cfg_text = _load_config(args.config)
    sched = build_schedule(cfg.schedule.kind, cfg.schedule.T)
    dataset = gen_dataset(cfg.dataset)
    net, losses = train_loop(cfg.model, dataset, sched, cfg.train)
    out = _out_path(args.out)
    meta = {
        "steps": cfg.train.steps,
        "loss": float(losses[-1]) if len(losses) else None,
        "seed": cfg.train.seed,
    }
    save_checkpoint(net, sched, out, meta=meta)
    _write_provenance(out, _provenance("checkpoint", argv, cfg_text, {"meta": meta}))
    curve = args.loss_curve or f"{out}.losses.csv"
    curve = _out_path(curve)
    save_loss_curve(losses, curve)
    _write_provenance(curve, _provenance("loss-curve", argv, cfg_text))
    if len(losses):
        k = max(1, len(losses) // 20)
        print(f"trained {cfg.train.steps} steps; loss {losses[:k].mean():.4f} -> {losses[-k:].mean():.4f}")
    print(f"checkpoint: {out}")
    return 0


def cmd_sample(args, argv) -> int:
    cfg, cfg_text = _load_config(args.config)
    sched = build_schedule(cfg.schedule.kind, cfg.schedule.T)
    field = _score_field(cfg, sched, args.checkpoint)
    spec = _compose_spec(cfg, args.compose)
    n = args.n or cfg.sample.n
    batch, traj = ddpm_sample(
        field,
        spec,
        sched,
        n=n,
        seed=args.seed if args.seed is not None else cfg.sample.seed,
        rule=cfg.sample.rule,
        sigma_variant=cfg.sample.sigma_variant,
        store_at=args.store_steps or (),
    )
    out = _out_path(args.out)
    save_samples(batch, out, extra_provenance=_provenance("samples", argv, cfg_text, {"terms": [str(t.label) for t in spec.terms]}))
    if traj is not None and args.trajectory_out:
        tout = _out_path(args.trajectory_out)
        doc = {str(t): arr.tolist() for t, arr in traj.snapshots.items()}
        _write_text(tout, json.dumps(doc))
        _write_provenance(tout, _provenance("trajectory", argv, cfg_text))
    print(f"wrote {len(batch)} samples to {out} (spec {spec})")
    return 0


def cmd_eval(args, argv) -> int:
    cfg, cfg_text = _load_config(args.config)
    samples = load_samples_csv(args.samples)
    if samples.shape[0] == 0:
        raise ValidationError(f"sample file {args.samples} holds no rows")
    spec = _compose_spec(cfg, args.concepts)
    dataset = gen_dataset(cfg.dataset)
    verifier = _verifier(cfg)
    if verifier is None:
        if len(spec.terms) != 1:
            raise ValidationError("the learned verifier evaluates one concept at a time")
        verifier = train_binary_classifier(
            dataset, spec.terms[0].label, seed=cfg.dataset.seed, radius_cells=cfg.eval.blob_radius_cells
        )
    limit = min(cfg.eval.n, samples.shape[0])
    reference = dataset.x0[: min(cfg.eval.n, len(dataset))]
    report = metrics_report(samples[:limit], spec.terms, verifier, reference=reference)
    out = _out_path(args.out)
    _write_text(out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_provenance(out, _provenance("metrics", argv, cfg_text, {"samples": args.samples}))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_oracle_check(args, argv) -> int:
    cfg, _ = _load_config(args.config)
    results = run_oracle_checks(cfg)
    print(format_results(results))
    return 0 if all(r.passed for r in results) else 1


def cmd_plot(args, argv) -> int:
    cfg, cfg_text = _load_config(args.config)
    samples = load_samples_csv(args.samples)
    if samples.shape[0] == 0:
        raise ValidationError(f"sample file {args.samples} holds no rows; nothing to plot")
    if samples.shape[1] == 2:
        svg = svg_scatter(samples)
    elif samples.shape[1] == cfg.dataset.dim and cfg.dataset.kind == "blobs":
        svg = svg_blob_grid(samples, cfg.dataset.grid_h, cfg.dataset.grid_w)
    else:
        raise ValidationError(
            f"cannot plot dimension {samples.shape[1]}: expected 2 (scatter) or the config's blob grid"
        )
    out = _out_path(args.out)
    _write_text(out, svg)
    _write_provenance(out, _provenance("plot", argv, cfg_text, {"samples": args.samples}))
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# Argument plumbing
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="scoremix", description="Compositional diffusion sampling and verification")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("schedule", help="schedule utilities")
    ssub = sp.add_subparsers(dest="action", required=True)
    dump = ssub.add_parser("dump", help="write coefficients as CSV")
    dump.add_argument("--config", required=True)
    dump.add_argument("--out", default="schedule.csv")
    dump.set_defaults(fn=cmd_schedule_dump)

    dp = sub.add_parser("data", help="dataset utilities")
    dsub = dp.add_subparsers(dest="action", required=True)
    gen = dsub.add_parser("gen", help="generate the configured dataset")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", default="dataset.out")
    gen.set_defaults(fn=cmd_data_gen)

    tr = sub.add_parser("train", help="train the denoiser")
    tr.add_argument("--config", required=True)
    tr.add_argument("--out", default="checkpoint.json")
    tr.add_argument("--loss-curve", default=None)
    tr.set_defaults(fn=cmd_train)

    sa = sub.add_parser("sample", help="draw samples")
    sa.add_argument("--config", required=True)
    sa.add_argument("--out", default="samples.csv")
    sa.add_argument("--compose", default=None, help='e.g. "c1:1.0,~c2:1.0" or "@0.5,0.5"')
    sa.add_argument("--checkpoint", default=None, help="sample a trained denoiser instead of the analytic field")
    sa.add_argument("--n", type=int, default=None)
    sa.add_argument("--seed", type=int, default=None)
    sa.add_argument("--store-steps", type=int, nargs="*", default=None, help="snapshot these step indices")
    sa.add_argument("--trajectory-out", default=None)
    sa.set_defaults(fn=cmd_sample)

    ev = sub.add_parser("eval", help="score a sample CSV")
    ev.add_argument("--config", required=True)
    ev.add_argument("--samples", required=True)
    ev.add_argument("--concepts", default=None, help="concept terms; defaults to [sample] compose")
    ev.add_argument("--out", default="metrics.json")
    ev.set_defaults(fn=cmd_eval)

    oc = sub.add_parser("oracle-check", help="run the exact self-verification suite")
    oc.add_argument("--config", required=True)
    oc.set_defaults(fn=cmd_oracle_check)

    pl = sub.add_parser("plot", help="render samples to SVG")
    pl.add_argument("--config", required=True)
    pl.add_argument("--samples", required=True)
    pl.add_argument("--out", default="samples.svg")
    pl.set_defaults(fn=cmd_plot)
    return p


def main(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args, list(argv))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001  (runtime failures map to exit 2)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def regenerate(provenance_path: str, out_path: str) -> int:
    """Re-run the command recorded in a provenance sidecar.

    The embedded config text is materialized next to ``out_path`` so the
    artifact is reproduced even if the original config file moved; the
    recorded output path is rewritten to ``out_path``.
    """
    with open(provenance_path) as fh:
        doc = json.load(fh)
    argv = list(doc["command"])
    cfg_path = f"{out_path}.regen-config.ini"
    if "config_text" in doc:
        _write_text(cfg_path, doc["config_text"])
    rewritten = []
    i = 0
    while i < len(argv):
        if argv[i] == "--out":
            rewritten += ["--out", out_path]
            i += 2
        elif argv[i] == "--config" and "config_text" in doc:
            rewritten += ["--config", cfg_path]
            i += 2
        else:
            rewritten.append(argv[i])
            i += 1
    return main(rewritten)


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
