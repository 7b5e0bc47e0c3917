import json
import os

import numpy as np
import pytest

from scoremix.cli import main, regenerate
from scoremix.config import ValidationError, parse_config, parse_config_file, serialize_config
from scoremix.sample import load_samples_csv

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def cfg_path(name):
    return os.path.join(CONFIGS, name)


MINIMAL = """
[schedule]
kind = cosine
T = 50

[uncond]
mean = 0.0 0.0
var = 1.0 1.0

[concept:a]
mean = -1.0 0.0
var = 0.5 0.5

[concept:b]
mean = 1.0 0.0
var = 0.5 0.5

[dataset]
kind = points2d
n = 100
seed = 1

[sample]
n = 20
seed = 2
compose = a:1.0,b:1.0
"""


class TestConfigParsing:
    def test_round_trip_identity(self):
        cfg = parse_config(MINIMAL)
        text = serialize_config(cfg)
        again = parse_config(text)
        assert again == cfg
        assert serialize_config(again) == text

    def test_committed_configs_parse_and_round_trip(self):
        for name in os.listdir(CONFIGS):
            cfg = parse_config_file(cfg_path(name))
            assert parse_config(serialize_config(cfg)) == cfg

    def test_concept_order_assigns_ids(self):
        cfg = parse_config(MINIMAL)
        assert cfg.concept_names == ("a", "b")
        assert cfg.concept_label("b").discrete_id == 1
        with pytest.raises(KeyError):
            cfg.concept_label("zzz")

    def test_unknown_section_rejected(self):
        with pytest.raises(ValidationError, match="unknown config sections"):
            parse_config(MINIMAL + "\n[mystery]\nx = 1\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError, match="unknown keys"):
            parse_config(MINIMAL.replace("T = 50", "T = 50\nwarmup = 3"))

    def test_missing_required_section(self):
        with pytest.raises(ValidationError, match="schedule"):
            parse_config("[dataset]\nkind = points2d\nn = 5\nseed = 0\n")

    def test_bad_compose_spec_rejected(self):
        with pytest.raises(ValidationError, match="compose"):
            parse_config(MINIMAL.replace("a:1.0,b:1.0", "~a:1.0"))

    def test_bad_sampler_rule(self):
        with pytest.raises(ValidationError, match="rule"):
            parse_config(MINIMAL.replace("n = 20", "n = 20\nrule = magic"))

    def test_blobs_reject_concept_sections(self):
        text = MINIMAL.replace("kind = points2d", "kind = blobs")
        with pytest.raises(ValidationError, match="coordinates"):
            parse_config(text)


class TestCliFlow:
    def test_schedule_dump(self, tmp_path):
        out = tmp_path / "sched.csv"
        rc = main(["schedule", "dump", "--config", cfg_path("conjunction2d.ini"), "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,beta,alpha,alpha_bar,sigma_beta,sigma_beta_tilde"
        assert len(lines) == 1001
        assert (tmp_path / "sched.csv.provenance.json").exists()

    def test_data_gen_and_plot(self, tmp_path):
        data = tmp_path / "pts.csv"
        rc = main(["data", "gen", "--config", cfg_path("conjunction2d.ini"), "--out", str(data)])
        assert rc == 0
        svg = tmp_path / "pts.svg"
        rc = main(["plot", "--config", cfg_path("conjunction2d.ini"), "--samples", str(data).replace("pts.csv", "pts.csv"), "--out", str(svg)])
        # data CSV has a label column; plot expects sample CSVs, so this is a validation error
        assert rc == 1

    def test_sample_eval_plot_pipeline(self, tmp_path):
        samples = tmp_path / "s.csv"
        rc = main([
            "sample", "--config", cfg_path("conjunction2d.ini"),
            "--out", str(samples), "--n", "300", "--seed", "9",
        ])
        assert rc == 0
        got = load_samples_csv(str(samples))
        assert got.shape == (300, 2)

        metrics = tmp_path / "m.json"
        rc = main([
            "eval", "--config", cfg_path("conjunction2d.ini"),
            "--samples", str(samples), "--out", str(metrics),
        ])
        assert rc == 0
        rep = json.loads(metrics.read_text())
        assert set(rep) == {"accuracy", "energy_distance", "n", "verifier_kind", "per_concept_satisfaction"}
        assert rep["n"] == 300

        svg = tmp_path / "s.svg"
        rc = main(["plot", "--config", cfg_path("conjunction2d.ini"), "--samples", str(samples), "--out", str(svg)])
        assert rc == 0
        assert svg.read_text().startswith("<svg")

    def test_sample_with_inline_compose_override(self, tmp_path):
        samples = tmp_path / "neg.csv"
        rc = main([
            "sample", "--config", cfg_path("negation2d.ini"),
            "--out", str(samples), "--n", "50", "--compose", "c1:1.0,~c2:1.0",
        ])
        assert rc == 0
        prov = json.loads((tmp_path / "neg.csv.provenance.json").read_text())
        assert prov["spec"] and prov["artifact"] == "samples"

    def test_empty_samples_plot_is_validation_error(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("x1,x2\n")
        out = tmp_path / "e.svg"
        rc = main(["plot", "--config", cfg_path("conjunction2d.ini"), "--samples", str(empty), "--out", str(out)])
        assert rc == 1
        assert not out.exists()

    def test_unknown_subcommand_exit_one(self):
        assert main(["frobnicate"]) == 1

    def test_missing_config_exit_one(self):
        assert main(["sample", "--config", "/nonexistent.ini", "--out", "x.csv"]) == 1

    def test_all_negative_compose_exit_one(self, tmp_path):
        rc = main([
            "sample", "--config", cfg_path("negation2d.ini"),
            "--out", str(tmp_path / "x.csv"), "--compose", "~c1:1.0",
        ])
        assert rc == 1

    def test_checkpoint_schedule_mismatch_is_runtime_failure(self, tmp_path):
        # a checkpoint trained under another schedule must be rejected
        from scoremix.model import DenoiserConfig, init_net, save_checkpoint
        from scoremix.schedule import build_schedule

        net = init_net(DenoiserConfig(data_dim=2, num_discrete_concepts=2), seed=0)
        ckpt = tmp_path / "ck.json"
        save_checkpoint(net, build_schedule("cosine", 500), str(ckpt))
        rc = main([
            "sample", "--config", cfg_path("conjunction2d.ini"),
            "--out", str(tmp_path / "y.csv"), "--checkpoint", str(ckpt), "--n", "5",
        ])
        assert rc == 2

    def test_outdir_env_redirects_relative_paths(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SCOREMIX_OUTDIR", str(tmp_path / "artifacts"))
        rc = main(["schedule", "dump", "--config", cfg_path("negation2d.ini"), "--out", "sched.csv"])
        assert rc == 0
        assert (tmp_path / "artifacts" / "sched.csv").exists()


class TestProvenanceRegeneration:
    def test_sample_artifact_regenerates_byte_identical(self, tmp_path):
        first = tmp_path / "a.csv"
        rc = main([
            "sample", "--config", cfg_path("conjunction2d.ini"),
            "--out", str(first), "--n", "200", "--seed", "3",
        ])
        assert rc == 0
        second = tmp_path / "b.csv"
        rc = regenerate(str(first) + ".provenance.json", str(second))
        assert rc == 0
        assert first.read_bytes() == second.read_bytes()

    def test_dataset_artifact_regenerates_byte_identical(self, tmp_path):
        first = tmp_path / "d1.csv"
        rc = main(["data", "gen", "--config", cfg_path("conjunction2d.ini"), "--out", str(first)])
        assert rc == 0
        second = tmp_path / "d2.csv"
        rc = regenerate(str(first) + ".provenance.json", str(second))
        assert rc == 0
        assert first.read_bytes() == second.read_bytes()

    def test_provenance_records_config_hash(self, tmp_path):
        out = tmp_path / "s.csv"
        main(["sample", "--config", cfg_path("negation2d.ini"), "--out", str(out), "--n", "5"])
        prov = json.loads((out.parent / "s.csv.provenance.json").read_text())
        import hashlib

        want = hashlib.sha256(open(cfg_path("negation2d.ini"), "rb").read()).hexdigest()
        assert prov["config_sha256"] == want
