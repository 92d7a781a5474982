"""Config file parsing, canonical serialization, and the CLI surface."""

import json

import numpy as np
import pytest

from bitmc.cli import main
from bitmc.config import ExperimentConfig, load_config, parse_flat, parse_grids
from bitmc.harness import CSV_COLUMNS
from bitmc.model import read_matrix, read_observations

CONFIG_TEXT = """\
# tiny experiment
model.d1 = 3
model.d2 = 3
model.rank = 1
model.n = 150
model.alpha = 0.9
model.entry_bound = 1.0
prior.family = student
prior.tau = 1.0
pi.kind = uniform
mala.step_size = 0.1
mala.n_steps = 250
mala.burn_in = 50
mala.thin = 2
run.replications = 2
run.master_seed = 11
sweep.n_grid = 40,80,160,320
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG_TEXT)
    return path


class TestParseFlat:
    def test_basic_and_comments(self):
        mapping = parse_flat("a.b = 1  # trailing\n\n# full line\nc.d = x\n")
        assert mapping == {"a.b": "1", "c.d": "x"}

    def test_rejects_missing_equals(self):
        with pytest.raises(ValueError, match="key = value"):
            parse_flat("model.d1 3\n")

    def test_rejects_duplicate_keys(self):
        with pytest.raises(ValueError, match="duplicate"):
            parse_flat("a.b = 1\na.b = 2\n")

    def test_rejects_sectionless_keys(self):
        with pytest.raises(ValueError, match="section"):
            parse_flat("d1 = 3\n")


class TestExperimentConfig:
    def test_round_trip_through_text(self):
        cfg = ExperimentConfig.from_text(CONFIG_TEXT)
        again = ExperimentConfig.from_text(cfg.to_text())
        assert cfg == again

    def test_digest_stable_and_sensitive(self):
        cfg = ExperimentConfig.from_text(CONFIG_TEXT)
        assert cfg.digest() == ExperimentConfig.from_text(CONFIG_TEXT).digest()
        assert cfg.digest() != cfg.with_overrides(n=151).digest()

    def test_auto_resolutions(self):
        cfg = ExperimentConfig(d1=4, d2=6, rank=1, n=500)
        assert cfg.resolved_tau() == pytest.approx(1 / 500)
        assert cfg.resolved_n_factors() == 4
        from bitmc.bounds import default_gamma_scale

        assert cfg.resolved_prior_b() == pytest.approx(default_gamma_scale(500, 4, 6, 4, 1.0))

    def test_n_factors_capped_at_ten(self):
        cfg = ExperimentConfig(d1=30, d2=40, rank=1, n=100)
        assert cfg.resolved_n_factors() == 10

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            ExperimentConfig.from_text("model.d1 = 2\nmodel.oops = 3\n")

    def test_sweep_keys_ignored_by_config(self):
        cfg = ExperimentConfig.from_text("model.d1 = 2\nsweep.n_grid = 1,2\n")
        assert cfg.d1 == 2

    def test_grids(self):
        grids = parse_grids(parse_flat(CONFIG_TEXT))
        assert grids["n_grid"] == (40, 80, 160, 320)
        assert grids["r_grid"] == ()

    def test_validation(self):
        with pytest.raises(ValueError, match="rank"):
            ExperimentConfig(d1=2, d2=2, rank=3, n=10)
        with pytest.raises(ValueError, match="alpha"):
            ExperimentConfig(d1=2, d2=2, rank=1, n=10, alpha=1.0)
        with pytest.raises(ValueError, match="prior_family"):
            ExperimentConfig(d1=2, d2=2, rank=1, n=10, prior_family="horseshoe")


class TestCliSimulate:
    def test_writes_all_files_deterministically(self, config_path, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert main(["simulate", "--config", str(config_path), "--out", str(out1)]) == 0
        assert main(["simulate", "--config", str(config_path), "--out", str(out2)]) == 0
        for name in ("truth.csv", "pi.csv", "data.csv", "meta.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        obs = read_observations(out1 / "data.csv")
        assert obs.n == 150
        truth = read_matrix(out1 / "truth.csv")
        assert truth.shape == (3, 3)
        meta = json.loads((out1 / "meta.json").read_text())
        assert meta["n"] == 150 and meta["seed"] == 11

    def test_seed_flag_overrides(self, config_path, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", str(config_path), "--out", str(out1), "--seed", "1"])
        main(["simulate", "--config", str(config_path), "--out", str(out2), "--seed", "2"])
        assert (out1 / "data.csv").read_bytes() != (out2 / "data.csv").read_bytes()


class TestCliFit:
    def test_fit_emits_mean_and_chain(self, config_path, tmp_path):
        sim = tmp_path / "sim"
        main(["simulate", "--config", str(config_path), "--out", str(sim)])
        out = tmp_path / "fit"
        code = main(
            ["fit", "--config", str(config_path), "--data", str(sim / "data.csv"), "--out", str(out)]
        )
        assert code == 0
        mean = read_matrix(out / "mean.csv")
        assert mean.shape == (3, 3)
        diag = json.loads((out / "chain.json").read_text())
        assert 0.0 <= diag["accept_rate"] <= 1.0
        assert diag["seed"] == 11
        fit_meta = json.loads((out / "fit.json").read_text())
        assert fit_meta["n_samples_used"] > 0


class TestCliEvaluate:
    def test_self_divergences_zero(self, tmp_path, capsys):
        from bitmc.model import write_matrix

        m = np.array([[0.5, -1.0], [2.0, 0.0]])
        path = tmp_path / "m.csv"
        write_matrix(m, path)
        assert main(["evaluate", "--matrix-a", str(path), "--matrix-b", str(path)]) == 0
        out = capsys.readouterr().out.splitlines()
        header = out[0].split(",")
        values = dict(zip(header, (float(v) for v in out[1].split(","))))
        assert values["kl"] == 0.0 and values["frobenius"] == 0.0
        assert values["renyi_alpha"] == 0.5

    def test_writes_file_with_pi(self, tmp_path):
        from bitmc.model import SamplingDistribution, write_matrix, write_sampling_distribution

        a = np.array([[0.5, -1.0]])
        b = np.array([[0.0, 0.0]])
        write_matrix(a, tmp_path / "a.csv")
        write_matrix(b, tmp_path / "b.csv")
        write_sampling_distribution(SamplingDistribution.uniform(1, 2), tmp_path / "pi.csv")
        code = main(
            [
                "evaluate", "--matrix-a", str(tmp_path / "a.csv"), "--matrix-b",
                str(tmp_path / "b.csv"), "--pi", str(tmp_path / "pi.csv"), "--alpha", "0.75",
                "--out", str(tmp_path / "ev"),
            ]
        )
        assert code == 0
        lines = (tmp_path / "ev" / "evaluate.csv").read_text().splitlines()
        assert lines[0].startswith("kl,hellinger_sq,renyi")
        assert float(dict(zip(lines[0].split(","), lines[1].split(",")))["kl"]) > 0


class TestCliSweepAndReport:
    def test_sweep_then_report(self, config_path, tmp_path):
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(config_path), "--out", str(out)]) == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + 4 * 2  # 4 grid points x 2 replications
        summary = json.loads((out / "summary.json").read_text())
        assert "frob_vs_n" in summary["slopes"]

        rep = tmp_path / "rep"
        assert main(["report", str(out / "report.csv"), "--out", str(rep)]) == 0
        merged = (rep / "merged.csv").read_text().splitlines()
        assert merged[0] == ",".join(CSV_COLUMNS)
        assert len(merged) == len(lines)
        agg = json.loads((rep / "summary.json").read_text())
        (group,) = agg["groups"].values()
        assert group["fit"]["n_points"] == 4

    def test_sweep_deterministic_bytes(self, config_path, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        main(["sweep", "--config", str(config_path), "--out", str(out1)])
        main(["sweep", "--config", str(config_path), "--out", str(out2)])
        assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()
        assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()

    def test_sweep_requires_grid(self, tmp_path):
        path = tmp_path / "nogrid.cfg"
        path.write_text("model.d1 = 2\nmodel.d2 = 2\nmodel.rank = 1\nmodel.n = 50\n")
        with pytest.raises(SystemExit, match="n_grid"):
            main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")])


class TestLoadConfig:
    def test_load_returns_config_and_grids(self, config_path):
        cfg, grids = load_config(config_path)
        assert cfg.n == 150
        assert grids["n_grid"] == (40, 80, 160, 320)
