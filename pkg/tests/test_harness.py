import json

import numpy as np
import pytest

from gpmmc import (ConfigError, compare_pdfs, parse_config,
                   read_histogram_csv, run_experiment)
from gpmmc.cli import main as cli_main


def _write_cfg(path, text):
    path.write_text(text)
    return str(path)


GOOD_MMC = """
# a tiny but complete run
model = min_distance
method = mmc
seed = 11
bins = 10
range_lo = -1.0
range_hi = 34.0
iterations = 2
samples_per_iteration = 300
burn_in = 30
proposal_scale = 0.8
"""

GOOD_GPMMC = """
model = min_distance
method = gpmmc
seed = 11
bins = 10
range_lo = -1.0
range_hi = 34.0
iterations = 2
samples_per_iteration = 300
burn_in = 30
proposal_scale = 0.8
gamma = 0.01
beta_max = 0.1
kernel_p = 2
initial_design = 30
"""


class TestParseConfig:
    def test_full_round_trip(self, tmp_path):
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", GOOD_MMC))
        assert cfg.model == "min_distance"
        assert cfg.method == "mmc"
        assert cfg.seed == 11
        assert cfg.bins == 10
        assert (cfg.range_lo, cfg.range_hi) == (-1.0, 34.0)
        assert cfg.iterations == 2
        assert cfg.samples_per_iteration == 300
        assert cfg.burn_in == 30
        assert cfg.proposal_scale == 0.8
        assert cfg.auto_range is False

    def test_vector_scale_and_centers(self, tmp_path):
        text = GOOD_MMC + "proposal_scale = 0.5, 1.5\ncenters = 1,2 ; 3,4\n"
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", text))
        np.testing.assert_array_equal(cfg.proposal_scale, [0.5, 1.5])
        np.testing.assert_array_equal(cfg.model_params["centers"],
                                      [[1.0, 2.0], [3.0, 4.0]])

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown key 'samples'"):
            parse_config(_write_cfg(tmp_path / "a.cfg",
                                    GOOD_MMC + "samples = 3\n"))

    def test_missing_required_key(self, tmp_path):
        text = GOOD_MMC.replace("seed = 11\n", "")
        with pytest.raises(ConfigError, match="seed"):
            parse_config(_write_cfg(tmp_path / "a.cfg", text))

    def test_bad_value(self, tmp_path):
        text = GOOD_MMC.replace("bins = 10", "bins = ten")
        with pytest.raises(ConfigError, match="bad value for 'bins'"):
            parse_config(_write_cfg(tmp_path / "a.cfg", text))

    def test_missing_range(self, tmp_path):
        text = GOOD_MMC.replace("range_lo = -1.0\n", "")
        text = text.replace("range_hi = 34.0\n", "")
        with pytest.raises(ConfigError, match="range"):
            parse_config(_write_cfg(tmp_path / "a.cfg", text))

    def test_auto_range(self, tmp_path):
        text = GOOD_MMC.replace("range_lo = -1.0\nrange_hi = 34.0\n",
                                "range = auto\n")
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", text))
        assert cfg.auto_range is True

    def test_bad_range_keyword(self, tmp_path):
        with pytest.raises(ConfigError, match="range"):
            parse_config(_write_cfg(tmp_path / "a.cfg",
                                    GOOD_MMC + "range = guess\n"))

    def test_key_for_wrong_model(self, tmp_path):
        with pytest.raises(ConfigError, match="does not apply"):
            parse_config(_write_cfg(tmp_path / "a.cfg",
                                    GOOD_MMC + "e_mean = 2.9e6\n"))

    def test_unknown_method(self, tmp_path):
        text = GOOD_MMC.replace("method = mmc", "method = abc")
        with pytest.raises(ConfigError, match="unknown method"):
            parse_config(_write_cfg(tmp_path / "a.cfg", text))

    def test_overrides_win(self, tmp_path):
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", GOOD_MMC),
                           overrides={"seed": 99, "out": "somewhere"})
        assert cfg.seed == 99
        assert cfg.out == "somewhere"

    def test_malformed_line(self, tmp_path):
        with pytest.raises(ConfigError, match="expected key = value"):
            parse_config(_write_cfg(tmp_path / "a.cfg", GOOD_MMC + "oops\n"))


class TestRunExperimentMc:
    def test_outputs_and_accounting(self, tmp_path):
        text = GOOD_MMC.replace("method = mmc", "method = mc")
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", text))
        summary = run_experiment(cfg, tmp_path / "out")
        assert (tmp_path / "out" / "histogram.csv").exists()
        assert (tmp_path / "out" / "summary.json").exists()
        assert summary["true_evals"] == 600
        assert summary["eval_breakdown"] == {"pilot": 0, "samples": 600}
        assert summary["surrogate_evals"] == 0
        assert 0.9 <= summary["in_range_fraction"] <= 1.0
        data = read_histogram_csv(tmp_path / "out" / "histogram.csv")
        assert data["counts"][-1].sum() == summary["true_evals"] * \
            summary["in_range_fraction"]

    def test_auto_range_runs_pilot(self, tmp_path):
        text = GOOD_MMC.replace("method = mmc", "method = mc")
        text = text.replace("range_lo = -1.0\nrange_hi = 34.0\n",
                            "range = auto\n")
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", text))
        summary = run_experiment(cfg, tmp_path / "out")
        assert summary["eval_breakdown"]["pilot"] == 1000
        assert summary["true_evals"] == 1600
        assert summary["binning"]["lo"] < summary["binning"]["hi"]

    def test_output_dir_required(self, tmp_path):
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", GOOD_MMC))
        with pytest.raises(ConfigError, match="output directory"):
            run_experiment(cfg)


class TestRunExperimentMmc:
    def test_outputs_and_accounting(self, tmp_path):
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", GOOD_MMC))
        summary = run_experiment(cfg, tmp_path / "out")
        bd = summary["eval_breakdown"]
        assert summary["true_evals"] == (bd["pilot"] + bd["initial_design"]
                                         + bd["start_draws"] + bd["chain"])
        assert bd["chain"] == 2 * (300 + 30)
        assert summary["burn_in"] == 30
        assert len(summary["flatness"]) == 2
        assert len(summary["acceptance"]) == 2
        assert all(0.0 < a < 1.0 for a in summary["acceptance"])
        data = read_histogram_csv(tmp_path / "out" / "histogram.csv")
        assert data["iterations"] == [0, 1]
        assert all(c.sum() == 300 for c in data["counts"])
        # final density integrates to one
        binning = data["binning"]
        assert data["final_pdf"].sum() * binning.delta == pytest.approx(1.0)

    def test_default_burn_in(self, tmp_path):
        text = GOOD_MMC.replace("burn_in = 30\n", "")
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", text))
        summary = run_experiment(cfg, tmp_path / "out")
        assert summary["burn_in"] == 30  # a tenth of 300

    def test_step_log(self, tmp_path):
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", GOOD_MMC),
                           overrides={"log_steps": True})
        run_experiment(cfg, tmp_path / "out")
        lines = (tmp_path / "out" / "steps.csv").read_text().splitlines()
        assert lines[0] == "step,used_surrogate,beta,refined,accepted"
        assert len(lines) - 1 == 2 * (300 + 30)


class TestRunExperimentGpmmc:
    def test_outputs_and_accounting(self, tmp_path):
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", GOOD_GPMMC))
        summary = run_experiment(cfg, tmp_path / "out")
        bd = summary["eval_breakdown"]
        assert bd["initial_design"] == 30
        refines = (bd["refine_random"] + bd["refine_beta"]
                   + bd["refine_fallback"])
        assert summary["true_evals"] == (bd["pilot"] + bd["initial_design"]
                                         + bd["start_draws"] + refines)
        # the surrogate answered most steps
        assert summary["true_evals"] < 2 * (300 + 30) * 0.8 + 30
        assert summary["surrogate_evals"] > 0
        assert (tmp_path / "out" / "store.csv").exists()
        assert summary["store_size"] >= 30

    def test_store_matches_refinements(self, tmp_path):
        from gpmmc import EvaluationStore
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", GOOD_GPMMC))
        summary = run_experiment(cfg, tmp_path / "out")
        store = EvaluationStore.load_csv(tmp_path / "out" / "store.csv")
        assert store.size == summary["store_size"]

    def test_small_design_rejected(self, tmp_path):
        text = GOOD_GPMMC.replace("initial_design = 30",
                                  "initial_design = 1")
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", text))
        with pytest.raises(ConfigError, match="initial_design"):
            run_experiment(cfg, tmp_path / "out")

    def test_vector_scale_length_checked(self, tmp_path):
        text = GOOD_GPMMC + "proposal_scale = 0.5, 0.5, 0.5\n"
        cfg = parse_config(_write_cfg(tmp_path / "a.cfg", text))
        with pytest.raises(ConfigError, match="proposal_scale"):
            run_experiment(cfg, tmp_path / "out")


class TestReproducibility:
    @pytest.mark.parametrize("text", [GOOD_MMC, GOOD_GPMMC],
                             ids=["mmc", "gpmmc"])
    def test_runs_are_byte_identical(self, tmp_path, text):
        cfg_path = _write_cfg(tmp_path / "a.cfg", text)
        for d in ("one", "two"):
            cfg = parse_config(cfg_path)
            run_experiment(cfg, tmp_path / d)
        h1 = (tmp_path / "one" / "histogram.csv").read_bytes()
        h2 = (tmp_path / "two" / "histogram.csv").read_bytes()
        assert h1 == h2
        s1 = json.loads((tmp_path / "one" / "summary.json").read_text())
        s2 = json.loads((tmp_path / "two" / "summary.json").read_text())
        s1.pop("runtime_seconds")
        s2.pop("runtime_seconds")
        assert s1 == s2
        if "gpmmc" in text:
            assert (tmp_path / "one" / "store.csv").read_bytes() == \
                (tmp_path / "two" / "store.csv").read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        cfg_path = _write_cfg(tmp_path / "a.cfg", GOOD_MMC)
        run_experiment(parse_config(cfg_path), tmp_path / "one")
        run_experiment(parse_config(cfg_path, overrides={"seed": 12}),
                       tmp_path / "two")
        assert (tmp_path / "one" / "histogram.csv").read_bytes() != \
            (tmp_path / "two" / "histogram.csv").read_bytes()


class TestCompare:
    def _run(self, tmp_path, text, name, seed=None):
        overrides = {} if seed is None else {"seed": seed}
        cfg = parse_config(_write_cfg(tmp_path / f"{name}.cfg", text),
                           overrides)
        run_experiment(cfg, tmp_path / name)
        return tmp_path / name / "histogram.csv"

    def test_self_comparison_is_exact(self, tmp_path):
        h = self._run(tmp_path, GOOD_MMC, "base")
        report = compare_pdfs(h, h)
        assert report.max_rel_err == 0.0
        assert report.avg_rel_err == 0.0
        assert report.compared_bins > 0
        assert report.baseline_moments == report.candidate_moments

    def test_two_seeds_disagree_mildly(self, tmp_path):
        a = self._run(tmp_path, GOOD_MMC, "a")
        b = self._run(tmp_path, GOOD_MMC, "b", seed=12)
        report = compare_pdfs(a, b)
        assert report.max_rel_err > 0.0

    def test_mismatched_binning_rejected(self, tmp_path):
        a = self._run(tmp_path, GOOD_MMC, "a")
        text = GOOD_MMC.replace("bins = 10", "bins = 12")
        b = self._run(tmp_path, text, "b")
        with pytest.raises(ConfigError, match="binnings differ"):
            compare_pdfs(a, b)


class TestCli:
    def test_run_and_moments_and_compare(self, tmp_path, capsys):
        cfg_path = _write_cfg(tmp_path / "a.cfg", GOOD_MMC)
        out = tmp_path / "out"
        assert cli_main(["run", cfg_path, "--out", str(out)]) == 0
        captured = capsys.readouterr().out
        assert "true evaluations" in captured
        assert "moments" in captured

        hist = str(out / "histogram.csv")
        assert cli_main(["moments", hist]) == 0
        assert "mean" in capsys.readouterr().out

        report_path = tmp_path / "report.json"
        assert cli_main(["compare", hist, hist,
                         "--json", str(report_path)]) == 0
        assert "max relative err" in capsys.readouterr().out
        report = json.loads(report_path.read_text())
        assert report["max_rel_err"] == 0.0

    def test_missing_config_is_reported(self, tmp_path, capsys):
        assert cli_main(["run", str(tmp_path / "nope.cfg")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_config_is_reported(self, tmp_path, capsys):
        cfg_path = _write_cfg(tmp_path / "a.cfg", GOOD_MMC + "bogus = 1\n")
        assert cli_main(["run", cfg_path]) == 2
        assert "unknown key" in capsys.readouterr().err

    def test_seed_override(self, tmp_path):
        cfg_path = _write_cfg(tmp_path / "a.cfg", GOOD_MMC)
        assert cli_main(["run", cfg_path, "--seed", "12",
                         "--out", str(tmp_path / "out")]) == 0
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["seed"] == 12
