import json
from pathlib import Path

import numpy as np
import pytest

import radpair.cli as cli
from radpair.cli import CSV_HEADER, main

DATA = Path(__file__).parent / "data"

BENCHMARK = """
[reaction]
k_s = 1.0
k_t = 0.0

[initial_state]
name = "coherent_plus"

[integrator]
dt = 0.005
t_max = 20.0
theory = "kominis"
"""

INCOHERENT = """
[reaction]
k_s = 1.0
k_t = 0.0

[initial_state]
name = "mixed_ST"

[integrator]
dt = 0.005
t_max = 10.0
"""


def write_config(tmp_path, text, **outputs):
    lines = [text, "[outputs]"]
    for key, value in outputs.items():
        if isinstance(value, int):
            lines.append(f"{key} = {value}")
        else:
            lines.append(f'{key} = "{value}"')
    path = tmp_path / "run.toml"
    path.write_text("\n".join(lines))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        rows = np.array([[float(x) for x in line.split(",")] for line in fh])
    return header, rows


class TestSimulate:
    def test_golden_benchmark_csv(self, tmp_path):
        cfg = write_config(tmp_path, BENCHMARK, csv="out.csv", stride=100)
        assert main(["simulate", cfg, "--out-dir", str(tmp_path)]) == 0
        header, rows = read_csv(tmp_path / "out.csv")
        golden_header, golden = read_csv(DATA / "benchmark_kominis_golden.csv")
        assert header == golden_header == CSV_HEADER
        assert rows.shape == golden.shape
        np.testing.assert_allclose(rows, golden, atol=1e-12)

    def test_zero_horizon_single_row(self, tmp_path):
        text = BENCHMARK.replace("t_max = 20.0", "t_max = 0.0")
        cfg = write_config(tmp_path, text, csv="short.csv")
        assert main(["simulate", cfg, "--out-dir", str(tmp_path)]) == 0
        _, rows = read_csv(tmp_path / "short.csv")
        assert rows.shape[0] == 1
        assert rows[0, 1] == pytest.approx(1.0)

    def test_json_summary(self, tmp_path):
        cfg = write_config(tmp_path, BENCHMARK, json="out.json")
        assert main(["simulate", cfg, "--out-dir", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "out.json").read_text())
        assert payload["theory"] == "kominis"
        assert payload["y_s"] == pytest.approx(0.7220416, abs=1e-6)
        assert payload["config"]["integrator"]["dt"] == 0.005

    def test_theory_override(self, tmp_path):
        cfg = write_config(tmp_path, BENCHMARK, json="out.json")
        assert main(["simulate", cfg, "--theory", "traditional", "--out-dir", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "out.json").read_text())
        assert payload["theory"] == "traditional"
        assert payload["y_s"] == pytest.approx(0.5, abs=1e-6)

    def test_plot_emission(self, tmp_path):
        text = BENCHMARK.replace("t_max = 20.0", "t_max = 2.0")
        cfg = write_config(tmp_path, text, plot="fig.svg")
        assert main(["simulate", cfg, "--out-dir", str(tmp_path)]) == 0
        data = (tmp_path / "fig.svg").read_bytes()
        assert data.startswith(b"<?xml")


class TestCompare:
    def test_benchmark_yields(self, tmp_path):
        cfg = write_config(tmp_path, BENCHMARK, json="cmp.json", csv="cmp.csv")
        assert main(["compare", cfg, "--out-dir", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "cmp.json").read_text())
        assert payload["kominis"]["y_s"] == pytest.approx(0.7220416, abs=1e-6)
        assert payload["traditional"]["y_s"] == pytest.approx(0.5, abs=1e-6)
        header = (tmp_path / "cmp.csv").read_text().splitlines()[0]
        assert header.startswith("t,trace_kominis,trace_traditional,trace_diff")

    def test_incoherent_initial_state_agrees(self, tmp_path):
        cfg = write_config(tmp_path, INCOHERENT, json="cmp.json")
        assert main(["compare", cfg, "--out-dir", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "cmp.json").read_text())
        assert max(payload["max_discrepancy"].values()) < 1e-8


class TestTrajectories:
    TRAJ = BENCHMARK + """
[trajectories]
enabled = true
n = 5000
seed = 11
dt = 0.001
"""

    def test_repeat_runs_identical(self, tmp_path):
        cfg = write_config(tmp_path, self.TRAJ, json="traj.json")
        assert main(["trajectories", cfg, "--out-dir", str(tmp_path)]) == 0
        first = (tmp_path / "traj.json").read_bytes()
        assert main(["trajectories", cfg, "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "traj.json").read_bytes() == first

    def test_seed_override_echoed(self, tmp_path):
        cfg = write_config(tmp_path, self.TRAJ, json="traj.json")
        assert main(["trajectories", cfg, "--seed", "99", "--out-dir", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "traj.json").read_text())
        assert payload["report"]["seed"] == 99
        assert payload["config"]["trajectories"]["seed"] == 99

    def test_counts_partition(self, tmp_path):
        cfg = write_config(tmp_path, self.TRAJ, json="traj.json")
        assert main(["trajectories", cfg, "--out-dir", str(tmp_path)]) == 0
        counts = json.loads((tmp_path / "traj.json").read_text())["report"]["counts"]
        assert sum(counts.values()) == 5000

    def test_simulate_embeds_report_when_enabled(self, tmp_path):
        cfg = write_config(tmp_path, self.TRAJ, json="sim.json")
        assert main(["simulate", cfg, "--out-dir", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "sim.json").read_text())
        assert payload["trajectories"]["seed"] == 11
        assert abs(payload["trajectories"]["y_s"] - 0.75) < 0.02

    def test_mean_state_check(self, tmp_path):
        text = self.TRAJ.replace(
            "dt = 0.001",
            "dt = 0.002\nrecord_mean_state = true\nmean_state_times = [0.5, 1.0]",
        ).replace('theory = "kominis"', 'theory = "nonreacting"')
        cfg = write_config(tmp_path, text, json="mean.json")
        assert main(["trajectories", cfg, "--out-dir", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "mean.json").read_text())
        assert payload["mean_state_check"]["within_3se"] is True


class TestCoherenceCommand:
    MIXING = """
[reaction]
k_s = 1.0
k_t = 0.0

[initial_state]
[[initial_state.mixture]]
weight = 0.5
name = "singlet"
[[initial_state.mixture]]
weight = 0.5
name = "coherent_plus"
"""

    def test_mixing_example_prints_third(self, tmp_path, capsys):
        cfg = write_config(tmp_path, self.MIXING)
        assert main(["coherence", cfg]) == 0
        out = capsys.readouterr().out
        assert "p_coh = 0.333333333333" in out

    def test_averaged_with_exchange(self, tmp_path, capsys):
        text = """
[hamiltonian]
exchange_j = 50.0

[reaction]
k_s = 1.0
k_t = 0.0

[initial_state]
name = "coherent_plus"

[integrator]
dt = 0.0005
"""
        cfg = write_config(tmp_path, text)
        assert main(["coherence", cfg, "--averaged"]) == 0
        out = capsys.readouterr().out
        assert "p_coh = 1.000000000000" in out
        averaged = float(out.split("p_coh_averaged = ")[1].split()[0])
        assert averaged <= 0.05


class TestExitStatuses:
    def test_config_error_is_one(self, tmp_path, capsys):
        bad = write_config(tmp_path, BENCHMARK.replace('"kominis"', '"jones_hore"'))
        assert main(["simulate", bad]) == 1
        err = capsys.readouterr().err
        assert "jones_hore" in err and "traditional" in err

    def test_missing_file_is_one(self):
        assert main(["simulate", "/nonexistent/run.toml"]) == 1

    def test_unknown_subcommand_is_one(self, capsys):
        assert main(["frobnicate", "x.toml"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_runtime_failure_is_two(self, tmp_path, monkeypatch):
        from radpair.errors import InvariantViolation

        cfg = write_config(tmp_path, BENCHMARK)
        def explode(*args, **kwargs):
            raise InvariantViolation("step 3 (t=0.015): synthetic failure")
        monkeypatch.setattr(cli, "integrate", explode)
        assert main(["simulate", cfg]) == 2

    def test_success_is_zero(self, tmp_path):
        cfg = write_config(tmp_path, BENCHMARK.replace("t_max = 20.0", "t_max = 0.5"))
        assert main(["simulate", cfg]) == 0
