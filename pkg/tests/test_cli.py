"""Configuration parsing and the command-line front door."""

import json
import subprocess
import sys
import textwrap

import pytest

from mixsmooth.cli import main
from mixsmooth.config import config_from_dict, parse_config
from mixsmooth.errors import ConfigError

DENSITY = """
[model]
type = "ar1_density"
rho = 0.5

[kernel]
family = "epanechnikov"
order = 2

[experiment]
target = "density"
n_grid = [300, 600]
replications = 2
seed = 4
"""


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


class TestParseConfig:
    def test_minimal_density_config_fills_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path, DENSITY), "rate-check")
        echo = cfg.echo()
        assert echo["bandwidth"] == {"constant": 1.0, "c_lo": 0.5, "c_hi": 2.0, "count": 5}
        assert echo["eval"] == {"radius": 2.0, "points": 41}
        assert echo["experiment"]["trim_tau"] == 1e-3

    def test_nonstationary_rho_names_key(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            parse_config(write(tmp_path, DENSITY.replace("rho = 0.5", "rho = 1.2")), "rate-check")
        assert any(p.startswith("model.rho") and "nonstationary" in p for p in info.value.problems)

    def test_kernel_order_three_unsupported(self, tmp_path):
        with pytest.raises(ConfigError, match="unsupported order 3"):
            parse_config(write(tmp_path, DENSITY.replace("order = 2", "order = 3")), "rate-check")

    def test_every_problem_reported(self, tmp_path):
        text = DENSITY.replace("rho = 0.5", "rho = 1.5").replace("order = 2", "order = 5")
        text = text.replace("replications = 2", "replications = 0\nbogus = 1")
        with pytest.raises(ConfigError) as info:
            parse_config(write(tmp_path, text), "rate-check")
        keys = {p.split(":")[0] for p in info.value.problems}
        assert {"model.rho", "kernel", "experiment.replications", "experiment.bogus"} <= keys

    def test_unknown_section_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="plots: Extra inputs"):
            parse_config(write(tmp_path, DENSITY + "\n[plots]\nstyle = 1\n"), "rate-check")

    def test_missing_required_section(self, tmp_path):
        with pytest.raises(ConfigError, match="experiment: section required"):
            parse_config(write(tmp_path, DENSITY.split("[experiment]")[0]), "rate-check")

    def test_target_model_mismatch(self, tmp_path):
        with pytest.raises(ConfigError, match="model.type"):
            parse_config(write(tmp_path, DENSITY.replace('target = "density"', 'target = "ces"')), "rate-check")

    def test_n_grid_must_increase(self, tmp_path):
        with pytest.raises(ConfigError, match="n_grid"):
            parse_config(write(tmp_path, DENSITY.replace("[300, 600]", "[600, 300]")), "rate-check")

    def test_invalid_toml(self, tmp_path):
        with pytest.raises(ConfigError, match="not valid TOML"):
            parse_config(write(tmp_path, "[model\n"), "rate-check")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(tmp_path / "none.toml")

    def test_inadmissible_polynomial_mixing(self):
        raw = {"kernel": {}, "norm": {"mixing": "polynomial", "b_exp": 1.5}}
        with pytest.raises(ConfigError, match="must exceed"):
            config_from_dict(raw, "theory-check")

    def test_bandwidth_interval_pair(self):
        with pytest.raises(ConfigError, match="together"):
            config_from_dict({"kernel": {}, "bandwidth": {"a_n": 0.1}}, None)


def run_cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "mixsmooth", *args], cwd=cwd, capture_output=True, text=True)


class TestSubcommands:
    def test_validate_kernel_epanechnikov(self, tmp_path):
        cfg = write(tmp_path, '[kernel]\nfamily = "epanechnikov"\n[output]\npath = "k.json"\n')
        assert main(["validate-kernel", "--config", str(cfg), "--output", str(tmp_path / "k.json")]) == 0
        report = json.loads((tmp_path / "k.json").read_text())
        assert report["result"]["passed"] is True
        assert all(c["passed"] for c in report["result"]["checks"])

    def test_validate_kernel_negative_control_exit(self, tmp_path):
        cfg = write(tmp_path, '[kernel]\nfamily = "gaussian"\norder = 4\n[validation]\norder = 6\n')
        assert main(["validate-kernel", "--config", str(cfg), "--output", str(tmp_path / "k.json")]) == 1

    def test_same_output_path_gives_identical_bytes(self, tmp_path):
        cfg = write(tmp_path, DENSITY)
        out = tmp_path / "r.json"
        main(["rate-check", "--config", str(cfg), "--output", str(out)])
        first = out.read_bytes()
        main(["rate-check", "--config", str(cfg), "--output", str(out), "--workers", "2"])
        assert out.read_bytes() == first
        assert "workers=2" in out.with_suffix(".txt").read_text()

    def test_seed_override_recorded(self, tmp_path):
        cfg = write(tmp_path, DENSITY)
        out = tmp_path / "r.json"
        main(["rate-check", "--config", str(cfg), "--output", str(out), "--seed", "99"])
        report = json.loads(out.read_text())
        assert report["overrides"]["seed"] == 99 and report["config"]["experiment"]["seed"] == 99

    def test_ces_with_empty_csv_fails(self, tmp_path):
        (tmp_path / "empty.csv").write_text("")
        cfg = write(tmp_path, f"""
            [data]
            path = "{tmp_path / 'empty.csv'}"
            q = 2
            p = 2
            [kernel]
            family = "epanechnikov"
            [bandwidth]
            a_n = 0.2
            b_n = 0.4
            count = 2
            [eval]
            radius = 1.0
            points = 5
            [output]
            path = "{tmp_path / 'ces.json'}"
            """)
        proc = run_cli(["ces", "--config", str(cfg)], tmp_path)
        assert proc.returncode == 4
        assert "SampleParseError" in proc.stderr
        assert not (tmp_path / "ces.json").exists()

    def test_simulate_then_estimate_and_ces(self, tmp_path):
        sim = write(tmp_path, f"""
            [model]
            type = "gaussian_ces"
            rho = 0.5
            [simulate]
            path = "{tmp_path / 's.csv'}"
            n = 800
            seed = 2
            [output]
            path = "{tmp_path / 'sim.json'}"
            """, "sim.toml")
        assert main(["simulate", "--config", str(sim)]) == 0
        csv_before = (tmp_path / "s.csv").read_bytes()
        common = f"""
            [data]
            path = "{tmp_path / 's.csv'}"
            q = 2
            p = 2
            [kernel]
            family = "epanechnikov"
            [bandwidth]
            a_n = 0.3
            b_n = 0.6
            count = 2
            [eval]
            radius = 1.0
            points = 5
            """
        est = write(tmp_path, common + f"""
            [estimate]
            quantity = "m"
            phi = [{{ kind = "raw", j = 1 }}]
            w_maps = [{{ kind = "single_index", b = [0.5, 0.5] }}]
            [output]
            path = "{tmp_path / 'est.json'}"
            """, "est.toml")
        assert main(["estimate", "--config", str(est)]) == 0
        ces = write(tmp_path, common + f"""
            [index]
            a_angles = [0.0]
            b_vectors = [[0.5, 0.5]]
            p_levels = [0.1]
            [output]
            path = "{tmp_path / 'ces.json'}"
            """, "ces.toml")
        assert main(["ces", "--config", str(ces)]) == 0
        assert (tmp_path / "s.csv").read_bytes() == csv_before
        report = json.loads((tmp_path / "ces.json").read_text())
        assert report["result"]["quantile_violations"] == 0
        assert report["config"]["index"]["p_levels"] == [0.1]

    def test_theory_check(self, tmp_path):
        cfg = write(tmp_path, f'[kernel]\nfamily = "gaussian"\norder = 4\n[output]\npath = "{tmp_path / "t.json"}"\n')
        assert main(["theory-check", "--config", str(cfg)]) == 0
        result = json.loads((tmp_path / "t.json").read_text())["result"]
        assert abs(result["bias"]["slope"] - 4) < 0.2
        assert len(result["norm"]["ratio_values"]) == 5

    def test_config_error_exit_code(self, tmp_path):
        cfg = write(tmp_path, DENSITY.replace("rho = 0.5", "rho = 1.2"))
        proc = run_cli(["rate-check", "--config", str(cfg)], tmp_path)
        assert proc.returncode == 3 and "model.rho" in proc.stderr

    def test_refuses_to_overwrite_inputs(self, tmp_path):
        cfg = write(tmp_path, DENSITY)
        assert main(["rate-check", "--config", str(cfg), "--output", str(cfg)]) == 3
        assert cfg.read_text() == textwrap.dedent(DENSITY)

    def test_bad_workers(self, tmp_path):
        assert main(["rate-check", "--config", str(write(tmp_path, DENSITY)), "--workers", "0"]) == 3
