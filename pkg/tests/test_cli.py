import csv
import json

import pytest

from gibbs_tumor.cli import DEFAULTS, ConfigError, load_config, main, resolve_config

QUICK_VERIFY = """
[verify]
bounds_t_end = 2.0
bounds_families = ["quadratic"]
random_dichotomy = 2
scaling = false
convergence = false
gamma_n = 4
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def run(tmp_path, *argv, config=None):
    out = tmp_path / "out"
    args = list(argv) + ["--out", str(out)]
    if config is not None:
        args += ["--config", config]
    return main(args), out


class TestConfig:
    def test_defaults_resolve(self):
        assert resolve_config({}) == DEFAULTS

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            resolve_config({"params": {"sigma": 1.0}})

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown section"):
            resolve_config({"plot": {}})

    def test_invalid_physics(self):
        with pytest.raises(ConfigError):
            resolve_config({"params": {"gamma": -1.0}})
        with pytest.raises(ConfigError):
            resolve_config({"solver": {"n_grid": 200}})
        with pytest.raises(ConfigError):
            resolve_config({"smoothing": {"kind": "tanh"}})
        with pytest.raises(ConfigError):
            resolve_config({"initial": {"family": "gaussian"}})

    def test_integers_promoted(self):
        cfg = resolve_config({"params": {"sigma_bar": 2}})
        assert cfg["params"]["sigma_bar"] == 2.0
        assert isinstance(cfg["params"]["sigma_bar"], float)

    def test_toml_and_json_agree(self, tmp_path):
        a = load_config(write(tmp_path, "a.toml", "[params]\nsigma_tilde = 0.25\n"))
        b = load_config(write(tmp_path, "b.json", json.dumps({"params": {"sigma_tilde": 0.25}})))
        assert a == b


class TestStationary:
    def test_two_roots(self, tmp_path, capsys):
        code, out = run(tmp_path, "stationary")
        assert code == 0
        text = capsys.readouterr().out
        assert "Unstable" in text and "Stable" in text
        land = json.loads((out / "landscape.json").read_text())
        assert land["n_roots"] == 2
        assert land["config"] == DEFAULTS

    def test_no_roots(self, tmp_path, capsys):
        code, _ = run(tmp_path, "stationary",
                      config=write(tmp_path, "c.toml", "[params]\nsigma_tilde = 0.9\n"))
        assert code == 0
        assert "no stationary solutions" in capsys.readouterr().out

    def test_user_units(self, tmp_path):
        cfg = write(tmp_path, "c.toml", "[params]\nlambda = 4.0\ngamma = 0.25\n")
        code, out = run(tmp_path, "stationary", config=cfg)
        land = json.loads((out / "landscape.json").read_text())
        assert code == 0
        assert land["radii_user_units"]["roots"][0] == pytest.approx(land["roots"][0]["radius"] / 2)

    def test_malformed(self, tmp_path, capsys):
        code, _ = run(tmp_path, "stationary", config=write(tmp_path, "c.toml", "[params\n"))
        assert code == 2
        assert "cannot parse" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        code, _ = run(tmp_path, "stationary", config=str(tmp_path / "nope.toml"))
        assert code == 2


class TestBifurcation:
    def test_default_scan(self, tmp_path):
        code, out = run(tmp_path, "bifurcation")
        assert code == 0
        rows = list(csv.DictReader((out / "scan.csv").open()))
        assert len(rows) == 16
        theta = [float(r["theta_star"]) for r in rows]
        assert all(a > b for a, b in zip(theta, theta[1:]))
        assert json.loads((out / "report.json").read_text())["ok"] is True

    def test_single_sample(self, tmp_path):
        code, out = run(tmp_path, "bifurcation",
                        config=write(tmp_path, "c.toml", "[bifurcation]\nn_samples = 1\n"))
        assert code == 0
        assert len((out / "scan.csv").read_text().splitlines()) == 2

    def test_nonpositive_range(self, tmp_path):
        code, _ = run(tmp_path, "bifurcation",
                      config=write(tmp_path, "c.toml", "[bifurcation]\nlo = 0.0\n"))
        assert code == 2


class TestSimulate:
    def test_quasi_dispatch(self, tmp_path):
        code, out = run(tmp_path, "simulate")
        summary = json.loads((out / "summary.json").read_text())
        assert code == 0
        assert summary["outcome"] == "ConvergesTo"
        assert (out / "trajectory.csv").read_text().startswith("t,R,dR_dt\n")
        assert summary["config"]["params"]["c"] == 0.0

    def test_small_c_converges(self, tmp_path):
        cfg = write(tmp_path, "c.toml", "[params]\nc = 1e-3\n[initial]\nR0 = 1.3\n")
        code, out = run(tmp_path, "simulate", config=cfg)
        summary = json.loads((out / "summary.json").read_text())
        assert code == 0
        assert summary["outcome"] == "ConvergesTo"
        assert abs(summary["final_R"] - summary["target"]) < 1e-3
        head = (out / "trajectory.csv").read_text().splitlines()[0]
        assert head == "t,R,dR_dt,sup_dev_from_v,dt_used,picard_iters"

    def test_extinction_exit_zero(self, tmp_path):
        cfg = write(tmp_path, "c.toml", "[params]\nc = 0.1\nsigma_tilde = 1.2\n")
        code, out = run(tmp_path, "simulate", config=cfg)
        assert code == 0
        assert json.loads((out / "summary.json").read_text())["outcome"] == "ExtinctionToZero"

    def test_snapshots(self, tmp_path):
        cfg = write(tmp_path, "c.toml",
                    "[params]\nc = 0.1\n[run]\nt_end = 1.0\nsnapshot_times = [0.5, 1.0]\n")
        code, out = run(tmp_path, "simulate", config=cfg)
        assert code == 0
        assert (out / "profile_t0.5.csv").read_text().startswith("y,u\n")
        assert (out / "profile_t1.0.csv").exists()

    def test_integration_failure(self, tmp_path):
        cfg = write(tmp_path, "c.toml", "[params]\nc = 0.1\n[solver]\npicard_max = 1\n"
                    "picard_tol = 0.0\ndt_init = 0.01\n[run]\nt_end = 1.0\n")
        code, out = run(tmp_path, "simulate", config=cfg)
        assert code == 1
        assert "failure" in json.loads((out / "summary.json").read_text())

    def test_round_trip_and_determinism(self, tmp_path):
        cfg = write(tmp_path, "c.toml", "[params]\nc = 0.05\n[run]\nt_end = 3.0\n")
        main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["simulate", "--config", str(tmp_path / "a" / "summary.json"),
              "--out", str(tmp_path / "b")])
        for name in ("summary.json", "trajectory.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestVerify:
    def test_quick_suite(self, tmp_path):
        code, out = run(tmp_path, "verify", config=write(tmp_path, "v.toml", QUICK_VERIFY))
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["ok"] and report["n_fail"] == 0
        assert report["scenario"]["config"]["verify"]["random_dichotomy"] == 2
        assert (out / "report.txt").exists()

    def test_failure_sets_exit_code(self, tmp_path):
        # far too short a horizon for the predicted convergence: the matrix must Fail
        cfg = QUICK_VERIFY + "cases = [{R0 = 20.0, sigma_tilde = 0.3, c = 0.0}]\n[run]\nt_end = 1.0\n"
        code, out = run(tmp_path, "verify", config=write(tmp_path, "v.toml", cfg))
        assert code == 1
        assert json.loads((out / "report.json").read_text())["n_fail"] >= 1

    def test_starvation_block(self, tmp_path):
        cfg = QUICK_VERIFY.replace("[verify]", "[params]\nsigma_tilde = 1.2\n[verify]")
        code, out = run(tmp_path, "verify", config=write(tmp_path, "v.toml", cfg))
        report = json.loads((out / "report.json").read_text())
        starve = [c for c in report["checks"] if "sigma_tilde=1.2," in c["name"]]
        assert {c["name"].split("c=")[1] for c in starve} == {"0.001]", "0.1]", "1]", "10]"}
        assert all(c["status"] == "Pass" for c in starve)
        assert code == 0

    def test_needs_scaled_params(self, tmp_path):
        code, _ = run(tmp_path, "verify",
                      config=write(tmp_path, "v.toml", "[params]\nsigma_bar = 2.0\n"))
        assert code == 2

    def test_bad_case(self, tmp_path):
        cfg = "[verify]\ncases = [{R0 = 1.0}]\n"
        code, _ = run(tmp_path, "verify", config=write(tmp_path, "v.toml", cfg))
        assert code == 2

    def test_coarse_grid_exit_matches_report(self, tmp_path):
        cfg = ("[solver]\nn_grid = 17\n[verify]\nconvergence_n_base = 17\nbounds = false\n"
               "matrix = false\nscaling = false\ngamma_scan = false\n")
        code, out = run(tmp_path, "verify", config=write(tmp_path, "v.toml", cfg))
        report = json.loads((out / "report.json").read_text())
        assert code == (1 if report["n_fail"] else 0)
        assert {c["name"] for c in report["checks"]} >= {"spatial_convergence"}
