import csv
import json

import numpy as np
import pytest

from birthdeath.cli import main


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


def bdlp_example_config(out_dir, C=2.0):
    # reference chain: 4 kminus C = m/2, 4 kplus a+ = (C/2) kminus a-
    m = 1.0
    kminus = m / (8.0 * C)
    kplus = C * kminus / 8.0
    return {
        "model": {"name": "bdlp", "m": m, "kappa_minus": kminus, "kappa_plus": kplus,
                  "a_minus": {"shape": "box", "radius": 0.1},
                  "a_plus": {"shape": "box", "radius": 0.1}},
        "space": {"d": 1, "L": 1.0, "M": 64},
        "weights": {"C": C},
        "output": {"directory": str(out_dir)},
    }


def db_config(out_dir, z=0.5, M=32):
    return {
        "model": {"name": "bdlp_modified", "m": 1.0, "kappa_minus": 0.15,
                  "kappa_plus": 0.15 * z, "kappa": z,
                  "a_minus": {"shape": "box", "radius": 0.1},
                  "a_plus": {"shape": "box", "radius": 0.1}},
        "space": {"d": 1, "L": 1.0, "M": M},
        "weights": {"C": 2.5},
        "output": {"directory": str(out_dir)},
    }


def glauber_config(out_dir, z=0.3, s=0.5, M=32):
    return {
        "model": {"name": "glauber", "s": s, "z": z,
                  "phi": {"shape": "box", "height": 0.4, "radius": 0.1}},
        "space": {"d": 1, "L": 1.0, "M": M},
        "weights": {"C": 1.5},
        "output": {"directory": str(out_dir)},
    }


def read_csv(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(c) for c in row] for row in reader]
    return header, rows


class TestCheck:
    def test_reference_parameters_pass(self, tmp_path, capsys):
        cfg = bdlp_example_config(tmp_path / "out")
        cfg["run"] = {"verify_samples": 6, "verify_seed": 1}
        code = main(["--config", write_config(tmp_path / "c.json", cfg), "check"])
        assert code == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["bound_3_2"] is True
        assert report["a1_plus_a2_over_C"] == pytest.approx(1.375, rel=1e-9)
        assert report["verified"]["holds"] is True
        assert (tmp_path / "out" / "manifest.json").exists()

    def test_huge_activity_fails_with_named_inequality(self, tmp_path, capsys):
        cfg = glauber_config(tmp_path / "out", z=50.0, s=0.0)
        code = main(["--config", write_config(tmp_path / "c.json", cfg), "check"])
        assert code == 1
        out = capsys.readouterr().out
        assert "s0smallz" in out or "sn0smallz" in out
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["bound_3_2"] is False
        assert report["inequalities"]["s0smallz"]["holds"] is False

    def test_malformed_config(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["--config", str(path), "check"]) == 2

    def test_unknown_key_rejected(self, tmp_path):
        cfg = bdlp_example_config(tmp_path / "out")
        cfg["space"]["unknown_knob"] = 3
        assert main(["--config", write_config(tmp_path / "c.json", cfg), "check"]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.json"), "check"]) == 2


class TestSimulate:
    def test_outputs_and_reproducibility(self, tmp_path):
        cfg = db_config(tmp_path / "out1", M=16)
        cfg["space"]["L"] = 5.0
        cfg["run"] = {"T": 1.0, "replicas": 4, "seed": 9,
                      "initial": {"type": "poisson", "intensity": 0.5},
                      "snapshot_times": [0.5, 1.0]}
        code = main(["--config", write_config(tmp_path / "c1.json", cfg), "simulate"])
        assert code == 0
        for name in ("k1.csv", "k2.csv", "population.csv", "manifest.json"):
            assert (tmp_path / "out1" / name).exists()

        cfg2 = dict(cfg, output={"directory": str(tmp_path / "out2")})
        code = main(["--config", write_config(tmp_path / "c2.json", cfg2), "simulate"])
        assert code == 0
        for name in ("k1.csv", "k2.csv", "population.csv"):
            assert (tmp_path / "out1" / name).read_bytes() == \
                (tmp_path / "out2" / name).read_bytes()

    def test_zero_replicas_is_config_error(self, tmp_path):
        cfg = db_config(tmp_path / "out", M=16)
        cfg["run"] = {"T": 1.0, "replicas": 0}
        assert main(["--config", write_config(tmp_path / "c.json", cfg), "simulate"]) == 2

    def test_missing_initial_is_config_error(self, tmp_path):
        cfg = db_config(tmp_path / "out", M=16)
        cfg["run"] = {"T": 1.0, "replicas": 2}
        assert main(["--config", write_config(tmp_path / "c.json", cfg), "simulate"]) == 2

    def test_negative_time_is_config_error(self, tmp_path):
        cfg = glauber_config(tmp_path / "out", M=16)
        cfg["run"] = {"T": -1.0, "dt": 0.01, "initial_density": 0.2}
        assert main(["--config", write_config(tmp_path / "c.json", cfg), "vlasov"]) == 2

    def test_seed_flag_overrides(self, tmp_path):
        cfg = db_config(tmp_path / "outA", M=16)
        cfg["space"]["L"] = 5.0
        cfg["run"] = {"T": 0.5, "replicas": 2, "seed": 1,
                      "initial": {"type": "poisson", "intensity": 0.5}}
        p = write_config(tmp_path / "c.json", cfg)
        main(["--config", p, "simulate"])
        cfg_b = dict(cfg, output={"directory": str(tmp_path / "outB")})
        pb = write_config(tmp_path / "cb.json", cfg_b)
        main(["--config", pb, "--seed", "1", "simulate"])
        assert (tmp_path / "outA" / "k1.csv").read_bytes() == \
            (tmp_path / "outB" / "k1.csv").read_bytes()


class TestHierarchy:
    def test_stationary_detailed_balance_emits_constant_density(self, tmp_path):
        z = 0.5
        cfg = db_config(tmp_path / "out", z=z, M=32)
        cfg["run"] = {"tol": 1e-10}
        code = main(["--config", write_config(tmp_path / "c.json", cfg),
                     "hierarchy", "stationary"])
        assert code == 0
        header, rows = read_csv(tmp_path / "out" / "k1.csv")
        vals = np.array([r[-1] for r in rows])
        assert np.max(np.abs(vals - z)) < 1e-8
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["fixed_point_residual"] < 1e-9
        assert 0 <= manifest["contraction_q"] < 1

    def test_stationary_refusal_exit_code(self, tmp_path):
        cfg = db_config(tmp_path / "out", M=16)
        cfg["model"]["kappa_minus"] = 3.0   # far outside the window
        cfg["model"]["kappa_plus"] = 1.5
        code = main(["--config", write_config(tmp_path / "c.json", cfg),
                     "hierarchy", "stationary"])
        assert code == 1

    def test_evolve_emits_snapshots(self, tmp_path):
        cfg = glauber_config(tmp_path / "out", M=16)
        cfg["run"] = {"T": 0.5, "dt": 0.05, "initial_density": 0.2,
                      "snapshot_times": [0.25, 0.5]}
        code = main(["--config", write_config(tmp_path / "c.json", cfg),
                     "hierarchy", "evolve"])
        assert code == 0
        header, rows = read_csv(tmp_path / "out" / "k1.csv")
        times = sorted({r[0] for r in rows})
        assert times == pytest.approx([0.25, 0.5])
        assert (tmp_path / "out" / "k2.csv").exists()


class TestVlasovCli:
    def test_rho_snapshots(self, tmp_path):
        cfg = glauber_config(tmp_path / "out", M=16)
        cfg["run"] = {"T": 1.0, "dt": 0.02, "initial_density": 0.25,
                      "snapshot_times": [1.0]}
        code = main(["--config", write_config(tmp_path / "c.json", cfg), "vlasov"])
        assert code == 0
        header, rows = read_csv(tmp_path / "out" / "rho.csv")
        assert header == ["time", "x0", "rho"]
        assert all(r[-1] >= 0 for r in rows)


class TestScaleCompare:
    def test_monotone_error_column(self, tmp_path):
        cfg = glauber_config(tmp_path / "out", M=32)
        cfg["run"] = {"T": 0.5, "dt": 0.02, "initial_density": 0.25,
                      "eps_list": [1.0, 0.3, 0.1]}
        code = main(["--config", write_config(tmp_path / "c.json", cfg),
                     "scale-compare"])
        assert code == 0
        header, rows = read_csv(tmp_path / "out" / "errors.csv")
        assert header == ["eps", "time", "error"]
        errs = [r[2] for r in rows]
        assert errs[0] > errs[1] > errs[2]


class TestUsage:
    def test_missing_subcommand(self):
        assert main(["--config", "x.json"]) == 2

    def test_unknown_model_name(self, tmp_path):
        cfg = {"model": {"name": "ising"}, "space": {"d": 1, "L": 1.0, "M": 8},
               "output": {"directory": str(tmp_path / "o")}}
        assert main(["--config", write_config(tmp_path / "c.json", cfg), "check"]) == 2
