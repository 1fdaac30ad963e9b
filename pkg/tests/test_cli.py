import json
from pathlib import Path

import numpy as np
import pytest

from mhessian.cli import main
from mhessian.grids import GridDomain, GridFunction
from mhessian.serialize import (
    gridfunction_from_binary,
    gridfunction_to_binary,
    gridfunction_to_csv,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


class TestSerialization:
    def test_binary_round_trip(self, tmp_path, rng):
        domain = GridDomain.ball(1, radius=0.8, points_per_axis=9)
        u = GridFunction(domain, rng.normal(size=domain.shape))
        path = tmp_path / "dump.bin"
        gridfunction_to_binary(u, path)
        v = gridfunction_from_binary(path)
        assert v.domain == domain
        np.testing.assert_array_equal(v.values, u.values)

    def test_binary_magic_guard(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + bytes(64))
        from mhessian.errors import ConfigError

        with pytest.raises(ConfigError):
            gridfunction_from_binary(path)

    def test_csv_headers_and_rows(self, tmp_path):
        domain = GridDomain.torus(1, points_per_axis=9)
        u = GridFunction.constant(domain, -1.5)
        path = tmp_path / "u.csv"
        gridfunction_to_csv(u, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x1,y1,value"
        assert len(lines) == 1 + domain.node_count


class TestCommands:
    def test_cone_motivating_example(self, tmp_path):
        rc = main(["cone", "--config", str(CONFIGS / "cone_example.json"),
                   "--out", str(tmp_path / "o"), "--quiet"])
        assert rc == 0
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["verdict"]["member"] is True
        assert abs(report["verdict"]["margin"] - 2.0 / 3.0) < 1e-12
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["command"] == "cone"
        assert manifest["config_sha256"]

    def test_eigen_and_fm(self, tmp_path):
        cfg = write_config(tmp_path, "fm.json", {
            "T": {"n": 3, "re": [[1, 0, 0], [0, 2, 0], [0, 0, 3]],
                  "im": [[0] * 3] * 3},
            "m": 2,
        })
        rc = main(["fm", "--config", cfg, "--out", str(tmp_path / "fm"),
                   "--quiet"])
        assert rc == 0
        report = json.loads((tmp_path / "fm" / "report.json").read_text())
        assert abs(report["value"] - 60.0 ** (1.0 / 3.0)) < 1e-12
        assert abs(report["determinant_route"] - report["value"]) < 1e-9
        rc = main(["eigen", "--config", cfg, "--out", str(tmp_path / "e"),
                   "--quiet"])
        assert rc == 0
        eig = json.loads((tmp_path / "e" / "report.json").read_text())
        np.testing.assert_allclose(eig["lambdas"], [1.0, 2.0, 3.0], atol=1e-12)

    def test_solve_manufactured(self, tmp_path):
        rc = main(["solve", "--config",
                   str(CONFIGS / "solve_quadratic_c1.json"),
                   "--out", str(tmp_path / "s"), "--quiet"])
        assert rc == 0
        report = json.loads((tmp_path / "s" / "report.json").read_text())
        assert report["final_residual"] <= 1e-10
        assert report["min_cone_margin"] > 0
        assert (tmp_path / "s" / "solution.bin").exists()

    def test_grid_override(self, tmp_path):
        rc = main(["solve", "--config",
                   str(CONFIGS / "solve_quadratic_c1.json"),
                   "--out", str(tmp_path / "s"), "--quiet",
                   "--grid-override", "17"])
        assert rc == 0
        sol = gridfunction_from_binary(tmp_path / "s" / "solution.bin")
        assert sol.domain.points_per_axis == 17

    def test_exit_codes(self, tmp_path):
        # missing config file -> parse error
        rc = main(["cone", "--config", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path / "x"), "--quiet"])
        assert rc == 2
        # malformed payload -> validation error
        cfg = write_config(tmp_path, "bad.json", {"T": {"n": 2, "re": [[1]]},
                                                  "m": 1})
        rc = main(["cone", "--config", cfg, "--out", str(tmp_path / "y"),
                   "--quiet"])
        assert rc == 3
        # solver failure -> runtime error
        cfg = write_config(tmp_path, "diverge.json", {
            "problem": "dirichlet",
            "m": 1,
            "grid": {"n": 1, "kind": "ball", "points_per_axis": 9},
            "boundary": {"kind": "squared_norm"},
            "rhs": {"kind": "manufactured_quadratic"},
            "solver": {"tolerance": 1e-15, "max_iterations": 1},
        })
        rc = main(["solve", "--config", cfg, "--out", str(tmp_path / "z"),
                   "--quiet"])
        assert rc == 4
        error = json.loads((tmp_path / "z" / "error.json").read_text())
        assert "NewtonDiverged" in error["type"]

    def test_verify_suite_small(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "suite.json", {"corpus_size": 50})
        rc = main(["verify-suite", "--config", cfg, "--seed", "7",
                   "--out", str(tmp_path / "v"), "--quiet"])
        assert rc == 0
        summary = (tmp_path / "v" / "suite_summary.csv").read_text()
        assert "oracle_equivalence" in summary
        assert "FAIL" not in summary

    def test_determinism(self, tmp_path):
        cfg = write_config(tmp_path, "suite.json", {"corpus_size": 25})
        for sub in ("a", "b"):
            rc = main(["verify-suite", "--config", cfg, "--seed", "11",
                       "--out", str(tmp_path / sub), "--quiet"])
            assert rc == 0
        a = (tmp_path / "a" / "suite_summary.csv").read_bytes()
        b = (tmp_path / "b" / "suite_summary.csv").read_bytes()
        assert a == b

    def test_solve_artifacts_deterministic(self, tmp_path):
        for sub in ("a", "b"):
            rc = main(["solve", "--config",
                       str(CONFIGS / "solve_quadratic_c1.json"),
                       "--out", str(tmp_path / sub), "--quiet"])
            assert rc == 0
        a = (tmp_path / "a" / "solution.csv").read_bytes()
        b = (tmp_path / "b" / "solution.csv").read_bytes()
        assert a == b

    def test_manifest_traces_artifacts(self, tmp_path):
        rc = main(["cone", "--config", str(CONFIGS / "cone_example.json"),
                   "--out", str(tmp_path / "o"), "--quiet"])
        assert rc == 0
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["artifacts"]["cone.csv"] == [
            "cones", "strong_positivity_oracle"
        ]
        for name in manifest["artifacts"]:
            assert (tmp_path / "o" / name).exists()

    def test_flat_solver_config_keys(self, tmp_path):
        cfg = write_config(tmp_path, "flat.json", {
            "problem": "dirichlet",
            "m": 1,
            "tolerance": 1e-10,
            "t_steps": 2,
            "grid": {"n": 1, "kind": "ball", "points_per_axis": 17},
            "boundary": {"kind": "squared_norm"},
            "rhs": {"kind": "manufactured_quadratic"},
        })
        rc = main(["solve", "--config", cfg, "--out", str(tmp_path / "s"),
                   "--quiet"])
        assert rc == 0
        report = json.loads((tmp_path / "s" / "report.json").read_text())
        assert report["final_residual"] <= 1e-10

    def test_regularize_local_cli(self, tmp_path):
        rc = main(["regularize", "--config",
                   str(CONFIGS / "regularize_local_c1.json"),
                   "--out", str(tmp_path / "r"), "--quiet"])
        assert rc == 0
        summary = json.loads((tmp_path / "r" / "summary.json").read_text())
        assert summary["passed"] is True
        assert summary["monotone_gap"] <= 1e-8
        assert (tmp_path / "r" / "iterate_00.csv").exists()
