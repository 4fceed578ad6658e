import subprocess
import sys

import numpy as np
import pytest

from priorcs.cli import main
from priorcs.experiments import PhaseGrid, read_metadata, run_phase_grid
from priorcs.model import read_vector, write_matrix, write_vector


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture
def identity_files(tmp_path):
    x = np.array([0.0, 3.0, 0.0, -1.5])
    write_matrix(tmp_path / "A.csv", np.eye(4))
    write_vector(tmp_path / "y.csv", x)
    return tmp_path, x


class TestSolve:
    def test_identity(self, identity_files, capsys):
        d, x = identity_files
        code = main(["solve", "--matrix", str(d / "A.csv"), "--obs", str(d / "y.csv"),
                     "--method", "lasso", "--out", str(d / "x.csv")])
        assert code == 0
        np.testing.assert_allclose(read_vector(d / "x.csv"), x, atol=1e-4)
        report = read_metadata(d / "x.csv.meta")
        assert report["status"] == "converged"
        for key in ("iterations", "primal_residual", "dual_residual", "objective"):
            assert key in report
        assert kv(capsys.readouterr().out)["status"] == "converged"

    def test_zero_observation(self, tmp_path):
        write_matrix(tmp_path / "A.csv", np.random.default_rng(0).standard_normal((3, 6)))
        write_vector(tmp_path / "y.csv", np.zeros(3))
        code = main(["solve", "--matrix", str(tmp_path / "A.csv"), "--obs", str(tmp_path / "y.csv"),
                     "--method", "lasso", "--out", str(tmp_path / "x.csv")])
        assert code == 0
        np.testing.assert_array_equal(read_vector(tmp_path / "x.csv"), np.zeros(6))

    def test_mc_requires_shift(self, identity_files, capsys):
        d, _ = identity_files
        code = main(["solve", "--matrix", str(d / "A.csv"), "--obs", str(d / "y.csv"),
                     "--method", "mc", "--out", str(d / "x.csv")])
        assert code == 1
        assert "--shift" in capsys.readouterr().err

    def test_baseline_requires_prior(self, identity_files):
        d, _ = identity_files
        assert main(["solve", "--matrix", str(d / "A.csv"), "--obs", str(d / "y.csv"),
                     "--method", "l1l2", "--lam", "1", "--out", str(d / "x.csv")]) == 1

    def test_baseline(self, identity_files):
        d, x = identity_files
        write_vector(d / "phi.csv", np.zeros(4))
        code = main(["solve", "--matrix", str(d / "A.csv"), "--obs", str(d / "y.csv"),
                     "--method", "l1l1", "--prior", str(d / "phi.csv"), "--lam", "0.5",
                     "--out", str(d / "x.csv")])
        assert code == 0
        np.testing.assert_allclose(read_vector(d / "x.csv"), x, atol=1e-4)

    def test_missing_file(self, tmp_path, capsys):
        code = main(["solve", "--matrix", str(tmp_path / "nope.csv"), "--obs", "y",
                     "--method", "lasso", "--out", str(tmp_path / "x.csv")])
        assert code == 1
        assert capsys.readouterr().err

    def test_max_iters_exit(self, tmp_path):
        r = np.random.default_rng(1)
        A = r.standard_normal((6, 12))
        write_matrix(tmp_path / "A.csv", A)
        write_vector(tmp_path / "y.csv", A @ r.standard_normal(12))
        code = main(["solve", "--matrix", str(tmp_path / "A.csv"), "--obs", str(tmp_path / "y.csv"),
                     "--method", "lasso", "--max-iters", "2", "--out", str(tmp_path / "x.csv")])
        assert code == 2

    def test_diverged_exit(self, tmp_path):
        write_matrix(tmp_path / "A.csv", np.array([[1.0, 0.0]]))
        write_vector(tmp_path / "y.csv", [1.0])
        write_vector(tmp_path / "p.csv", [0.0, 3.0])
        code = main(["solve", "--matrix", str(tmp_path / "A.csv"), "--obs", str(tmp_path / "y.csv"),
                     "--method", "mc", "--shift", str(tmp_path / "p.csv"),
                     "--out", str(tmp_path / "x.csv")])
        assert code == 3

    def test_unknown_method(self, identity_files):
        d, _ = identity_files
        with pytest.raises(SystemExit) as exc:
            main(["solve", "--matrix", str(d / "A.csv"), "--obs", str(d / "y.csv"),
                  "--method", "ridge", "--out", str(d / "x.csv")])
        assert exc.value.code == 1


class TestGeom:
    @pytest.fixture
    def vectors(self, tmp_path):
        write_vector(tmp_path / "x.csv", [1.0, 0.0])
        return tmp_path

    def test_v(self, vectors, capsys):
        write_vector(vectors / "p.csv", [0.5, -0.2])
        assert main(["geom", "v", "--signal", str(vectors / "x.csv"),
                     "--shift", str(vectors / "p.csv")]) == 0
        assert float(kv(capsys.readouterr().out)["v"]) == pytest.approx(1.69)

    def test_width_full_support(self, capsys):
        assert main(["geom", "width", "--n", "128", "--s", "128", "--v", "1"]) == 0
        assert float(kv(capsys.readouterr().out)["width_sq"]) == 128

    def test_predict(self, capsys):
        assert main(["geom", "predict", "--n", "128", "--s", "16", "--v", "128",
                     "--K", "1", "--C", "1"]) == 0
        out = kv(capsys.readouterr().out)
        assert float(out["m_predicted"]) == pytest.approx(65.611262307977, abs=1e-9)

    def test_mc(self, vectors, capsys):
        write_vector(vectors / "p.csv", [0.0, 0.0])
        assert main(["geom", "mc", "--signal", str(vectors / "x.csv"), "--shift",
                     str(vectors / "p.csv"), "--samples", "20000", "--seed", "1"]) == 0
        out = kv(capsys.readouterr().out)
        assert float(out["mean_sq_dist"]) == pytest.approx(1.0, abs=5 * float(out["std_error"]))
        assert float(out["closed_form_bound"]) == pytest.approx(1.6816901138162093)

    def test_mc_hypothesis_violated(self, vectors, capsys):
        write_vector(vectors / "p.csv", [1.0, 0.0])
        assert main(["geom", "mc", "--signal", str(vectors / "x.csv"), "--shift",
                     str(vectors / "p.csv"), "--samples", "100"]) == 4
        assert "hypothesis" in capsys.readouterr().err

    def test_mc_seed_from_environment(self, vectors, capsys, monkeypatch):
        write_vector(vectors / "p.csv", [0.5, 0.0])
        args = ["geom", "mc", "--signal", str(vectors / "x.csv"), "--shift",
                str(vectors / "p.csv"), "--samples", "500"]
        monkeypatch.setenv("PRIORCS_SEED", "7")
        main(args)
        first = capsys.readouterr().out
        main(args + ["--seed", "7"])
        assert capsys.readouterr().out == first


class TestPhase:
    def args(self, out, *extra):
        return ["phase", "--n", "8", "--step", "4", "--trials", "2", "--case", "b",
                "--method", "mc", "--seed", "3", "--out", str(out), *extra]

    def test_grid_file(self, tmp_path):
        assert main(self.args(tmp_path / "g.csv")) == 0
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert lines[0] == "s,m,successes,trials"
        assert len(lines) == 10
        meta = read_metadata(tmp_path / "g.csv.meta")
        assert meta["base_seed"] == "3" and meta["case_tag"] == "b"

    def test_byte_identical_reruns(self, tmp_path):
        main(self.args(tmp_path / "a.csv"))
        main(self.args(tmp_path / "b.csv", "--threads", "2"))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_unknown_case(self, tmp_path):
        assert main(["phase", "--n", "8", "--case", "z", "--out", str(tmp_path / "g.csv")]) == 1

    def test_unknown_method(self, tmp_path):
        assert main(["phase", "--n", "8", "--method", "ridge", "--out", str(tmp_path / "g.csv")]) == 1

    def test_contour(self, tmp_path):
        main(self.args(tmp_path / "g.csv"))
        assert main(["contour", "--grid", str(tmp_path / "g.csv"), "--level", "0.5",
                     "--out", str(tmp_path / "c.csv")]) == 0
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[:2] == ["s,m_star", "0,0"]
        assert read_metadata(tmp_path / "c.csv.meta")["grid.base_seed"] == "3"

    def test_grid_replays_from_sidecar(self, tmp_path):
        main(self.args(tmp_path / "g.csv"))
        grid = PhaseGrid.read_csv(tmp_path / "g.csv")
        assert run_phase_grid(grid.protocol).csv_text() == (tmp_path / "g.csv").read_text()

    def test_compare(self, tmp_path):
        assert main(["compare", "--n", "8", "--step", "4", "--trials", "2", "--case", "c",
                     "--methods", "mc,l1l1,l1l2", "--out", str(tmp_path / "t.csv")]) == 0
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "s,max_corr,l1_l1,l1_l2"
        assert lines[1] == "0,0,0,0"
        meta = read_metadata(tmp_path / "t.csv.meta")
        assert meta["methods"] == "max_corr,l1_l1,l1_l2"

    def test_compare_duplicate_methods(self, tmp_path):
        assert main(["compare", "--n", "8", "--step", "4", "--trials", "1",
                     "--methods", "mc,max_corr", "--out", str(tmp_path / "t.csv")]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "priorcs", "geom", "width", "--n", "4",
                           "--s", "4", "--v", "2"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "width_sq=4"
