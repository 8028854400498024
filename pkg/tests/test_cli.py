import json

import numpy as np
import pytest

from qcqpd import load_problem, save_problem, validate
from qcqpd.cli import main
from helpers import toy_problem


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "toy.json"
    save_problem(toy_problem(), path)
    return str(path)


class TestSolveCommand:
    def test_toy_converges_exit_zero(self, toy_file, tmp_path, capsys):
        report = tmp_path / "report.json"
        trace = tmp_path / "trace.csv"
        code = main(["solve", toy_file, "--tol", "1e-6", "--report", str(report), "--trace", str(trace)])
        assert code == 0
        out = capsys.readouterr().out
        assert "status=converged" in out
        doc = json.loads(report.read_text())
        assert abs(doc["x"][0] - 1.0) <= 1e-4
        assert abs(doc["lambda"][0] - 1.0) <= 1e-4
        lines = trace.read_text().strip().splitlines()
        assert lines[0] == "iter,rho,res1,res2,objective"
        assert all(len(line.split(",")) == 5 for line in lines[1:])

    def test_missing_file_exit_one(self, capsys):
        assert main(["solve", "/nonexistent/problem.json"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_invalid_problem_exit_one(self, tmp_path, capsys):
        p = toy_problem()
        p.P[1] = np.array([[-1.0]])  # not PSD
        path = tmp_path / "bad.json"
        save_problem(p, path)
        assert main(["solve", str(path)]) == 1
        assert "not PSD" in capsys.readouterr().err

    def test_max_iters_exit_two(self, toy_file):
        assert main(["solve", toy_file, "--tol", "1e-15", "--max-iters", "20"]) == 2

    def test_infeasible_exit_three(self, tmp_path):
        path = tmp_path / "infeasible.json"
        assert main(["generate", "infeasible", "--n1", "64", "--seed", "1", "--out", str(path)]) == 0
        code = main([
            "solve", str(path), "--max-iters", "50000", "--divergence-threshold", "1e4",
        ])
        assert code == 3

    def test_unbounded_exit_four(self, tmp_path):
        path = tmp_path / "unbounded.json"
        assert main(["generate", "unbounded", "--n1", "64", "--seed", "1", "--out", str(path)]) == 0
        assert main(["solve", str(path)]) == 4

    def test_unknown_flag_rejected(self, toy_file):
        with pytest.raises(SystemExit):
            main(["solve", toy_file, "--frobnicate"])

    def test_identical_runs_identical_outputs(self, toy_file, tmp_path):
        outputs = []
        for tag in ("a", "b"):
            report = tmp_path / f"report_{tag}.json"
            trace = tmp_path / f"trace_{tag}.csv"
            assert main(["solve", toy_file, "--tol", "1e-6", "--report", str(report), "--trace", str(trace)]) == 0
            outputs.append((report.read_bytes(), trace.read_bytes()))
        assert outputs[0] == outputs[1]


class TestGenerateCommand:
    def test_random_qcqp_deterministic(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        args = ["generate", "random-qcqp", "--n1", "64", "--m1", "2", "--cond", "1.25", "--seed", "7"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_random_qcqp_meta(self, tmp_path):
        out, meta = tmp_path / "p.json", tmp_path / "meta.json"
        main(["generate", "random-qcqp", "--n1", "8", "--m1", "1", "--cond", "100", "--seed", "3",
              "--out", str(out), "--meta", str(meta)])
        doc = json.loads(meta.read_text())
        assert doc["kappa"] == pytest.approx(100.0)
        assert doc["d_min"] == 0.1 and doc["d_max"] == 10.0
        assert validate(load_problem(out)).ok

    def test_mkl_generates_valid_problem(self, tmp_path):
        out, meta = tmp_path / "mkl.json", tmp_path / "meta.json"
        code = main(["generate", "mkl", "--dataset", "twonorm", "--ntr", "24", "--nt", "8",
                     "--svm", "sm2", "--c", "1.0", "--out", str(out), "--meta", str(meta)])
        assert code == 0
        p = load_problem(out)
        assert validate(p).ok
        assert p.n1 == 24 and p.m1 == 5 and p.m2 == 1 and p.n2 == 1
        doc = json.loads(meta.read_text())
        assert doc["kernels"] == ["gaussian:0.01", "gaussian:0.1", "gaussian:1", "gaussian:10", "gaussian:100"]
        assert len(doc["train_indices"]) == 24

    def test_mkl_custom_kernels(self, tmp_path):
        out = tmp_path / "mkl.json"
        code = main(["generate", "mkl", "--ntr", "12", "--nt", "4", "--kernels",
                     "linear,polynomial,gaussian:0.5", "--out", str(out)])
        assert code == 0
        assert load_problem(out).m1 == 3

    def test_bad_kernel_flag(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["generate", "mkl", "--kernels", "rbf:1", "--out", str(tmp_path / "x.json")])

    def test_bad_spec_exit_one(self, tmp_path, capsys):
        code = main(["generate", "random-qcqp", "--n1", "4", "--m1", "1",
                     "--dmin", "2.0", "--dmax", "1.0", "--out", str(tmp_path / "x.json")])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestCheckKkt:
    def test_kkt_point_reports_zero(self, toy_file, tmp_path, capsys):
        point = tmp_path / "point.json"
        point.write_text(json.dumps({"x": [1.0], "u": [], "lambda": [1.0], "gamma": []}))
        assert main(["check-kkt", toy_file, str(point)]) == 0
        out = capsys.readouterr().out
        kkt = float(out.splitlines()[0].split("=")[1])
        assert kkt <= 1e-12
        assert "res1=" in out and "res2=" in out

    def test_negative_multiplier_rejected(self, toy_file, tmp_path):
        point = tmp_path / "point.json"
        point.write_text(json.dumps({"x": [1.0], "u": [], "lambda": [-1.0], "gamma": []}))
        assert main(["check-kkt", toy_file, str(point)]) == 1

    def test_wrong_length_rejected(self, toy_file, tmp_path):
        point = tmp_path / "point.json"
        point.write_text(json.dumps({"x": [1.0, 2.0], "u": [], "lambda": [0.0], "gamma": []}))
        assert main(["check-kkt", toy_file, str(point)]) == 1
