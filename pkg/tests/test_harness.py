import csv
import xml.dom.minidom

import numpy as np
import pytest

from shufflelab.harness import SpecError, load_spec, run_experiment, spec_from_dict
from shufflelab.harness import runner
from shufflelab.harness.cli import main
from shufflelab.harness.runner import RATES_COLUMNS, RUNS_COLUMNS, SUMMARY_COLUMNS, Cell, run_cell
from shufflelab.harness.svgplot import loglog_svg
from shufflelab.problems import problem_constants

SPEC = """
T_grid = [32, 64, 128]
[problem]
family = "quadratic"
n = 4
d = 2
spectrum = [1.0, 3.0]
seed = 3
[domain]
D = 3.0
[[algorithms]]
kind = "RANDOM_SHUFFLE"
step_rule = "THM1"
[[algorithms]]
kind = "SGD"
step_rule = 0.05
[seeds]
count = 3
master = 11
[outputs]
dir = "out"
plots = true
"""


def base(**over):
    raw = {
        "T_grid": [32, 64, 128],
        "problem": {"family": "quadratic", "n": 4, "d": 2, "spectrum": [1.0, 3.0], "seed": 3},
        "algorithms": [{"kind": "RANDOM_SHUFFLE", "step_rule": "THM1"}],
        "seeds": {"count": 2, "master": 1},
    }
    raw.update(over)
    return raw


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(SPEC)
    return path


class TestConfig:
    def test_load(self, spec_file):
        spec = load_spec(spec_file)
        assert spec.T_grid == (32, 64, 128)
        assert [a.label for a in spec.algorithms] == ["RANDOM_SHUFFLE/THM1", "SGD/0.050000000000000003"]
        assert spec.seed_count == 3 and spec.master_seed == 11 and spec.D == 3.0
        assert spec.output_dir == str(spec_file.parent / "out")
        assert spec.validate().n == 4

    @pytest.mark.parametrize("raw", [
        base(extra=1),
        base(problem={"family": "quadratic", "n": 4, "d": 2, "spectrum": [1, 3], "colour": 1}),
        base(problem={"family": "cubic"}),
        base(algorithms=[{"kind": "ADAM", "step_rule": 0.1}]),
        base(algorithms=[{"kind": "SGD", "step_rule": "THM3"}]),
        base(algorithms=[{"kind": "SGD", "step_rule": -0.1}]),
        base(algorithms=[{"kind": "SGD"}]),
        base(seeds={"count": 2, "master": 1, "stream": 0}),
    ])
    def test_rejects_bad_keys_and_values(self, raw):
        with pytest.raises(SpecError):
            spec_from_dict(raw)

    @pytest.mark.parametrize("raw", [
        base(T_grid=[30, 64]),
        base(algorithms=[{"kind": "IGD", "step_rule": 0.1}], T_grid=[6]),
        base(T_grid=[]),
        base(algorithms=[]),
        base(algorithms=[{"kind": "SGD", "step_rule": 0.1}, {"kind": "SGD", "step_rule": 0.1}]),
    ])
    def test_validation(self, raw):
        with pytest.raises(SpecError):
            spec_from_dict(raw).validate()

    def test_sgd_grid_need_not_be_multiple(self):
        spec = spec_from_dict(base(algorithms=[{"kind": "SGD", "step_rule": 0.1}], T_grid=[30]))
        assert spec.validate().n == 4

    @pytest.mark.parametrize("problem,n", [
        ({"family": "lower_bound", "n": 6, "spectrum": [1, 2, 3], "b_coeffs": [1, 1, 1]}, 6),
        ({"family": "sparse", "n": 4, "d": 4, "groups": [1, 1, 2], "spectrum": [1, 2], "seed": 1}, 4),
        ({"family": "pl", "n": 4}, 4),
        ({"family": "pl", "b_coeffs": [-1.0, 1.0]}, 2),
        ({"family": "vanishing_variance", "mu_list": [1.0, 2.0], "d": 3}, 2),
    ])
    def test_every_family_builds(self, problem, n):
        spec = spec_from_dict(base(problem=problem, T_grid=[12], algorithms=[{"kind": "SGD", "step_rule": 0.01}]))
        assert spec.problem.build().n == n

    def test_missing_parameter(self):
        with pytest.raises(SpecError):
            spec_from_dict(base(problem={"family": "quadratic", "n": 4})).validate()


class TestRunner:
    def test_single_cell(self, tmp_path):
        spec = spec_from_dict(base(T_grid=[16], seeds={"count": 1, "master": 0}))
        res = run_experiment(spec, output_dir=tmp_path)
        runs = read_csv(res.files["runs.csv"])
        assert tuple(runs[0]) == RUNS_COLUMNS
        assert len(runs) == 2
        assert tuple(read_csv(res.files["summary.csv"])[0]) == SUMMARY_COLUMNS
        assert tuple(read_csv(res.files["rates.csv"])[0]) == RATES_COLUMNS

    def test_byte_identical_rerun(self, spec_file, tmp_path):
        spec = load_spec(spec_file)
        a = run_experiment(spec, output_dir=tmp_path / "a")
        b = run_experiment(spec, output_dir=tmp_path / "b")
        for name in ("runs.csv", "summary.csv", "rates.csv", "convergence.svg"):
            assert a.files[name].read_bytes() == b.files[name].read_bytes()

    def test_worker_pool_matches_serial(self, spec_file, tmp_path):
        spec = load_spec(spec_file)
        a = run_experiment(spec, workers=1, output_dir=tmp_path / "serial")
        b = run_experiment(spec, workers=2, output_dir=tmp_path / "pool")
        for name in ("runs.csv", "summary.csv", "rates.csv"):
            assert a.files[name].read_bytes() == b.files[name].read_bytes()

    def test_cell_rerun_reproduces_row(self, spec_file, tmp_path):
        spec = load_spec(spec_file)
        res = run_experiment(spec, output_dir=tmp_path)
        problem = spec.problem.build()
        constants = problem_constants(problem, spec.D)
        rows = read_csv(res.files["runs.csv"])[1:]
        cells = runner.all_cells(spec)
        for k in (0, 4, len(cells) - 1):
            assert list(run_cell(spec, problem, constants, cells[k]).row()) == rows[k]

    def test_float_round_trip(self, spec_file, tmp_path):
        spec = load_spec(spec_file)
        res = run_experiment(spec, output_dir=tmp_path)
        rows = read_csv(res.files["runs.csv"])[1:]
        for r, cell in zip(rows, res.cells):
            assert float(r[3]) == cell.final_sq_error
        summary = read_csv(res.files["summary.csv"])[1:]
        first = [float(r[3]) for r in rows[:3]]
        assert float(summary[0][2]) == pytest.approx(np.mean(first), rel=1e-15)
        assert int(summary[0][4]) == 3

    def test_residual_ratio_only_for_shuffle(self, spec_file, tmp_path):
        res = run_experiment(load_spec(spec_file), output_dir=tmp_path)
        for r in read_csv(res.files["runs.csv"])[1:]:
            if r[0].startswith("RANDOM_SHUFFLE"):
                assert 0.0 <= float(r[6]) <= 1.0
            else:
                assert r[6] == ""

    def test_failed_cell_is_recorded(self, spec_file, tmp_path, monkeypatch):
        real = runner.run_optimizer

        def flaky(problem, config):
            if config.T == 64:
                raise RuntimeError("boom")
            return real(problem, config)

        monkeypatch.setattr(runner, "run_optimizer", flaky)
        res = run_experiment(load_spec(spec_file), output_dir=tmp_path)
        rows = read_csv(res.files["runs.csv"])[1:]
        failed = [r for r in rows if r[1] == "64"]
        assert failed and all(r[7] == "RuntimeError: boom" and r[3] == "" for r in failed)
        assert all(r[7] == "" for r in rows if r[1] != "64")
        summary = read_csv(res.files["summary.csv"])[1:]
        assert [r[4] for r in summary if r[1] == "64"] == ["0", "0"]

    def test_divergence_is_reported(self, tmp_path):
        spec = spec_from_dict(base(algorithms=[{"kind": "SGD", "step_rule": 1e200}], T_grid=[16]))
        res = run_experiment(spec, output_dir=tmp_path)
        rows = read_csv(res.files["runs.csv"])[1:]
        assert all(r[7].startswith("diverged at k=") for r in rows)


class TestSvg:
    def test_valid_xml_and_series(self):
        svg = loglog_svg({"a": [(10, 1.0), (100, 0.01)], "b<&>": [(10, 0.5), (100, 0.0)]}, title="t")
        doc = xml.dom.minidom.parseString(svg)
        assert len(doc.getElementsByTagName("polyline")) == 2
        assert "b&lt;&amp;&gt;" in svg

    def test_empty(self):
        xml.dom.minidom.parseString(loglog_svg({}))


class TestCli:
    def test_run_and_rate(self, spec_file, tmp_path, capsys):
        assert main(["run", str(spec_file), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "convergence.svg").exists()
        capsys.readouterr()
        out = tmp_path / "rates.csv"
        assert main(["rate", "--input", str(tmp_path / "o" / "summary.csv"), "--output", str(out)]) == 0
        rows = read_csv(out)
        assert tuple(rows[0]) == RATES_COLUMNS and len(rows) == 3

    def test_oracle_check(self, capsys):
        assert main(["oracle-check", "--n", "4", "--gamma", "0.2", "--samples", "20000", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "closed_form" in out and "brute_force" in out and "monte_carlo" in out

    def test_lower_bound_sweep(self, capsys):
        assert main(["lower-bound-sweep", "--n", "8", "--gammas", "log:0.001:0.6:20"]) == 0
        rows = list(csv.reader(capsys.readouterr().out.splitlines()))
        assert rows[0] == ["gamma", "scaled_sq_error"] and len(rows) == 21

    def test_recursion_check(self, spec_file, tmp_path, capsys):
        out = tmp_path / "rec.csv"
        code = main(["recursion-check", str(spec_file), "--samples", "200", "--epochs", "5", "--output", str(out)])
        rows = read_csv(out)
        assert rows[0] == ["epoch", "start_sq_error", "lhs", "lhs_stderr", "rhs", "satisfied"]
        assert len(rows) == 6 and code == 0

    def test_bad_spec_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("T_grid = [1]\n[problem]\nfamily = 'nope'\n")
        assert main(["run", str(bad)]) == 2
        assert "error" in capsys.readouterr().err
