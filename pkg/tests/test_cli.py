from __future__ import annotations

import csv

import pytest

from memsample import analytic
from memsample.cli import main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def manifest(path) -> dict:
    lines = (path.parent / f"{path.name}.manifest").read_text().splitlines()
    return dict(line.split("=", 1) for line in lines)


# --- closed-form ------------------------------------------------------------------

def test_closed_form_prints_report(capsys, tmp_path) -> None:
    out = tmp_path / "cf.csv"
    assert main(["closed-form", "--p", "0.5", "--c", "5", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "Y0_star=2" in text and "g_star=4.0" in text and "tie" in text
    (row,) = read_csv(out)
    assert row["Y0_star"] == "2"
    meta = manifest(out)
    assert meta["command"] == "closed-form" and meta["p"] == "0.5"


@pytest.mark.parametrize("argv", [
    ["closed-form", "--p", "0", "--c", "1"],
    ["closed-form", "--p", "0.5", "--c", "-1"],
    ["solve", "--p", "0.5", "--c", "5", "--tol", "0"],
    ["solve", "--p", "0.5", "--c", "80", "--ymax", "20"],
    ["simulate", "--p", "0.5", "--c", "5", "--policy", "threshold:0"],
    ["simulate", "--p", "0.5", "--c", "5", "--policy", "always", "--slots", "100", "--warmup", "0",
     "--batches", "7"],
    ["figures", "--figure", "fig9"],
])
def test_usage_errors_exit_two(argv, tmp_path, monkeypatch) -> None:
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_argparse_errors_exit_two() -> None:
    with pytest.raises(SystemExit) as exc:
        main(["closed-form", "--p", "abc", "--c", "1"])
    assert exc.value.code == 2


# --- solve -------------------------------------------------------------------------

def test_solve_writes_policy_table(tmp_path, capsys) -> None:
    out = tmp_path / "solve.csv"
    assert main(["solve", "--p", "0.5", "--c", "20", "--out", str(out)]) == 0
    assert "threshold=5" in capsys.readouterr().out
    rows = read_csv(out)
    assert list(rows[0]) == ["x", "y", "action", "f"]
    first = {(int(r["x"]), int(r["y"])): r for r in rows[:10]}
    assert first[(0, 1)]["f"] == "0.0"
    assert first[(0, 4)]["action"] == "idle" and first[(0, 5)]["action"] == "sample"
    meta = manifest(out)
    assert meta["converged"] == "True" and meta["threshold"] == "5"


def test_solve_nonconvergence_exits_three(capsys) -> None:
    with pytest.warns(RuntimeWarning):
        assert main(["solve", "--p", "0.5", "--c", "80", "--max-iters", "3"]) == 3


# --- simulate -----------------------------------------------------------------------

SIM_ARGS = ["simulate", "--p", "0.5", "--c", "5", "--policy", "threshold:2", "--slots", "40000",
            "--warmup", "10000", "--seed", "9"]


def test_simulate_csv_is_deterministic(tmp_path) -> None:
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(SIM_ARGS + ["--out", str(a)]) == 0
    assert main(SIM_ARGS + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    (row,) = read_csv(a)
    assert list(row) == ["p", "c", "policy", "slots", "seed", "mean_cost", "ci_halfwidth", "mean_age",
                         "sample_rate"]
    assert row["policy"] == "threshold:2" and row["seed"] == "9"
    assert manifest(a)["rng"] == "numpy.random.PCG64"


# --- figures ------------------------------------------------------------------------

def test_figures_all(tmp_path) -> None:
    assert main(["figures", "--out", str(tmp_path)]) == 0
    fig2 = read_csv(tmp_path / "fig2.csv")
    assert list(fig2[0]) == ["Y0", "g0", "marker"]
    assert list(read_csv(tmp_path / "fig3.csv")[0]) == ["c", "p", "Y0_star"]
    assert list(read_csv(tmp_path / "fig4.csv")[0]) == ["c", "p", "g_star", "lower_bound"]
    for name in ("fig2", "fig3", "fig4"):
        assert (tmp_path / f"{name}.csv.manifest").exists()


def test_figures_bytes_stable(tmp_path) -> None:
    main(["figures", "--figure", "fig3", "--out", str(tmp_path / "a")])
    main(["figures", "--figure", "fig3", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "fig3.csv").read_bytes() == (tmp_path / "b" / "fig3.csv").read_bytes()


# --- verify -------------------------------------------------------------------------

VERIFY_SMALL = ["verify", "--p-grid", "0.5", "--c-grid", "5,80", "--slots", "100000"]


def test_verify_small_grid_passes(capsys, tmp_path) -> None:
    out = tmp_path / "verify.csv"
    assert main(VERIFY_SMALL + ["--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "FAIL" not in text
    assert "summary passed=" in text and "failed=0" in text
    assert all(r["passed"] == "True" for r in read_csv(out))


def test_verify_catches_planted_defect(monkeypatch, capsys) -> None:
    real = analytic.g0
    monkeypatch.setattr(analytic, "g0", lambda y0, params: real(y0, params) + 0.01)
    assert main(VERIFY_SMALL) == 1
    assert "FAIL" in capsys.readouterr().out


def test_verify_empty_grid_exits_two() -> None:
    assert main(["verify", "--p-grid", "", "--c-grid", "5"]) == 2
