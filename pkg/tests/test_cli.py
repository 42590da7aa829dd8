import json
import math
import re
import shlex
from pathlib import Path

import numpy as np
import pytest

from ergolab.cli import CSV_COLUMNS, build_parser, main, random_block_profiles, resolve
from ergolab.cocycle import lyapunov_report
from ergolab.emit import Report, emit, read_csv, to_csv, to_json
from ergolab.systems import make_system

README = Path(__file__).resolve().parents[1] / "README.md"
GOLDEN = math.log((3 + math.sqrt(5)) / 2)


def run_cli(capsys, line):
    code = main(shlex.split(line))
    out = capsys.readouterr()
    return code, out.out, out.err


# -- documented examples ---------------------------------------------------------------

def test_rotation_lyapunov_is_zero(capsys):
    code, out, _ = run_cli(capsys, "lyapunov --system rotation theta=0.3 --n 1000")
    doc = json.loads(out)
    assert code == 0 and doc["schema"] == 1 and doc["ok"]
    assert doc["records"][0]["sigma_chi_plus"] == 0


def test_counterexample_certify(capsys):
    code, out, _ = run_cli(capsys, "counterexample --r 2 --lambda 2 --n0 5 --nmax 12 --certify")
    cert = json.loads(out)["certification"]
    assert code == 0 and cert["ok"]
    assert cert["exponent"] == pytest.approx(math.log(2) / 2, rel=0.05)


def test_inequality_doubling_all_ok(capsys):
    code, out, _ = run_cli(capsys, "inequality --system doubling --samples 20 --n 1000000 --seed 7")
    recs = json.loads(out)["records"]
    assert code == 0 and len(recs) == 20
    assert all(r["main_theorem_ok"] and r["ruelle_ok"] for r in recs)
    for r in recs:
        assert r["sigma_chi_plus"] == pytest.approx(math.log(2), abs=1e-12)


# -- exit codes and config -------------------------------------------------------

def test_usage_errors_exit_1(capsys, tmp_path):
    assert main(["lyapunov", "--system", "nosuchmap"]) == 1
    assert main(["lyapunov", "--n", "-3"]) == 1
    assert main(["nosuchcommand"]) == 1
    assert main(["lyapunov", "--system", "cat", "--x", "0.5"]) == 1
    assert main(["inequality", "--system", "tent"]) == 1
    assert main(["admissible", "--logs", "1.0"]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense_key = 3\n")
    assert main(["lyapunov", "--config", str(bad)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_failed_check_exits_2(capsys):
    code, out, _ = run_cli(capsys, "admissible --samples 50 --seed 0")
    assert code == 2 and json.loads(out)["ok"] is False


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nsystem = logistic mu=3.9\nn = 500\nm-list = 1, 2, 3\nseed = 4\n")
    command, merged = resolve(["entropy", "--config", str(cfg), "--n", "700"])
    assert command == "entropy"
    assert merged["system"] == ["logistic", "mu=3.9"]
    assert merged["m_list"] == [1, 2, 3] and merged["seed"] == 4
    assert merged["n"] == 700
    _, defaults = resolve(["entropy"])
    assert defaults["m_list"] == list(range(1, 11)) and defaults["n"] == 1000


def test_output_file_is_written(tmp_path, capsys):
    path = tmp_path / "out.json"
    assert main(["lyapunov", "--system", "doubling", "--n", "50", "-o", str(path)]) == 0
    assert capsys.readouterr().out == ""
    assert json.loads(path.read_text())["command"] == "lyapunov"
    assert main(["lyapunov", "--n", "5", "-o", str(tmp_path / "missing" / "x.json")]) == 1


def test_help_documents_csv_columns():
    text = build_parser().format_help()
    for cmd, cols in CSV_COLUMNS.items():
        assert f"{cmd}: {', '.join(cols)}" in text


# -- determinism -----------------------------------------------------------------

@pytest.mark.parametrize("line", [
    "lyapunov --system cat --samples 3 --seed 5 --n 500 --p-list 1 2",
    "entropy --system logistic mu=3.9 --samples 2 --seed 1 --n 20000",
    "physical-like --system doubling --samples 4 --seed 2 --n 4000",
    "kozlovski --system cat --n 10 --samples 500 --seed 3",
    "admissible --samples 10 --seed 9",
])
def test_reruns_are_byte_identical(capsys, line):
    a = run_cli(capsys, line)[1]
    b = run_cli(capsys, line)[1]
    assert a == b and a


def test_threads_do_not_change_output(capsys, monkeypatch):
    line = "inequality --system cat --samples 4 --n 20000 --seed 1"
    one = run_cli(capsys, line)[1]
    monkeypatch.setenv("ERGOLAB_THREADS", "3")
    assert run_cli(capsys, line)[1] == one


# -- emit ------------------------------------------------------------------------

def test_empty_report_gives_header_only_csv():
    rep = Report("lyapunov", {}, {"records": []}, CSV_COLUMNS["lyapunov"], [])
    assert to_csv(rep) == ",".join(CSV_COLUMNS["lyapunov"]) + "\n"
    assert read_csv(to_csv(rep)) == []


def test_one_record_gives_one_row(capsys):
    code, out, _ = run_cli(capsys, "kozlovski --system doubling --n 8 --samples 100 --format csv")
    lines = out.strip().split("\n")
    assert code == 0 and len(lines) == 2
    assert lines[0] == ",".join(CSV_COLUMNS["kozlovski"])


def test_json_csv_round_trip_of_lyapunov_report():
    s = make_system("cat")
    reps = [lyapunov_report(s, x, 300) for x in ([0.2, 0.9], [0.123, 0.456], [0.7, 0.01])]
    rows = [dict(sample=i, n=r.n, x_0=float(r.x[0]), x_1=float(r.x[1]),
                 chi_1=float(r.chi_k[0]), chi_2=float(r.chi_k[1]), sigma_chi_plus=r.sigma_chi_plus)
            for i, r in enumerate(reps)]
    report = Report("lyapunov", {}, {"records": [r.to_record() for r in reps]}, CSV_COLUMNS["lyapunov"], rows)
    back_json = json.loads(to_json(report))["records"]
    back_csv = read_csv(to_csv(report))
    for r, j, c in zip(reps, back_json, back_csv):
        np.testing.assert_allclose(j["chi"], r.chi_k, rtol=1e-15, atol=0)
        np.testing.assert_allclose([c["chi_1"], c["chi_2"]], r.chi_k, rtol=1e-15, atol=0)
        assert j["sigma_chi_plus"] == r.sigma_chi_plus == c["sigma_chi_plus"]
        assert c["x_0"] == r.x[0] and j["x"] == [float(v) for v in r.x]
        assert c["lambda"] is None
    assert back_json[0]["chi"][0] == pytest.approx(GOLDEN, abs=1e-8)


def test_json_cleans_non_finite_and_numpy_values():
    rep = Report("x", {"a": np.int64(3)}, {"v": [np.float64(1.5), math.inf, math.nan], "b": np.bool_(True)}, [])
    doc = json.loads(to_json(rep))
    assert doc["v"] == [1.5, None, None] and doc["b"] is True and doc["config"] == {"a": 3}
    with pytest.raises(ValueError):
        emit(rep, "xml")


def test_random_block_profiles_shape():
    profs = random_block_profiles(50, 0)
    assert len(profs) == 50 and profs == random_block_profiles(50, 0)
    for logs, A in profs:
        assert 1 <= len(logs) <= 6 and 0 <= A <= np.mean(logs)


# -- README examples -------------------------------------------------------------

def _readme_examples():
    lines = []
    for line in README.read_text().splitlines():
        m = re.match(r"^\$ ergolab (.*?)(?:\s+# exit (\d))?$", line)
        if m:
            lines.append((m.group(1), int(m.group(2) or 0)))
    return lines


def _readme_files():
    text = README.read_text()
    return dict(re.findall(r"<!-- file: (\S+) -->\n```\n(.*?)```", text, flags=re.S))


def test_readme_has_examples():
    ex = _readme_examples()
    assert len(ex) >= 10
    assert {c for _, c in ex} == {0, 1, 2}


@pytest.mark.parametrize("line,expected", _readme_examples())
def test_readme_example_runs(line, expected, tmp_path, monkeypatch, capsys):
    for name, body in _readme_files().items():
        (tmp_path / name).write_text(body)
    monkeypatch.chdir(tmp_path)
    code, out, err = run_cli(capsys, line)
    assert code == expected, err
    if expected != 1:
        assert out
        if "--format csv" not in line:
            assert json.loads(out)["schema"] == 1
