import subprocess
import sys

import pytest

from gradverify.cli import main
from gradverify.instrument import HEADER

from conftest import corpus_path


def test_verify_prints_report(capsys):
    assert main(["verify", str(corpus_path("withdraw"))]) == 0
    out = capsys.readouterr().out
    assert out.startswith("gradverify-checks 1\n")
    assert out.count("\ncheck ") == 3


def test_verify_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.gvl"
    bad.write_text("void m(int x)\n  //@ requires x > 0;\n  //@ ensures x < 0;\n{ }\n")
    assert main(["verify", str(bad)]) == 1
    assert "verdict failure" in capsys.readouterr().out


def test_usage_errors(tmp_path, capsys):
    assert main(["verify", str(tmp_path / "missing.gvl")]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["instrument", str(corpus_path("list")), "--mode", "eager"]) == 2
    syntax = tmp_path / "syntax.gvl"
    syntax.write_text("void m( {")
    assert main(["verify", str(syntax)]) == 2
    assert "gradverify:" in capsys.readouterr().err


def test_emit_checks_then_instrument_matches_single_shot(tmp_path, capsys):
    path = str(corpus_path("acyclic"))
    checks = tmp_path / "acyclic.checks"
    assert main(["verify", path, "--emit-checks", str(checks)]) == 0
    capsys.readouterr()
    one, two = tmp_path / "one.gvl", tmp_path / "two.gvl"
    assert main(["instrument", path, "--out", str(one)]) == 0
    assert main(["instrument", path, "--checks", str(checks), "--out", str(two)]) == 0
    assert one.read_bytes() == two.read_bytes()


def test_instrument_framing_has_only_access_checks(capsys):
    assert main(["instrument", str(corpus_path("list")), "--mode", "framing"]) == 0
    out = capsys.readouterr().out
    assert out.startswith(f"{HEADER} mode=framing")
    table = [l for l in out.splitlines() if l.startswith("// check ")]
    assert table and all("[access]" in l or "[transfer]" in l for l in table)
    assert "assertCheck" not in out


def test_run_source_and_instrumented_file(tmp_path, capsys):
    path = str(corpus_path("acyclic"))
    assert main(["run", path, "--workload", "4"]) == 0
    direct = capsys.readouterr().out
    ins = tmp_path / "acyclic.ins.gvl"
    main(["instrument", path, "--out", str(ins)])
    report = tmp_path / "run.txt"
    assert main(["run", str(ins), "--workload", "4", "--report", str(report)]) == 0
    assert capsys.readouterr().out == direct == report.read_text()
    assert "outcome completed" in direct


def test_run_failure_exit_code(capsys):
    assert main(["run", str(corpus_path("acyclic_swapped_branch")), "--workload", "1"]) == 1
    out = capsys.readouterr().out
    assert "outcome verification-failure" in out
    assert "message acc(s.val) in predicate acyclicSeg" in out


def test_run_failing_assert_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.gvl"
    bad.write_text("int main()\n  //@ requires true;\n  //@ ensures true;\n"
                   "{ assert(1 > 2); return 0; }\n")
    assert main(["run", str(bad)]) == 1
    assert "assert(1 > 2) failed" in capsys.readouterr().out


def test_lattice_writes_tables(tmp_path, capsys):
    code = main(["lattice", str(corpus_path("bst")), "--paths", "2", "--seed", "7",
                 "--workloads", "4", "--modes", "gradual,framing", "--out", str(tmp_path)])
    assert code == 0
    table = (tmp_path / "bst.csv").read_text().splitlines()
    assert table[0].startswith("path,step,percent")
    summary = (tmp_path / "bst-summary.csv").read_text()
    assert "100,gradual,4,0.0" in summary
    assert "# bst:" in capsys.readouterr().out


def test_lattice_rejects_incomplete_spec(capsys):
    assert main(["lattice", str(corpus_path("withdraw")), "--paths", "1"]) == 2


def test_solver_flag_and_env(monkeypatch, capsys):
    assert main(["verify", str(corpus_path("withdraw")), "--solver", "builtin"]) == 0
    monkeypatch.setenv("GRADVERIFY_SOLVER", "nonsense")
    assert main(["verify", str(corpus_path("withdraw"))]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gradverify", "verify",
                          str(corpus_path("withdraw"))], capture_output=True, text=True)
    assert res.returncode == 0
    assert "verdict success" in res.stdout
