import csv
import io
import shutil
import subprocess

import numpy as np
import pytest

from gchs.cli import main
from gchs.dynamics import CONVENTIONS
from gchs.scenario import bundled

CHI_Q_TEXT = """\
[manifold]
dim = 2
J = canonical
chi = "{chi}"

[hamiltonian]
H = "{H}"

[simulate]
x0 = 0.5, 0.25
t1 = 1
h = 0.01
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def scenario(tmp_path, chi="0", H="0.5*(q1^2 + p1^2)", extra=""):
    p = tmp_path / "s.ini"
    p.write_text(CHI_Q_TEXT.format(chi=chi, H=H) + extra)
    return p


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# -- check ----------------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["abelian", "chi-q", "heisenberg", "phase4"])
def test_check_bundled(capsys, name):
    code, out, _ = run(capsys, "check", bundled(name))
    assert code == 0 and out.startswith(f"# scenario {name}")


def test_check_errors(capsys, tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text('[manifold]\ndim = 2\nJ12 = "1"\nJ21 = "1"\n[hamiltonian]\nH = "q1"\n')
    code, _, err = run(capsys, "check", p)
    assert code == 2 and "antisymmetric" in err and "line 3" in err
    p.write_text('[manifold]\ndim = 2\nJ = canonical\n')
    code, _, err = run(capsys, "check", p)
    assert code == 2 and "[hamiltonian]" in err
    p.write_text('[manifold]\ndim = 2\nJ = canonical\nchi = "q1 +* 2"\n[hamiltonian]\nH = "q1"\n')
    code, _, err = run(capsys, "check", p)
    assert code == 2 and "line 4, column" in err


def test_usage_errors(capsys, tmp_path):
    assert run(capsys)[0] == 1
    assert run(capsys, "audit")[0] == 1
    assert run(capsys, "frobnicate", "x")[0] == 1
    assert run(capsys, "check", tmp_path / "missing.ini")[0] == 1
    assert run(capsys, "audit", bundled("abelian"), "--threads", "0")[0] == 1


# -- audit ----------------------------------------------------------------------------------------


def test_audit_abelian_csv(capsys, tmp_path):
    out_path = tmp_path / "report.csv"
    code, out, err = run(capsys, "audit", bundled("abelian"), "--out", out_path, "--threads", 2)
    assert code == 0 and out == ""
    text = out_path.read_text()
    assert text.splitlines()[0] == "identity_id,class,samples,rejected,max_residual,mean_residual,sign_note,verdict"
    table = rows(text)
    assert len(table) == 28
    for r in table:
        if r["verdict"] == "skipped":
            continue
        assert float(r["max_residual"]) <= 1e-10
        assert r["verdict"] == ("pass" if r["class"] == "FORCED" else "reported")


def test_audit_chi_q_to_stdout(capsys):
    code, out, _ = run(capsys, "audit", bundled("chi-q"))
    assert code == 0
    table = {r["identity_id"]: r for r in rows(out)}
    assert all(r["verdict"] == "pass" for r in table.values() if r["class"] == "FORCED")
    gji = table["I03-th3-jacobi"]
    assert gji["verdict"] == "reported" and float(gji["max_residual"]) > 0


def test_audit_heisenberg_curvature_row(capsys):
    code, out, _ = run(capsys, "audit", bundled("heisenberg"))
    table = {r["identity_id"]: r for r in rows(out)}
    assert code == 0 and float(table["I12-cc1-curvature"]["max_residual"]) <= 1e-8


def test_audit_seed_override(capsys):
    a = run(capsys, "audit", bundled("chi-q"), "--samples", 50)[1]
    b = run(capsys, "audit", bundled("chi-q"), "--samples", 50, "--seed", 99)[1]
    c = run(capsys, "audit", bundled("chi-q"), "--samples", 50, "--seed", 1)[1]
    assert a != b and a == c


def test_audit_forced_failure_exit(capsys):
    code, _, err = run(capsys, "audit", "tests/fixtures/bad-structural.ini")
    assert code == 4 and "I10-w-form" in err


def test_audit_unusable_exit(capsys, tmp_path):
    p = tmp_path / "deg.ini"
    p.write_text(
        '[manifold]\ndim = 2\nJ = canonical\n[frame]\nE2 = "0", "x1"\n[hamiltonian]\nH = "q1*p1"\n'
        '[audit]\nbox = -1e-10:1e-10, -1:1\nsamples = 20\npool = "q1", "p1", "q1*p1"\n'
    )
    assert run(capsys, "audit", p)[0] == 3


def test_audit_needs_section(capsys, tmp_path):
    assert run(capsys, "audit", scenario(tmp_path))[0] == 2


# -- simulate ----------------------------------------------------------------------------------


def test_simulate_oscillator_matches_cosine(capsys, tmp_path):
    out_path = tmp_path / "traj.csv"
    code, _, _ = run(capsys, "simulate", bundled("abelian"), "--out", out_path)
    assert code == 0
    table = rows(out_path.read_text())
    assert list(table[0])[:7] == ["t", "x1", "x2", "w", "H", "s", "I"]
    t = np.array([float(r["t"]) for r in table])
    q = np.array([float(r["x1"]) for r in table])
    assert len(t) == 10001
    assert np.abs(q - np.cos(t)).max() <= 1e-6


def test_simulate_chi_q_invariant(capsys):
    code, out, _ = run(capsys, "simulate", bundled("chi-q"))
    I = np.array([float(r["I"]) for r in rows(out)])
    assert code == 0 and np.ptp(I) <= 1e-7


def test_simulate_constant_H(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", scenario(tmp_path, H="2"))
    table = rows(out)
    assert code == 0
    assert {(r["x1"], r["x2"]) for r in table} == {("0.5", "0.25")}


def test_simulate_values_round_trip(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", scenario(tmp_path, chi="0.3*q1"))
    for r in rows(out)[:20]:
        for v in r.values():
            x = float(v)
            assert float(f"{x:.17g}") == x


def test_simulate_convention_flag(capsys, tmp_path):
    p = scenario(tmp_path)
    outs = {}
    for conv in CONVENTIONS:
        code, out, err = run(capsys, "simulate", p, "--convention", conv)
        assert code == 0 and f"convention={conv}" in err
        outs[conv] = out
    assert len(set(outs.values())) > 1
    assert run(capsys, "simulate", p, "--convention", "nope")[0] == 1


def test_simulate_failure_exit(capsys, tmp_path):
    # q' = q^2 from q0 = 0.5 blows up at t = 2
    assert run(capsys, "simulate", scenario(tmp_path, H="-p1*q1^2"))[0] == 0
    p = scenario(tmp_path, H="-p1*q1^2")
    p.write_text(p.read_text().replace("t1 = 1", "t1 = 3"))
    code, _, err = run(capsys, "simulate", p)
    assert code == 3 and "last good t" in err


# -- bracket -----------------------------------------------------------------------------------


def test_bracket_examples(capsys, tmp_path):
    code, out, _ = run(capsys, "bracket", scenario(tmp_path), "--f", "q1", "--g", "p1", "--at", "0.3,0.2")
    assert code == 0 and out.splitlines()[0] == "1"
    code, out, _ = run(capsys, "bracket", scenario(tmp_path), "--f", "q1*p1", "--g", "q1*p1", "--at", "0.3,0.2")
    assert out.splitlines()[0] == "0"
    code, out, _ = run(capsys, "bracket", scenario(tmp_path, chi="q1"), "--f", "q1", "--g", "p1", "--at", "0.5,2.0")
    lines = out.splitlines()
    assert float(lines[0]) == pytest.approx(1.5)
    assert lines[1:3] == ["ghs 1", "xchi 0.5"]
    assert lines[3].startswith("w ")


def test_bracket_bundled_chi_q(capsys):
    code, out, _ = run(capsys, "bracket", bundled("chi-q"), "--f", "q1", "--g", "p1", "--at", "0.5,2.0")
    assert float(out.splitlines()[0]) == pytest.approx(1.15)


def test_bracket_errors(capsys, tmp_path):
    p = scenario(tmp_path)
    assert run(capsys, "bracket", p, "--f", "q1 +", "--g", "p1", "--at", "0,0")[0] == 2
    assert run(capsys, "bracket", p, "--f", "q1", "--g", "p1", "--at", "0,0,0")[0] == 1
    assert run(capsys, "bracket", p, "--f", "q1", "--g", "p1", "--at", "a,b")[0] == 1


@pytest.mark.skipif(shutil.which("gchs") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["gchs", "check", str(bundled("chi-q"))], capture_output=True, text=True)
    assert proc.returncode == 0 and "chi = " in proc.stdout
