import json
import re
import subprocess
import sys

import pytest

from rspace.cli import SUITES, main


CLOCK_FIELDS = re.compile(r'("timestamp": "[^"]*"|"wall_time": [0-9.e+-]+)')


def _mask_clock(text):
    return CLOCK_FIELDS.sub(lambda m: m.group(0).split(":")[0] + ": _", text)


def test_verify_list(capsys):
    assert main(["verify", "--list"]) == 0
    assert capsys.readouterr().out.split() == list(SUITES)


def test_verify_unknown_suite_is_usage_error(capsys):
    assert main(["verify", "--suite", "unknown"]) == 2
    assert "unknown suite" in capsys.readouterr().err


def test_verify_gamma_homomorphism(tmp_path, capsys):
    out = tmp_path / "deep" / "report.json"
    assert main(["verify", "--suite", "gamma-homomorphism", "--seed", "7", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["all_pass"] and doc["seed"] == 7 and doc["cases"]
    assert all(c["pass"] == (c["residual"] <= c["tolerance"]) for c in doc["cases"])
    assert "FAIL" not in capsys.readouterr().out


def test_verify_net_flatness(tmp_path):
    out = tmp_path / "flat.json"
    assert main(["verify", "--suite", "net-flatness", "--seed", "1", "--out", str(out)]) == 0
    assert max(c["residual"] for c in json.loads(out.read_text())["cases"]) <= 1e-8


@pytest.mark.parametrize("value", ["abc", "-1", "0"])
def test_bad_tolerance_environment(monkeypatch, value):
    monkeypatch.setenv("RSPACE_TOL", value)
    assert main(["verify", "--list"]) == 2


def test_net_files_and_darboux_metadata(tmp_path):
    out = tmp_path / "nets" / "net.json"
    code = main(["net", "--model", "conformal:2,1", "--size", "10x10", "--m", "1,-1",
                 "--darboux", "2.5", "--out", str(out)])
    assert code == 0
    net = json.loads(out.read_text())
    assert net["domain"] == [10, 10] and len(net["vertices"]) == 100
    dual = json.loads((tmp_path / "nets" / "net.darboux.json").read_text())
    meta = dual["metadata"]
    assert [step["step"] for step in meta["transforms"]] == ["lattice", "darboux"]
    assert meta["edge_cross_ratios"]


def test_net_obj_for_three_dimensional_conformal(tmp_path):
    out = tmp_path / "net.json"
    assert main(["net", "--model", "conformal:3,1", "--size", "3x4", "--m", "1,-1",
                 "--t-transform", "0.4", "--out", str(out)]) == 0
    obj = (tmp_path / "net.obj").read_text().splitlines()
    assert sum(line.startswith("v ") for line in obj) == 12
    assert json.loads(out.read_text())["metadata"]["transforms"][-1] == {"step": "t_transform", "s": 0.4}


@pytest.mark.parametrize("argv", [
    ["--size", "0x5", "--m", "1,-1"],
    ["--size", "ten", "--m", "1,-1"],
    ["--size", "4x4", "--m", "1"],
    ["--size", "4x4", "--m", "0,1"],
    ["--size", "4x4", "--m", "1,-1", "--darboux", "nan"],
])
def test_net_usage_errors(tmp_path, argv):
    assert main(["net", "--model", "conformal:2,1", "--out", str(tmp_path / "n.json")] + argv) == 2


def test_net_unknown_model(tmp_path):
    assert main(["net", "--model", "sphere", "--size", "4x4", "--m", "1,1",
                 "--out", str(tmp_path / "n.json")]) == 2


def test_kdv_backlund_from_zero(tmp_path, capsys):
    assert main(["kdv", "--scenario", "backlund-from-zero", "--mhat", "1", "--n", "512",
                 "--T", "0.002", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "backlund_from_zero.json").read_text())
    assert doc["soliton_sup_error"] <= 1e-6
    header = (tmp_path / "backlund_from_zero.csv").read_text().splitlines()[0]
    assert header == "x,t,p,a,p_hat"
    assert "conserved_drift" in capsys.readouterr().out


def test_kdv_miura_check_prints_ratio(tmp_path, capsys):
    assert main(["kdv", "--scenario", "miura-check", "--n", "128", "--L", "20",
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "refinement_ratio" in out and "sup_differences" in out


def test_kdv_warns_on_large_step(tmp_path, capsys):
    assert main(["kdv", "--scenario", "miura-check", "--n", "128", "--L", "20", "--dt", "0.01",
                 "--out", str(tmp_path)]) == 0
    assert "warning" in capsys.readouterr().err


def test_kdv_instability_exit_code(tmp_path, capsys):
    assert main(["kdv", "--scenario", "soliton", "--n", "256", "--dt", "0.01", "--T", "5",
                 "--out", str(tmp_path)]) == 1
    assert "step" in capsys.readouterr().err


def test_kdv_custom_profile(tmp_path):
    src = tmp_path / "p.csv"
    src.write_text("\n".join(f"{0.1 * k}" for k in range(32)) + "\n")
    assert main(["kdv", "--scenario", f"custom:{src}", "--L", "10", "--T", "0.001",
                 "--out", str(tmp_path / "o")]) == 0
    assert main(["kdv", "--scenario", f"custom:{tmp_path / 'missing.csv'}",
                 "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("argv", [["--scenario", "tsunami"], ["--scenario", "soliton", "--n", "8"],
                                  ["--scenario", "soliton", "--T", "-1"]])
def test_kdv_usage_errors(tmp_path, argv):
    assert main(["kdv", "--out", str(tmp_path)] + argv) == 2


def test_cross_ratio_command(capsys):
    assert main(["cross-ratio", "--model", "rp1", "1", "inf", "3", "0"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(3.0)
    assert main(["cross-ratio", "--model", "conformal:2,0", "--", "1,0", "-1,0", "3,0", "0,0"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(1.5)


def test_cross_ratio_off_circle_fails(capsys):
    assert main(["cross-ratio", "--model", "conformal:2,0", "1,0", "0,1", "3,0", "0,0"]) == 1
    assert "NotConcircular" in capsys.readouterr().err
    assert main(["cross-ratio", "--model", "rp1", "1", "2", "3"]) == 2


def _run_all(root):
    main(["verify", "--suite", "circles", "--seed", "3", "--out", str(root / "circles.json")])
    main(["net", "--model", "conformal:2,1", "--size", "5x5", "--m", "1,-1", "--darboux", "2.5",
          "--seed", "4", "--out", str(root / "net.json")])
    main(["kdv", "--scenario", "soliton", "--n", "64", "--L", "20", "--T", "0.01",
          "--out", str(root / "kdv")])


def test_repeated_runs_are_identical_outside_metadata(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    _run_all(first)
    _run_all(second)
    files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    assert [p.name for p in files] == ["circles.json", "soliton.csv", "soliton.json",
                                       "net.darboux.json", "net.json"]
    for rel in files:
        a, b = (first / rel).read_bytes(), (second / rel).read_bytes()
        if rel.suffix == ".json":
            a, b = _mask_clock(a.decode()).encode(), _mask_clock(b.decode()).encode()
            assert b"timestamp" in a
        assert a == b


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rspace.cli", "verify", "--list"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "circles" in proc.stdout
