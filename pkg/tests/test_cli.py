import json

import pytest

from kropinalab.cli import main
from kropinalab.suite import SUITE_KEYS


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_flat_passes(capsys):
    code, out, _ = run(capsys, "verify", "flat-const", "--points", "3", "--no-timings")
    assert code == 0
    report = json.loads(out)
    assert [p["key"] for p in report["predicates"]] == SUITE_KEYS
    assert all(p["verdict"] for p in report["predicates"])
    assert report["points_evaluated"] == 3 and "timings" not in report


def test_verify_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert run(capsys, "verify", "shear", "--points", "3", "--seed", "11", "--no-timings",
                   "--out", str(path))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_classify_report(capsys):
    code, out, _ = run(capsys, "classify", "hopf-s3", "--points", "2")
    assert code == 0
    preds = {p["key"]: p for p in json.loads(out)["predicates"]}
    assert preds["T-wB"]["verdict"] and not preds["T-B"]["verdict"]
    assert preds["T-pscalar"]["fitted_scalars"][0] == pytest.approx(1.0)


def test_expected_mismatch_exit_code(capsys, tmp_path):
    from kropinalab.scenes import builtin, scene_to_ini
    sc = builtin("flat-const")
    sc.expected["T-B"] = False
    path = tmp_path / "flat.ini"
    path.write_text(scene_to_ini(sc))
    code, _, err = run(capsys, "verify", str(path), "--suite", "classify", "--points", "2")
    assert code == 1 and "mismatch: T-B" in err


def test_input_errors(capsys, tmp_path):
    assert run(capsys, "verify", "no-such-scene")[0] == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[scene]\ndim = 2\n[metric]\nh11 = \"1\"\nh22 = \"1\"\n[wind]\nW1 = \"2\"\n"
                   "W2 = \"0\"\n[sampling]\nbox = \"-1 1; -1 1\"\n")
    code, _, err = run(capsys, "verify", str(bad))
    assert code == 2 and "unit-length violation" in err
    assert run(capsys, "flow", "flat-const", "--x0", "0", "--y0", "0,1")[0] == 2


def test_numeric_failure_exit_code(capsys):
    code, out, err = run(capsys, "flow", "flat-const", "--x0", "0,0", "--y0", "0,1", "--T", "10",
                         "--dt", "0.5")
    assert code == 3 and "left the chart box" in err
    assert out.splitlines()[0] == "t,x1,x2,y1,y2,F"


def test_flow_csv(capsys):
    code, out, _ = run(capsys, "flow", "flat-const", "--x0", "0,0", "--y0", "1,1", "--T", "1",
                       "--dt", "0.25")
    lines = out.splitlines()
    assert code == 0 and len(lines) == 6
    assert [float(v) for v in lines[-1].split(",")] == pytest.approx([1, 1, 0, 1, 1, 1])


def test_geodesic_csv(capsys):
    code, out, _ = run(capsys, "geodesic", "prod-r-s2", "--x0", "0,1.5,0", "--y0", "1,0.2,0",
                       "--T", "0.02", "--dt", "0.01", "--mode", "riemann")
    assert code == 0
    assert out.splitlines()[0] == "t,x1,x2,x3,y1,y2,y3,F"


def test_list_coverage(capsys):
    code, out, _ = run(capsys, "verify", "--list-coverage")
    assert code == 0
    for key in SUITE_KEYS:
        assert key in out
