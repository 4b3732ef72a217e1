"""Command-line interface: formats, exit codes, end-to-end flows."""
import json

import numpy as np
import pytest

from rmtmusic.cli import main, read_complex_matrix, write_complex_matrix


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_complex_matrix_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    path = tmp_path / "m.txt"
    write_complex_matrix(path, m)
    assert path.read_text().startswith("# complex 3 5\n")
    back = read_complex_matrix(path)
    assert np.array_equal(back, m)  # 17 significant digits are bit-faithful


def test_support_mp_cluster(tmp_path, capsys):
    eigs = tmp_path / "e.txt"
    eigs.write_text("\n".join(["0.0"] * 20) + "\n")
    code, out, _ = run(capsys, "support", str(eigs), "--sigma2", "1", "--c", "0.25")
    assert code == 0
    doc = json.loads(out)
    assert doc["Q"] == 1 and doc["separated"]
    assert abs(doc["clusters"][0]["x_minus"] - 0.25) < 1e-9
    assert abs(doc["clusters"][0]["x_plus"] - 2.25) < 1e-9
    assert doc["contour"] is not None


def test_support_two_clusters(tmp_path, capsys):
    eigs = tmp_path / "e.txt"
    eigs.write_text(",".join(["0"] * 18 + ["5", "8"]) + "\n")
    code, out, _ = run(capsys, "support", str(eigs), "--sigma2", "1", "--c", "0.5")
    assert code == 0
    doc = json.loads(out)
    assert doc["Q"] >= 2
    assert {"a5", "a6", "separated", "association"} <= doc.keys()


def test_support_not_separated_exit_4(tmp_path, capsys):
    # a sub-threshold signal merges with the noise cluster
    eigs = tmp_path / "e.txt"
    eigs.write_text("\n".join(["0"] * 19 + ["0.6"]) + "\n")
    code, out, _ = run(capsys, "support", str(eigs), "--sigma2", "1", "--c", "0.5")
    assert code == 4
    doc = json.loads(out)  # verdicts still printed
    assert doc["separated"] is False


def test_support_malformed_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("1.0\nxyz\n")
    code, _, err = run(capsys, "support", str(bad), "--sigma2", "1", "--c", "0.25")
    assert code == 2
    assert ":2:" in err  # line number reported


def test_simulate_then_estimate(tmp_path, capsys):
    sig = tmp_path / "sig.txt"
    code, _, _ = run(capsys, "simulate", "--M", "40", "--N", "80",
                     "--angles=-0.5,0.9", "--powers", "5,8", "--sigma2", "1",
                     "--out", str(sig))
    assert code == 0
    code, out, _ = run(capsys, "estimate", str(sig), "--K", "2",
                       "--sigma2", "1", "--grid", "2000")
    assert code == 0
    doc = json.loads(out)
    est = np.sort(doc["estimates"])
    assert abs(est[0] + 0.5) < 0.05
    assert abs(est[1] - 0.9) < 0.05

    # determinism: repeat run is byte-identical
    code2, out2, _ = run(capsys, "estimate", str(sig), "--K", "2",
                         "--sigma2", "1", "--grid", "2000")
    assert out2 == out


def test_estimate_noiseless_exact(tmp_path, capsys):
    sig = tmp_path / "sig0.txt"
    run(capsys, "simulate", "--M", "40", "--N", "80", "--angles=-0.5,0.9",
        "--powers", "5,8", "--sigma2", "0", "--out", str(sig))
    code, out, _ = run(capsys, "estimate", str(sig), "--K", "2",
                       "--sigma2", "0", "--grid", "2000",
                       "--intervals=-0.8,-0.2,0.6,1.2")
    assert code == 0
    est = np.sort(json.loads(out)["estimates"])
    assert abs(est[0] + 0.5) < 1e-6
    assert abs(est[1] - 0.9) < 1e-6


def test_estimate_contour_bypass(tmp_path, capsys):
    sig = tmp_path / "sig.txt"
    run(capsys, "simulate", "--M", "40", "--N", "80", "--angles=-0.5,0.9",
        "--powers", "5,8", "--sigma2", "1", "--out", str(sig))
    code, out, _ = run(capsys, "estimate", str(sig), "--K", "2", "--sigma2", "1",
                       "--grid", "2000", "--contour", "0.05,4.5,7.0,12.0")
    assert code == 0


def test_estimate_pspec_csv(tmp_path, capsys):
    sig = tmp_path / "sig.txt"
    run(capsys, "simulate", "--M", "20", "--N", "40", "--angles", "0.4",
        "--sigma2", "1", "--powers", "6", "--out", str(sig))
    ps = tmp_path / "ps.csv"
    code, _, _ = run(capsys, "estimate", str(sig), "--K", "1", "--sigma2", "1",
                     "--grid", "500", "--out", str(tmp_path / "est.json"),
                     "--pspec-out", str(ps))
    assert code == 0
    lines = ps.read_text().splitlines()
    assert lines[0] == "theta,classical,improved"
    assert len(lines) == 501


def test_mc_minimal_config(tmp_path, capsys):
    cfg = {"angles": [-0.5], "powers": [6.0], "c": 0.5, "N_list": [24],
           "trials": 2, "sigma2": 1.0}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out_csv = tmp_path / "rep.csv"
    code, _, _ = run(capsys, "mc-escape", str(path), "--out", str(out_csv))
    assert code == 0
    lines = out_csv.read_text().splitlines()
    assert lines[0].startswith("experiment,N,M,K")
    assert len(lines) == 5  # four diagnostic metrics for the single N

    # identical rerun gives identical bytes
    out2 = tmp_path / "rep2.csv"
    run(capsys, "mc-escape", str(path), "--out", str(out2))
    assert out2.read_bytes() == out_csv.read_bytes()


def test_mc_unknown_field_json_pointer(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"angles": [0.1], "bogus": 3}))
    code, _, err = run(capsys, "mc-consistency", str(path))
    assert code == 2
    assert "/bogus" in err


def test_mc_missing_field(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"angles": [0.1]}))
    code, _, err = run(capsys, "mc-doa", str(path))
    assert code == 2
    assert "required field missing" in err
