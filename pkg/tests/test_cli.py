import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from wptconvex import RectifierParams
from wptconvex.cli import (
    EXIT_GRID_REFUSED,
    EXIT_NOT_CONVERGED,
    EXIT_VALIDATION,
    ScenarioFileError,
    dbm_to_watts,
    dump_scenario,
    load_scenario,
    main,
    watts_to_dbm,
)

GOLDEN = Path(__file__).parent / "data" / "golden_5rx.json"


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture
def scenario5(tmp_path):
    path = tmp_path / "s5.json"
    assert main(["gen-scenario", "--n-receivers", "5", "--seed", "3", "--out", str(path)]) == 0
    return path


def test_dbm_conversion():
    assert dbm_to_watts(10.0) == pytest.approx(0.01, rel=1e-15)
    assert dbm_to_watts(30.0) == 1.0
    assert watts_to_dbm(0.001) == pytest.approx(0.0, abs=1e-12)


def test_golden_round_trip_is_byte_identical():
    text = GOLDEN.read_text()
    sc = load_scenario(GOLDEN)
    assert dump_scenario(sc) == text
    assert sc.model.params.trunc_order == 6
    assert sc.model.waveform.lambda_factors == {2: 1.0, 4: 1.5, 6: 2.5}
    assert sc.q0 == pytest.approx(0.01, rel=1e-15)


def test_minimal_file_uses_defaults(tmp_path):
    path = _write(tmp_path, "min.json", '{"receivers": [[1.0, 2.0]], "q0_dbm": 10}\n')
    sc = load_scenario(path)
    assert sc.model.params == RectifierParams()
    assert sc.model.waveform.name == "cw"
    assert sc.box == (1.0, 1.0, 2.0, 2.0)
    assert sc.tx_power_dbm is None


def test_negative_factor_rejected_with_line(tmp_path):
    text = '{\n  "receivers": [[0, 0], [1, 1]],\n  "q0_dbm": 10,\n  "diode": {"trunc_order": 6},\n  "waveform": {"4": -1, "6": 2.5}\n}\n'
    path = _write(tmp_path, "bad.json", text)
    with pytest.raises(ScenarioFileError, match=r"bad\.json:5: .*lambda_4"):
        load_scenario(path)
    assert main(["position", "--scenario", str(path)]) == EXIT_VALIDATION


@pytest.mark.parametrize(
    "text, line, needle",
    [
        ('{\n  "receivers": [[0, 0]],\n  "q0_dbm": 10,\n  "colour": "red"\n}', 4, "unknown field 'colour'"),
        ('{\n  "receivers": [[0, 0]],\n  "q0_dbm": 10,\n  "diode": {\n    "r_load": -5\n  }\n}', 5, "r_load"),
        ('{\n  "receivers": [[0, 0]],\n  "q0_dbm": 10,\n  "diode": {"n": 0}\n}', 4, "n_ideality"),
        ('{\n  "receivers": [[0, 0], [3, 3]],\n  "q0_dbm": 10,\n  "box": [0, 1, 0, 1]\n}', 4, "box"),
        ('{\n  "receivers": [[0, 0, 1]],\n  "q0_dbm": 10\n}', 2, "receivers"),
        ('{\n  "receivers": [[0, 0]],\n  "q0_dbm": "ten"\n}', 3, "q0_dbm"),
        ('{\n  "receivers": [[0, 0]],\n  "q0_dbm": 10,\n}', 4, ""),
    ],
)
def test_invalid_files_are_line_anchored(tmp_path, text, line, needle):
    path = _write(tmp_path, "s.json", text)
    with pytest.raises(ScenarioFileError) as info:
        load_scenario(path)
    msg = str(info.value)
    assert msg.startswith(f"{path}:{line}:")
    assert needle in msg


def test_missing_required_fields(tmp_path):
    with pytest.raises(ScenarioFileError, match="q0_dbm"):
        load_scenario(_write(tmp_path, "a.json", '{"receivers": [[0, 0]]}'))
    with pytest.raises(ScenarioFileError, match="receivers"):
        load_scenario(_write(tmp_path, "b.json", '{"q0_dbm": 1}'))


def test_error_record_on_stderr(tmp_path, capsys):
    path = _write(tmp_path, "s.json", '{"receivers": [[0, 0]], "q0_dbm": 10, "extra": 1}')
    assert main(["brute", "--scenario", str(path)]) == EXIT_VALIDATION
    record = json.loads(capsys.readouterr().err)
    assert record["error"] == "validation_error"
    assert record["exit_code"] == EXIT_VALIDATION
    assert "extra" in record["message"]


def test_missing_file_is_validation_error(tmp_path):
    assert main(["position", "--scenario", str(tmp_path / "nope.json")]) == EXIT_VALIDATION


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as info:
        main(["curve", "--bogus"])
    assert info.value.code == 2


def test_curve_gaussian_monotone(tmp_path):
    out = tmp_path / "curve.csv"
    assert main(["curve", "--waveform", "gaussian", "--q-min", "1e-6", "--q-max", "1", "--points", "200", "--out", str(out)]) == 0
    header, data = _read_csv(out)
    assert header == ["q_rf_w", "u_inv_w", "i_out_a", "p_dc_w"]
    assert data.shape == (200, 4)
    assert data[0, 0] == pytest.approx(1e-6) and data[-1, 0] == pytest.approx(1.0)
    assert np.all(np.diff(data[:, 3]) > 0)
    assert np.allclose(data[:, 1] * data[:, 0], 1.0, rtol=1e-15)


def test_check_convexity_columns(tmp_path):
    out, summ = tmp_path / "cert.csv", tmp_path / "cert.json"
    assert main(["check-convexity", "--points", "50", "--out", str(out), "--summary", str(summ)]) == 0
    header, data = _read_csv(out)
    assert header == ["q_rf_w", "u_inv_w", "i_out_a", "p_dc_w", "second_diff", "cond9", "cond14"]
    assert data.shape == (50, 7)
    assert np.all(np.diff(data[:, 1]) > 0)
    report = json.loads(summ.read_text())
    assert report["report"]["status"] == "certified convex"
    assert report["config"]["diode"]["r_load"] == 5000.0


def test_check_convexity_summary_defaults_to_stderr(tmp_path, capsys):
    assert main(["check-convexity", "--points", "20", "--out", str(tmp_path / "c.csv")]) == 0
    assert json.loads(capsys.readouterr().err)["report"]["points"] == 20


def test_brute_half_metre_grid(tmp_path):
    path = _write(tmp_path, "s.json", json.dumps({"receivers": [[0.5, 0.5], [4.5, 1.0], [2.0, 4.0]], "q0_dbm": 10, "box": [0, 5, 0, 5]}))
    out = tmp_path / "grid.json"
    assert main(["brute", "--scenario", str(path), "--resolution", "0.5", "--out", str(out)]) == 0
    result = json.loads(out.read_text())["result"]
    assert (result["nx"], result["ny"]) == (11, 11)
    assert result["cells"] == 121


def test_brute_refusal_exit_code(scenario5):
    assert main(["brute", "--scenario", str(scenario5), "--resolution", "1e-5"]) == EXIT_GRID_REFUSED


def test_position_not_converged_exit_code(scenario5, tmp_path):
    out = tmp_path / "trace.json"
    code = main(["position", "--scenario", str(scenario5), "--init", "near-receiver:0", "--max-iters", "1", "--out", str(out)])
    assert code == EXIT_NOT_CONVERGED
    trace = json.loads(out.read_text())["trace"]
    assert trace["stop_reason"] == "max_iters"


def test_position_init_forms(scenario5, tmp_path):
    finals = []
    for init in ["centroid", "near-receiver:2", "1.0,1.0"]:
        out = tmp_path / "t.json"
        assert main(["position", "--scenario", str(scenario5), "--init", init, "--out", str(out)]) == 0
        final = json.loads(out.read_text())["trace"]["final"]
        finals.append([final["x"], final["y"]])
    assert np.ptp(np.array(finals), axis=0).max() <= 1e-4
    assert main(["position", "--scenario", str(scenario5), "--init", "north"]) == EXIT_VALIDATION


def test_compare_report(scenario5, tmp_path):
    out = tmp_path / "cmp.json"
    assert main(["compare", "--scenario", str(scenario5), "--resolution", "0.05", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert set(report) == {"config", "ini_good", "ini_bad", "exhaustive", "summary"}
    assert report["summary"]["final_distance_m"] <= 1e-4
    assert report["summary"]["rel_gap_to_exhaustive"] <= 0
    assert report["config"]["scenario"]["receivers"] == json.loads(scenario5.read_text())["receivers"]
    objs = [report["ini_bad"]["init"]["objective_w"]] + [it["objective_w"] for it in report["ini_bad"]["iterations"]]
    assert all(b >= a for a, b in zip(objs, objs[1:]))


def test_outputs_are_deterministic(tmp_path):
    runs = []
    for k in range(2):
        d = tmp_path / str(k)
        d.mkdir()
        s = d / "s.json"
        main(["gen-scenario", "--n-receivers", "4", "--seed", "9", "--out", str(s)])
        main(["compare", "--scenario", str(s), "--resolution", "0.1", "--out", str(d / "cmp.json")])
        main(["curve", "--points", "30", "--out", str(d / "c.csv")])
        runs.append([(d / n).read_bytes() for n in ("s.json", "cmp.json", "c.csv")])
    # the scenario path differs between runs, so compare reports without it
    a, b = (json.loads(r[1]) for r in runs)
    del a["config"]["scenario_path"], b["config"]["scenario_path"]
    assert a == b
    assert runs[0][0] == runs[1][0] and runs[0][2] == runs[1][2]


def test_overrides_reach_the_model(scenario5, tmp_path):
    out = tmp_path / "t.json"
    assert main(["position", "--scenario", str(scenario5), "--r-load", "2000", "--q0-dbm", "0", "--out", str(out)]) == 0
    cfg = json.loads(out.read_text())["config"]["scenario"]
    assert cfg["diode"]["r_load"] == 2000.0
    assert cfg["q0_dbm"] == 0.0


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "wptconvex", "brute", "--scenario", str(GOLDEN), "--resolution", "1e-6"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == EXIT_GRID_REFUSED
    assert json.loads(proc.stderr)["error"] == "grid_refused"
