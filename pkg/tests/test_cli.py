import csv
import filecmp
import json
import os
from importlib import resources
from types import SimpleNamespace

import jsonschema
import numpy as np
import pytest

from tclfreq.cli import (EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, OUTPUT_ENV,
                         TRACE_HEADER, main, trace_rows, write_trace)

SHORT = ["--duration", "120", "--samples", "100"]


def synthetic_trace(duration=1800.0, dt=0.02):
    t = dt * np.arange(int(round(duration / dt)) + 1)
    rng = np.random.default_rng(1)
    cols = {k: rng.standard_normal(t.size) for k in
            ("rocof", "p_boilers", "p_fridges", "p_uncontrolled", "p_primary", "p_secondary",
             "alpha")}
    return SimpleNamespace(time=t, freq=50 + 0.01 * rng.standard_normal(t.size), **cols)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_header_is_exact(tmp_path):
    path = tmp_path / "t.csv"
    write_trace(synthetic_trace(10.0), str(path), 1)
    first = path.read_text().split("\n", 1)[0]
    assert first == ("time_s,freq_hz,rocof_hz_s,p_boilers_mw,p_fridges_mw,p_uncontrolled_mw,"
                     "p_primary_mw,p_secondary_mw,alpha")
    assert first == TRACE_HEADER


def test_row_counts(tmp_path):
    tr = synthetic_trace()
    path = tmp_path / "t.csv"
    assert write_trace(tr, str(path), 1) == 90001
    assert len(read_csv(path)) == 90002
    assert len(trace_rows(tr, 50)) == 1801
    times = tr.time[trace_rows(tr, 50)]
    assert np.allclose(np.diff(times), 1.0)
    # default: full resolution for 60 s after the event, 1 s elsewhere
    assert len(trace_rows(tr, None, 60.0)) == 1801 + 3001 - 61
    with pytest.raises(ValueError):
        trace_rows(tr, 0)


def test_values_round_trip_exactly(tmp_path):
    tr = synthetic_trace(5.0)
    path = tmp_path / "t.csv"
    write_trace(tr, str(path), 1)
    rows = read_csv(path)[1:]
    got = np.array([[float(x) for x in r] for r in rows])
    assert np.array_equal(got[:, 1], tr.freq)
    assert np.array_equal(got[:, 8], tr.alpha)


def test_write_error_carries_path(tmp_path):
    target = tmp_path / "missing" / "t.csv"
    with pytest.raises(OSError, match="missing"):
        write_trace(synthetic_trace(1.0), str(target), 1)


def summary_schema():
    text = resources.files("tclfreq").joinpath("summary.schema.json").read_text()
    return json.loads(text)


def test_run_writes_trace_and_valid_summary(tmp_path, capsys):
    code = main(["run", "--scenario", "A", "--event", "over", "--control", "si-pfr",
                 "--seed", "42", "--out", str(tmp_path)] + SHORT)
    assert code == EXIT_OK
    files = sorted(os.listdir(tmp_path))
    assert files == ["A_over_si-pfr_seed42.csv", "A_over_si-pfr_seed42.json"]
    summary = json.loads((tmp_path / files[1]).read_text())
    jsonschema.validate(summary, summary_schema())
    # below the paired no-control peak
    assert summary["gains"]["k_delta_f_max"] > 0
    assert set(summary["cross_check"]["delta"]) == {"nominal_power", "start_up_time",
                                                    "regulating_energy"}
    assert "A_over_si-pfr" in capsys.readouterr().out


def test_validate_prints_deltas(capsys):
    assert main(["validate", "--scenario", "B"]) == EXIT_OK
    out = capsys.readouterr().out
    t_a = [line for line in out.splitlines() if "T_a" in line][0].split()
    assert t_a[0] == "B"
    comp, ref, delta = map(float, t_a[-3:])
    assert ref == 8.73 and delta == pytest.approx(comp - ref, abs=1e-3)
    assert "E_r [MW/Hz]" in out


def test_run_is_byte_identical(tmp_path):
    args = ["run", "--scenario", "C", "--event", "under", "--control", "pfr", "--seed", "3"]
    assert main(args + SHORT + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + SHORT + ["--out", str(tmp_path / "b")]) == EXIT_OK
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert cmp.left_list == cmp.right_list and len(cmp.left_list) == 2
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", cmp.common_files,
                                           shallow=False)
    assert not mismatch and not errors


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["run", "--scenario", "A", "--decimation", "50"] + SHORT) == EXIT_OK
    rows = read_csv(tmp_path / "env" / "A_over_none_seed0.csv")
    assert len(rows) == 1 + 121


def test_custom_event_magnitude(tmp_path):
    assert main(["run", "--scenario", "A", "--event", "-20", "--out", str(tmp_path)]
                + SHORT) == EXIT_OK
    summary = json.loads((tmp_path / "A_-20MW_none_seed0.json").read_text())
    assert summary["event"]["kind"] == "under" and summary["event"]["magnitude_mw"] == 20


@pytest.mark.parametrize("argv", [
    ["run", "--scenario", "Z"],
    ["run", "--scenario", "A", "--decimation", "0"],
    ["run", "--scenario", "A", "--event", "sideways"],
    ["run", "--scenario", "A", "--control", "droop"],
    ["run", "--scenario", "A", "--duration", "80"],
    ["run"],
    ["sweep", "--factors", "1,-2"],
    ["bogus"],
])
def test_usage_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] != "bogus" else argv) == EXIT_USAGE


def test_unwritable_output_is_usage_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--scenario", "A", "--out", str(blocker)] + SHORT) == EXIT_USAGE


def test_config_error_exit(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("base: A\nunits:\n  SARLUX G3:\n    droop: 0\n")
    assert main(["run", "--scenario", str(cfg), "--out", str(tmp_path)] + SHORT) == EXIT_CONFIG
    assert "line 3" in capsys.readouterr().err


def test_divergence_exit(tmp_path, capsys):
    code = main(["run", "--scenario", "A", "--event=-5000", "--out", str(tmp_path)] + SHORT)
    assert code == EXIT_NUMERIC
    assert "exceeded" in capsys.readouterr().err


def test_io_error_exit(tmp_path):
    (tmp_path / "A_over_none_seed0.csv").mkdir()
    assert main(["run", "--scenario", "A", "--out", str(tmp_path)] + SHORT) == EXIT_IO
