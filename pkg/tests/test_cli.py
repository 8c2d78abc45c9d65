"""End-to-end checks of the command line front end.

Everything goes through ``main(argv)`` so the tests cover argument wiring,
exit codes and the files left on disk.  Configuration strings start with a
dash, so they are passed after a ``--`` separator exactly as a user would.
"""

import json

import pytest

from mixcacc.cli import (
    EXIT_COLLISION,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_PARTIAL,
    main,
)
from mixcacc.topology import (
    connectivity_matrix,
    extended_connectivity_matrix,
    parse_config,
)

CSV_COLUMNS = "t,veh,lane,x,v,a,u,gap,ctrl,mode"


def test_matrix_prints_connectivity_table(capsys):
    assert main(["matrix", "--", "-PPPP"]) == EXIT_OK
    out = capsys.readouterr().out
    expected = connectivity_matrix(parse_config("-PPPP")).to_text()
    assert out == expected + "\n"


def test_matrix_extended_variants(capsys):
    assert main(["matrix", "--extended", "--", "GGGGG"]) == EXIT_OK
    plain = capsys.readouterr().out
    assert plain == extended_connectivity_matrix(parse_config("GGGGG")).to_text() + "\n"

    assert main(["matrix", "--extended", "--head-guided", "--", "-PP"]) == EXIT_OK
    guided = capsys.readouterr().out
    expected = extended_connectivity_matrix(
        parse_config("-PP"), head_externally_guided=True)
    assert guided == expected.to_text() + "\n"


def test_matrix_rejects_unknown_letter(capsys):
    assert main(["matrix", "--", "-PXP"]) == EXIT_CONFIG
    assert capsys.readouterr().err.startswith("error:")


def test_single_run_writes_trace_events_and_facts(tmp_path, capsys):
    code = main(["--out", str(tmp_path), "single", "--scenario", "braking",
                 "--", "-PL"])
    assert code == EXIT_OK
    assert "wrote" in capsys.readouterr().out

    stem = tmp_path / "single_run" / "-PL_braking"
    lines = (stem.with_suffix(".csv")).read_text().splitlines()
    assert lines[0].startswith("# spec_hash=")
    assert lines[1] == CSV_COLUMNS
    assert len(lines) > 3 * 600       # three vehicles, 60 s at 0.1 s records

    events = stem.parent / "-PL_braking_events.csv"
    assert events.read_text().splitlines()[0] == "t,kind,veh_a,veh_b,detail"

    facts = json.loads(stem.with_suffix(".json").read_text())
    assert facts["config"] == "-PL"
    assert facts["scenario"] == "braking"
    assert facts["collided"] is False
    assert set(facts["min_gap"]) == {"1", "2"}
    assert set(facts["peak_abs_accel"]) == {"1", "2"}
    assert facts["window"][0] < facts["window"][1]


def test_single_collision_sets_exit_code(tmp_path, capsys):
    """A parameter file that shrinks the constant-gap target until the
    platoon crashes must surface as the collision exit code."""
    params = tmp_path / "tight.ini"
    params.write_text("[path]\ndd = 0.6\n")
    code = main(["--params", str(params), "--out", str(tmp_path),
                 "single", "--scenario", "braking", "--", "-PP"])
    assert code == EXIT_COLLISION
    assert "collision" in capsys.readouterr().out

    facts = json.loads(
        (tmp_path / "single_run" / "-PP_braking.json").read_text())
    assert facts["collided"] is True
    assert "window" not in facts
    assert "min_gap" not in facts


def test_single_leaderless_config_is_a_config_error(tmp_path, capsys):
    code = main(["--out", str(tmp_path), "single", "--", "PPP"])
    assert code == EXIT_CONFIG
    assert capsys.readouterr().err.startswith("error:")


def test_malformed_params_file_is_a_config_error(tmp_path, capsys):
    params = tmp_path / "broken.ini"
    params.write_text("powertrain lag = not even a section\n")
    code = main(["--params", str(params), "--out", str(tmp_path),
                 "single", "--", "-PP"])
    assert code == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err
    assert not (tmp_path / "single_run").exists()


def test_ring_run_writes_counters_and_metrics(tmp_path, capsys):
    code = main(["--out", str(tmp_path), "ring", "--density", "5",
                 "--duration", "30", "--warmup", "15", "--seed", "2",
                 "--full-trace"])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "50 vehicles" in out
    assert "throughput" in out

    stem = tmp_path / "ring_run" / "seed2"
    counters = (stem.parent / "seed2_counters.csv").read_text().splitlines()
    assert counters[0] == "t,device,veh,lane"
    payload = json.loads(stem.with_suffix(".json").read_text())
    assert payload["n_vehicles"] == 50
    assert payload["throughput"] > 0.0
    trace_head = (stem.parent / "seed2_trace.csv").read_text().splitlines()[0]
    assert trace_head.startswith("# spec_hash=")


def test_sweep_single_then_report(tmp_path, capsys):
    code = main(["--out", str(tmp_path), "sweep-single", "-n", "2",
                 "--scenario", "braking"])
    assert code == EXIT_OK
    assert "3 mixed + 4 baseline reports" in capsys.readouterr().out

    assert main(["--out", str(tmp_path), "report"]) == EXIT_OK
    assert "wrote" in capsys.readouterr().out
    assert (tmp_path / "single" / "table.txt").exists()


def test_report_without_sweep_output_fails(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "report"]) == EXIT_CONFIG
    assert "no sweep output" in capsys.readouterr().err


def test_sweep_ring_dry_run_lists_the_grid(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "sweep-ring", "--dry-run"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "380 cells, 3800 runs"
    assert len(lines) == 1 + 380
    assert "d10-ACC" in lines


def test_sweep_ring_reports_partial_failure(tmp_path, capsys):
    """A density beyond the geometric packing limit fails every spawn."""
    code = main(["--out", str(tmp_path), "sweep-ring", "--density", "500",
                 "--repetitions", "1"])
    assert code == EXIT_PARTIAL
    assert "runs failed" in capsys.readouterr().out
    summary = json.loads((tmp_path / "ring" / "summary.json").read_text())
    assert len(summary["failed"]) == summary["cell_count"] == 38
