import csv
import io
import json
import math

import numpy as np
import pytest

from gcfk.errors import InvalidConfig, IoFailure, ParseError, RangeError
from gcfk.experiments.cli import main, run_experiment
from gcfk.experiments.config import DEFAULTS, default_config, validate_config
from gcfk.experiments.io import RunManifest, Table, emit_csv, format_value, render_csv, verify_manifest
from gcfk.experiments.runners import FIGURES, RUNNERS


def read_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


# --- config --------------------------------------------------------------------


def test_every_experiment_has_runner_and_figure():
    assert set(DEFAULTS) == set(RUNNERS) == set(FIGURES)
    assert len(DEFAULTS) == 9


def test_minimal_file_fills_defaults():
    cfg = validate_config('experiment = "power_contours"\nseed = 3\n')
    assert cfg.experiment_id == "power_contours"
    assert cfg.seed == 3
    assert cfg.parameters == DEFAULTS["power_contours"]


def test_override_and_digest():
    a = validate_config("seed = 1\n[mix]\npi = [0.0, 0.5]\n", "mechanism_grid")
    assert a.parameters["mix"]["pi"] == [0.0, 0.5]
    assert a.parameters["mix"]["eta"] == 1.0
    b = validate_config("seed = 1\n[mix]\npi = [0.0, 0.5]\n", "mechanism_grid")
    assert a.digest() == b.digest()
    assert a.digest() != default_config("mechanism_grid", 1).digest()


def test_integer_promoted_to_float():
    cfg = validate_config("seed = 1\nalpha_max = 3\n", "static_threshold")
    assert cfg.parameters["alpha_max"] == 3.0 and isinstance(cfg.parameters["alpha_max"], float)


def test_pi_out_of_range_names_key():
    with pytest.raises(RangeError) as err:
        validate_config("seed = 1\n[mix]\npi = [0.2, 1.5]\n", "mechanism_grid")
    assert err.value.path == "mix.pi"


def test_unknown_key_strict_and_lax():
    with pytest.raises(InvalidConfig) as err:
        validate_config("seed = 1\n[mix]\nfoo = 2\n", "mechanism_grid")
    assert err.value.path == "mix.foo"
    cfg = validate_config("seed = 1\n[mix]\nfoo = 2\n", "mechanism_grid", strict=False)
    assert cfg.warnings and "mix.foo" in cfg.warnings[0]


def test_parse_error_location():
    with pytest.raises(ParseError) as err:
        validate_config("seed = 1\nalpha_max = = 2\n", "static_threshold")
    assert err.value.line == 2
    assert err.value.column is not None


def test_seed_rules():
    with pytest.raises(InvalidConfig):
        validate_config("", "static_threshold")
    with pytest.raises(RangeError):
        validate_config("", "static_threshold", seed=2**64)
    with pytest.raises(RangeError):
        validate_config("", "static_threshold", seed=-1)
    assert validate_config("", "static_threshold", seed=2**64 - 1).seed == 2**64 - 1
    assert validate_config("seed = 5", "static_threshold", seed=9).seed == 9


def test_type_and_consistency_errors():
    with pytest.raises(InvalidConfig):
        validate_config('seed = 1\nalpha_points = "many"\n', "static_threshold")
    with pytest.raises(RangeError):
        validate_config("seed = 1\ntau_min = 2.0\n", "alpha_min_contour")
    with pytest.raises(RangeError):
        validate_config("seed = 1\n[game]\nu = [0.0, 0.0, 0.0]\n", "static_threshold")
    with pytest.raises(InvalidConfig):
        validate_config('experiment = "nope"\nseed = 1\n')
    with pytest.raises(InvalidConfig):
        validate_config('experiment = "power_contours"\nseed = 1\n', "static_threshold")
    with pytest.raises(RangeError):
        validate_config("seed = 1\ndraws = 10\n", "coalition_heatmap")


# --- io ------------------------------------------------------------------------


def test_format_value():
    assert format_value(0.1) == "0.1"
    assert format_value(1 / 3) == repr(1 / 3)
    assert float(format_value(1 / 3)) == 1 / 3
    assert format_value(-0.0) == "0.0"
    assert format_value(math.inf) == "inf"
    assert format_value(math.nan) == "nan"
    assert format_value(np.float64(2.5)) == "2.5"
    assert format_value(np.int64(4)) == "4"
    assert format_value(True) == "true"
    assert format_value("a,b") == '"a,b"'


def test_emit_csv_deterministic(tmp_path):
    t = Table(("x", "y"), [(1, 0.5), (2, 1 / 3)], "demo")
    d1 = emit_csv(t, tmp_path / "a.csv")
    d2 = emit_csv(t, tmp_path / "b.csv")
    assert d1 == d2
    raw = (tmp_path / "a.csv").read_bytes()
    assert b"\r" not in raw
    assert raw.decode().splitlines()[:2] == ["# demo", "x,y"]


def test_empty_table_is_header_only(tmp_path):
    emit_csv(Table(("a", "b")), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "a,b\n"


def test_table_rejects_ragged_rows():
    with pytest.raises(ValueError):
        Table(("a", "b"), [(1,)])
    with pytest.raises(ValueError):
        Table(("a",)).append(1, 2)


def test_emit_csv_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoFailure):
        emit_csv(Table(("a",)), blocker / "sub" / "x.csv")


def test_manifest_round_trip():
    m = RunManifest("x", "ab", 2**64 - 1, "0.1.0", {"a.csv": "00"}, 1.5, 4)
    assert RunManifest.from_json(m.to_json()) == m


# --- runners -------------------------------------------------------------------


def test_static_threshold_aligned_rows_vanish(tmp_path):
    run_experiment(default_config("static_threshold", 1), tmp_path)
    rows = read_rows(tmp_path / "static_threshold_a.csv")
    assert {r["theta_deg"] for r in rows} == {"0.0", "30.0", "60.0", "90.0"}
    for r in rows:
        if r["theta_deg"] == "0.0":
            assert float(r["index"]) <= 1e-9
    by_theta = {}
    for r in rows:
        by_theta.setdefault(r["theta_deg"], []).append(float(r["index"]))
    for vals in by_theta.values():
        assert all(b <= a + 1e-10 for a, b in zip(vals, vals[1:]))
    assert by_theta["90.0"][0] > by_theta["30.0"][0]


def test_dynamics_trajectories_saturate(tmp_path):
    run_experiment(default_config("dynamics_trajectories", 1), tmp_path)
    rows = read_rows(tmp_path / "dynamics_trajectories_a.csv")
    final = {}
    for r in rows:
        final[float(r["p0"])] = float(r["p"])
    for p0, p in final.items():
        if p0 < 0.5:
            assert p < 1e-6
        elif p0 > 0.5:
            assert p > 1 - 1e-6
        else:
            assert p == 0.5


def test_heatmap_shape_and_boundary(tmp_path):
    run_experiment(default_config("coalition_heatmap", 11), tmp_path)
    rows = read_rows(tmp_path / "coalition_heatmap.csv")
    assert len(rows) == 51 * 51
    frac = np.array([float(r["cooperative_fraction"]) for r in rows]).reshape(51, 51)
    assert np.all(np.diff(frac, axis=1) <= 0)
    assert np.all(np.diff(frac, axis=0) >= -2 / math.sqrt(500))
    b = np.array([float(r["alpha_half"]) for r in read_rows(tmp_path / "coalition_heatmap_boundary.csv")])
    b = b[~np.isnan(b)]
    assert b.size > 1 and np.all(np.diff(b) >= 0)


def test_sweep_transition_file(tmp_path):
    run_experiment(default_config("exit_fixedpoint_sweeps", 1), tmp_path)
    (row,) = read_rows(tmp_path / "exit_fixedpoint_sweeps_b_transitions.csv")
    assert float(row["lower"]) < 0.6 <= float(row["upper"]) + 1e-12


def test_csv_header_names_figure(tmp_path):
    cfg = validate_config("seed = 1\ninstances = 3\n", "audit_greedy_bench")
    m = run_experiment(cfg, tmp_path)
    for name in m.outputs:
        first = (tmp_path / name).read_text().splitlines()[0]
        assert first.startswith("# experiment=audit_greedy_bench") and "reproduces=" in first


def test_workers_do_not_change_output(tmp_path):
    cfg = validate_config("seed = 3\ninstances = 12\n", "audit_greedy_bench")
    one = run_experiment(cfg, tmp_path / "one", workers=1)
    four = run_experiment(cfg, tmp_path / "four", workers=4)
    assert one.outputs == four.outputs
    assert one.config_digest == four.config_digest


def test_seed_changes_random_outputs(tmp_path):
    a = run_experiment(validate_config("seed = 1\ninstances = 5\n", "audit_greedy_bench"), tmp_path / "a")
    b = run_experiment(validate_config("seed = 2\ninstances = 5\n", "audit_greedy_bench"), tmp_path / "b")
    assert a.outputs != b.outputs


# --- cli -----------------------------------------------------------------------


def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for exp in DEFAULTS:
        assert exp in out


def test_cli_run_and_verify(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "power_contours", "--seed", "5", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment_id"] == "power_contours"
    assert manifest["seed"] == "5"
    assert main(["verify", str(out / "manifest.json")]) == 0
    with open(out / "power_contours_a.csv", "a") as fh:
        fh.write("tampered\n")
    assert main(["verify", str(out)]) == 1
    assert verify_manifest(out)


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[mix]\npi = [1.5]\n")
    assert main(["run", "mechanism_grid", "--config", str(bad), "--seed", "1", "--out", str(tmp_path / "o")]) == 2
    assert "mix.pi" in capsys.readouterr().err
    assert main(["run", "mechanism_grid", "--out", str(tmp_path / "o")]) == 2
    assert "seed" in capsys.readouterr().err
    extra = tmp_path / "extra.toml"
    extra.write_text("seed = 4\nunknown = 1\n")
    assert main(["run", "power_contours", "--config", str(extra), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "power_contours", "--config", str(extra), "--lax", "--out", str(tmp_path / "o")]) == 0
    assert main(["run", "power_contours", "--config", str(tmp_path / "missing.toml"), "--seed", "1"]) == 1


def test_cli_env_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("GCFK_OUT", str(tmp_path / "root"))
    assert main(["run", "power_contours", "--seed", "1"]) == 0
    assert (tmp_path / "root" / "power_contours" / "manifest.json").exists()
