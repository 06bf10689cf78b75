"""Tests for the JSON config front end and its CSV artifacts."""

import json

import pytest

from gossipfield.cli import (ConfigError, RunConfig, build_initial,
                             build_kernel, dispatch, main, parse_config,
                             serialize)
from gossipfield.kernels import BoundedConfidence, Constant, EnvBump

MINIMAL = {
    "kernel": {"alpha": 1.0, "internal": {"type": "constant", "omega": 0.5}},
    "initial": {"type": "uniform", "a": 0.0, "b": 1.0},
}

ENV_STYLE = {
    "kernel": {"alpha": 0.5,
               "internal": {"type": "constant", "omega": 0.5},
               "external": {"type": "constant", "omega": 0.5},
               "environment": {"type": "bump"}},
    "initial": {"type": "uniform", "a": 0.0, "b": 10.0},
}


def cfg_of(d):
    return parse_config(json.dumps(d).encode())


# ---------------------------------------------------------------------------
# parsing and validation


def test_minimal_config_defaults():
    cfg = cfg_of(MINIMAL)
    assert cfg.seed == 0
    assert cfg.data["simulate"]["n"] == 1000
    assert cfg.data["simulate"]["horizon"] == 10.0
    assert cfg.data["meanfield"]["dt"] == 0.01
    assert cfg.data["meanfield"]["m"] == 1000
    assert cfg.data["moments"]["K"] == 8


def test_alpha_out_of_range_names_field():
    bad = json.loads(json.dumps(MINIMAL))
    bad["kernel"]["alpha"] = 1.5
    with pytest.raises(ConfigError) as err:
        cfg_of(bad)
    assert any("alpha" in v for v in err.value.violations)


def test_environment_required_when_alpha_below_one():
    bad = json.loads(json.dumps(MINIMAL))
    bad["kernel"]["alpha"] = 0.5
    with pytest.raises(ConfigError) as err:
        cfg_of(bad)
    assert any("environment required" in v for v in err.value.violations)


def test_all_violations_collected():
    bad = {"kernel": {"alpha": 2.0,
                      "internal": {"type": "constant", "omega": -1.0}},
           "initial": {"type": "uniform", "a": 1.0, "b": 0.0},
           "simulate": {"n": 1}}
    with pytest.raises(ConfigError) as err:
        cfg_of(bad)
    assert len(err.value.violations) >= 4


def test_unknown_keys_rejected():
    bad = json.loads(json.dumps(MINIMAL))
    bad["extra_section"] = {}
    bad["simulate"] = {"n": 100, "bogus": 1}
    with pytest.raises(ConfigError) as err:
        cfg_of(bad)
    text = "; ".join(err.value.violations)
    assert "extra_section" in text and "bogus" in text


def test_malformed_json_reports_byte_offset():
    with pytest.raises(ConfigError, match="malformed JSON at byte"):
        parse_config(b'{"kernel": }')


def test_round_trip():
    for d in (MINIMAL, ENV_STYLE):
        cfg = cfg_of(d)
        assert parse_config(serialize(cfg)) == cfg


def test_config_hash_stable_under_key_order():
    reordered = {"initial": MINIMAL["initial"], "kernel": MINIMAL["kernel"]}
    assert cfg_of(MINIMAL).config_hash() == cfg_of(reordered).config_hash()


def test_build_kernel_and_initial():
    k = build_kernel(cfg_of(ENV_STYLE))
    assert k.alpha == 0.5
    assert isinstance(k.internal, Constant)
    assert isinstance(k.environment, EnvBump)
    init = build_initial(cfg_of(ENV_STYLE))
    assert (init.a, init.b) == (0.0, 10.0)


def test_build_bounded_confidence():
    d = json.loads(json.dumps(MINIMAL))
    d["kernel"]["internal"] = {"type": "bounded_confidence",
                               "omega0": 0.5, "radius": 1.0}
    k = build_kernel(cfg_of(d))
    assert isinstance(k.internal, BoundedConfidence)


# ---------------------------------------------------------------------------
# dispatch and artifacts


def write_cfg(tmp_path, d):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(d))
    return p


def quick_sim_cfg():
    d = json.loads(json.dumps(MINIMAL))
    d["simulate"] = {"n": 50, "horizon": 1.0, "snapshot_times": [0.5, 1.0]}
    d["meanfield"] = {"m": 100, "dt": 0.05, "horizon": 1.0,
                      "snapshot_times": [1.0]}
    d["moments"] = {"K": 3, "T": 1.0, "dt": 0.005}
    return d


def test_simulate_artifact(tmp_path):
    cfg = cfg_of(quick_sim_cfg())
    paths = dispatch(cfg, "simulate", out_dir=tmp_path)
    text = paths[0].read_text()
    lines = text.splitlines()
    assert lines[0].startswith("# config_hash=")
    assert f"seed={cfg.seed}" in lines[0]
    assert lines[1] == "t,position,mass"
    assert len(lines) == 2 + 2 * 50


def test_meanfield_artifacts(tmp_path):
    cfg = cfg_of(quick_sim_cfg())
    paths = dispatch(cfg, "meanfield", out_dir=tmp_path)
    assert [p.name for p in paths] == ["meanfield_t1.csv"]
    lines = paths[0].read_text().splitlines()
    assert lines[1] == "t,position,mass"
    assert len(lines) == 2 + 100


def test_moments_artifacts(tmp_path):
    d = quick_sim_cfg()
    d["kernel"] = ENV_STYLE["kernel"]
    d["initial"] = ENV_STYLE["initial"]
    cfg = cfg_of(d)
    paths = dispatch(cfg, "moments", out_dir=tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["limits.csv", "moments.csv"]
    limits = [line for line in paths[1].read_text().splitlines()
              if not line.startswith("#")]
    assert limits[0] == "k,value"
    k1 = float(limits[1].split(",")[1])
    assert k1 == pytest.approx(3.0, abs=1e-8)


def test_compare_artifact(tmp_path):
    cfg = cfg_of(quick_sim_cfg())
    paths = dispatch(cfg, "compare", out_dir=tmp_path)
    lines = paths[0].read_text().splitlines()
    assert lines[1] == "t,w1"
    assert len(lines) == 3  # header comment + header + one snapshot


def test_rerun_byte_identical(tmp_path):
    cfg = cfg_of(quick_sim_cfg())
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    for cmd in ("simulate", "meanfield", "moments"):
        p1 = dispatch(cfg, cmd, out_dir=out1)
        p2 = dispatch(cfg, cmd, out_dir=out2)
        for a, b in zip(p1, p2):
            assert a.read_bytes() == b.read_bytes()


def test_unknown_subcommand_exits_nonzero(tmp_path, capsys):
    p = write_cfg(tmp_path, MINIMAL)
    assert main(["frobnicate", "--config", str(p)]) != 0


def test_main_config_error_exit_code(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"kernel": {"alpha": 9}}')
    assert main(["simulate", "--config", str(p)]) == 1


def test_main_missing_file_exit_code(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "absent.json")]) == 1


def test_main_success_and_seed_override(tmp_path, capsys):
    p = write_cfg(tmp_path, quick_sim_cfg())
    out = tmp_path / "art"
    assert main(["simulate", "--config", str(p), "--out", str(out),
                 "--seed", "5"]) == 0
    captured = capsys.readouterr()
    assert "trajectory.csv" in captured.out
    assert "seed=5" in (out / "trajectory.csv").read_text().splitlines()[0]
