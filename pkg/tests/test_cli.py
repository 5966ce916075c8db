from __future__ import annotations

import json
import os

import pytest

from inclusafe import scenarios
from inclusafe.cli import COMMANDS, ConfigError, load_config, main, run


def _write_cfg(tmp_path, cfg, name="scenario.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


# ----------------------------------------------------------------------- #
# config loading
def test_load_config_accepts_builtin_names():
    for name in scenarios.BUILTIN:
        cfg = load_config(name)
        assert cfg["name"] == name


def test_load_config_reads_files(tmp_path):
    path = _write_cfg(tmp_path, scenarios.builtin_config("linear-stable"))
    cfg = load_config(path)
    assert cfg["barrier"]["value"] == "x1 - 1"


def test_load_config_missing_file_mentions_builtins():
    with pytest.raises(ConfigError, match="built-ins"):
        load_config("nonexistent.json")


def test_load_config_reports_json_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "name": oops\n}')
    with pytest.raises(ConfigError, match=r"line 2, column"):
        load_config(str(p))


def test_load_config_rejects_unknown_keys(tmp_path):
    cfg = scenarios.builtin_config("linear-stable")
    cfg["surprise"] = 1
    with pytest.raises(ConfigError, match="surprise"):
        load_config(_write_cfg(tmp_path, cfg))


def test_load_config_rejects_bad_types_with_pointer(tmp_path):
    cfg = scenarios.builtin_config("linear-stable")
    cfg["resolution"] = "eighty-one"
    with pytest.raises(ConfigError, match="/resolution"):
        load_config(_write_cfg(tmp_path, cfg))


def test_load_config_lists_every_violation(tmp_path):
    cfg = scenarios.builtin_config("linear-stable")
    cfg["dimension"] = 0
    cfg["barrier"]["smoothness"] = "velvet"
    with pytest.raises(ConfigError) as err:
        load_config(_write_cfg(tmp_path, cfg))
    msg = str(err.value)
    assert "/dimension" in msg and "/barrier/smoothness" in msg


# ----------------------------------------------------------------------- #
# verify command
def test_verify_linear_stable_bundle(tmp_path):
    bundle, code = run("linear-stable", "verify", out=str(tmp_path))
    assert code == 0
    assert bundle["bundle_version"] == 1
    assert bundle["tool"]["name"] == "inclusafe"
    assert bundle["command"] == "verify"
    assert bundle["scenario"] == "linear-stable"
    ids = [c["check_id"] for c in bundle["checks"]]
    assert ids == ["candidate-signs", "nominal-nonincrease", "robust-strict", "uniform-plain"]
    assert all(c["verdict"] == "pass-numeric" for c in bundle["checks"])
    assert bundle["margin"] is None and bundle["falsification"] is None
    assert bundle["exit_code"] == 0
    assert "timestamp" in bundle
    assert os.path.exists(tmp_path / "bundle-verify.json")


def test_verify_example1_fails_at_interface(tmp_path):
    bundle, code = run("example1", "verify", out=str(tmp_path))
    assert code == 1
    by_id = {c["check_id"]: c for c in bundle["checks"]}
    assert by_id["nominal-nonincrease"]["verdict"] == "pass-numeric"
    assert by_id["robust-strict"]["verdict"] == "fail"
    assert by_id["robust-strict"]["witness"] == [0.0]
    assert bundle["expected_notes"]["robust-strict"].startswith("fail")


def test_verify_single_check_flag(tmp_path):
    bundle, code = run("example1", "verify", check="nominal-nonincrease", out=str(tmp_path))
    assert code == 0
    assert [c["check_id"] for c in bundle["checks"]] == ["nominal-nonincrease"]
    assert bundle["flags"]["check"] == "nominal-nonincrease"


def test_verify_unknown_check_id(tmp_path):
    with pytest.raises(ConfigError, match="unknown check id"):
        run("linear-stable", "verify", check="sorcery", out=str(tmp_path))


def test_clarke_check_selected_for_lipschitz_candidates(tmp_path):
    cfg = scenarios.builtin_config("linear-stable")
    cfg["barrier"] = {"value": "abs(x1) - 1", "smoothness": "lipschitz",
                      "singular": "x1 == 0"}
    cfg["initial"] = "abs(x1) <= 0.5"
    cfg["unsafe"] = "abs(x1) > 1.2"
    path = _write_cfg(tmp_path, cfg)
    bundle, code = run(path, "verify", out=str(tmp_path))
    ids = [c["check_id"] for c in bundle["checks"]]
    # without a gradient oracle only the sign and generalized-gradient
    # checks apply
    assert ids == ["candidate-signs", "clarke-strict"]
    assert code == 0


# ----------------------------------------------------------------------- #
# falsify command
def test_falsify_example1_writes_witness(tmp_path):
    bundle, code = run("example1", "falsify", eps=0.1, out=str(tmp_path))
    assert code == 1
    f = bundle["falsification"]
    assert f["found"] is True
    assert f["notes"] == "interface-escape"
    assert f["policy"] == "constant(1)"
    assert bundle["artifacts"]["trajectory"] == "trajectory-witness.txt"
    text = (tmp_path / "trajectory-witness.txt").read_text().splitlines()
    assert text[0] == "# t x1 B"
    assert len(text) > 10
    first = [float(v) for v in text[1].split()]
    assert first == [0.0, 0.0, 0.0]


def test_falsify_requires_eps_or_perturbation(tmp_path):
    with pytest.raises(ConfigError, match="falsify needs"):
        run("linear-stable", "falsify", out=str(tmp_path))


def test_falsify_rejects_nonpositive_eps(tmp_path):
    with pytest.raises(ConfigError, match="--eps"):
        run("linear-stable", "falsify", eps=-1.0, out=str(tmp_path))


def test_mode_flag_requires_perturbation(tmp_path):
    with pytest.raises(ConfigError, match="--mode requires"):
        run("linear-stable", "verify", mode="image", out=str(tmp_path))


def test_falsify_uses_config_perturbation_and_budget(tmp_path):
    bundle, code = run("noisy-loop", "falsify", out=str(tmp_path))
    assert code == 0
    f = bundle["falsification"]
    assert f["found"] is False
    assert f["eps"] is None  # integrated the config's own perturbed dynamics
    assert f["tried"] == 48  # 24 configured starts, two default policies
    assert "trajectory" not in bundle["artifacts"]


def test_unknown_command_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown command"):
        run("linear-stable", "simulate", out=str(tmp_path))
    assert COMMANDS == ("verify", "falsify", "margin", "modulus", "all")


# ----------------------------------------------------------------------- #
# margin / modulus commands
def test_margin_command_linear(tmp_path):
    bundle, code = run("linear-stable", "margin", out=str(tmp_path))
    assert code == 0
    assert bundle["margin"]["eps_star"] == pytest.approx(0.5, abs=0.01)
    assert bundle["margin"]["verdict"] == "pass-numeric"


def test_margin_command_example1_exits_one(tmp_path):
    bundle, code = run("example1", "margin", out=str(tmp_path))
    assert code == 1
    assert bundle["margin"]["eps_star"] == 0.0
    assert bundle["margin"]["witness"] == [0.0]


def test_modulus_command_writes_tables(tmp_path):
    bundle, code = run("linear-stable", "modulus", out=str(tmp_path))
    assert code == 0
    mod = bundle["modulus"]
    assert mod["degenerate"] is True
    assert mod["verification"]["passed"] is True
    assert mod["verification"]["min_slack"] >= -1e-9
    assert bundle["artifacts"]["modulus_tables"] == "modulus-tables.json"
    tables = json.loads((tmp_path / "modulus-tables.json").read_text())
    assert tables["kind"] == "degenerate"


# ----------------------------------------------------------------------- #
# flags, hashing, reproducibility
def test_box_scale_flag(tmp_path):
    bundle, code = run("linear-stable", "verify", box_scale=0.75, out=str(tmp_path))
    assert code == 0
    assert bundle["flags"]["box_scale"] == 0.75
    with pytest.raises(ConfigError, match="--box-scale"):
        run("linear-stable", "verify", box_scale=0.0, out=str(tmp_path))


def test_config_hash_covers_load_not_flags(tmp_path):
    a, _ = run("linear-stable", "verify", out=str(tmp_path / "a"))
    b, _ = run("linear-stable", "verify", box_scale=0.75, out=str(tmp_path / "b"))
    assert a["config_sha256"] == b["config_sha256"]
    c, _ = run("example1", "verify", check="nominal-nonincrease", out=str(tmp_path / "c"))
    assert c["config_sha256"] != a["config_sha256"]


def test_bundles_reproducible_modulo_timestamp(tmp_path):
    a, _ = run("linear-stable", "verify", seed=7, out=str(tmp_path / "a"))
    b, _ = run("linear-stable", "verify", seed=7, out=str(tmp_path / "b"))
    ta = json.loads((tmp_path / "a" / "bundle-verify.json").read_text())
    tb = json.loads((tmp_path / "b" / "bundle-verify.json").read_text())
    ta.pop("timestamp"), tb.pop("timestamp")
    assert json.dumps(ta, sort_keys=True) == json.dumps(tb, sort_keys=True)


def test_bundle_is_strict_json(tmp_path):
    bundle, _ = run("example1", "verify", out=str(tmp_path))
    # round-trips through the strictest JSON settings (no NaN/Inf leaks)
    blob = json.dumps(bundle, allow_nan=False, sort_keys=True)
    assert json.loads(blob)["scenario"] == "example1"


# ----------------------------------------------------------------------- #
# entry point
def test_main_prints_check_lines(tmp_path, capsys):
    code = main(["verify", "linear-stable", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "[candidate-signs] pass-numeric margin=" in out
    assert "[uniform-plain] pass-numeric margin=" in out
    assert f"bundle: {os.path.join(str(tmp_path), 'bundle-verify.json')}" in out


def test_main_prints_falsify_summary(tmp_path, capsys):
    code = main(["falsify", "example1", "--eps", "0.1", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 1
    assert "[falsify] found=True" in out
    assert "policy=constant(1)" in out


def test_main_config_error_exit_two(tmp_path, capsys):
    code = main(["verify", "missing.json", "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == 2
    assert captured.err.startswith("config error:")
    assert captured.out == ""


def test_main_margin_and_modulus_lines(tmp_path, capsys):
    assert main(["margin", "linear-stable", "--out", str(tmp_path)]) == 0
    assert "[margin] eps_star=" in capsys.readouterr().out
    assert main(["modulus", "linear-stable", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "[modulus] degenerate=True verified=True" in out
