import json

import pytest

from manevkit.main import build_parser, main
from manevkit.output import read_csv

SMALL_RUN = """
[model]
delta = 0
kappa = 1
p = 4

[grid]
size = 400
energy_nodes = 200

[solver]
family_size = 3
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_RUN)
    return str(path)


def test_ground_state_command(small_config, tmp_path):
    out = tmp_path / "gs"
    assert main(["ground-state", "--config", small_config, "--out", str(out)]) == 0
    for name in ("run.ini", "ground_state.json", "ground_state_radial.csv",
                 "ground_state_profile.csv"):
        assert (out / name).exists()
    summary = json.loads((out / "ground_state.json").read_text())
    assert summary["structural_violations"] == []
    assert summary["regime"] == "critical"
    metadata, header, rows = read_csv(str(out / "ground_state_radial.csv"))
    assert metadata["command"] == "ground-state"
    assert header == ["r", "rho", "phi", "phi_P", "phi_M"]
    assert len(rows) == 400


def test_outputs_are_reproducible(small_config, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["ground-state", "--config", small_config, "--out", str(first)]) == 0
    assert main(["ground-state", "--config", small_config, "--out", str(second)]) == 0
    for name in ("ground_state.json", "ground_state_profile.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_estimate_kjm_command(small_config, tmp_path):
    out = tmp_path / "kjm"
    assert main(["estimate-kjm", "--config", small_config, "--out", str(out), "--seed", "5"]) == 0
    summary = json.loads((out / "estimate_kjm.json").read_text())
    assert summary["family_size"] == 3
    assert summary["K_jM_estimate"] > 0
    _, header, rows = read_csv(str(out / "estimate_kjm.csv"))
    assert header == ["label", "K_jM", "ratio_P", "ratio_M"]
    assert len(rows) == 3


def test_invalid_config_exits_with_one(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\np = 2\n")
    assert main(["ground-state", "--config", str(path), "--out", str(tmp_path / "x")]) == 1
    assert main(["ground-state", "--config", str(tmp_path / "missing.ini")]) == 1


def test_self_similar_needs_pure_manev(tmp_path):
    path = tmp_path / "mixed.ini"
    path.write_text("[model]\ndelta = 1\nkappa = 1\n")
    assert main(["self-similar", "--config", str(path), "--out", str(tmp_path / "y")]) == 1


def test_unknown_command_exits_with_one(small_config):
    with pytest.raises(SystemExit) as err:
        main(["teleport", "--config", small_config])
    assert err.value.code == 1


def test_parser_lists_every_command():
    parser = build_parser()
    args = parser.parse_args(["verify", "--config", "x.ini", "--seed", "3", "--debug"])
    assert (args.command, args.seed, args.debug) == ("verify", 3, True)
