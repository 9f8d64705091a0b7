import logging

import pytest

from manevkit import settings
from manevkit.config import emit_config, load_config, parse_config
from manevkit.exc import ConfigError
from manevkit.phase_space import PowerLaw, SumOfPowers


def test_empty_file_gives_defaults():
    config = parse_config("")
    assert config.params.pure_manev
    assert isinstance(config.casimir, PowerLaw)
    assert config.targets is None
    assert config.cutoff is None
    assert config.options.size == config.grid.size


def test_sections_fill_the_options():
    config = parse_config("""
[model]
delta = 1
kappa = 0.5
p = 4
q = 6
m1 = 2.0
mj = 3.0

[solver]
r_chi = 1.5
b = none
""")
    assert config.params.delta == 1.0 and config.params.kappa == 0.5
    assert isinstance(config.casimir, SumOfPowers)
    assert (config.targets.m1, config.targets.mj) == (2.0, 3.0)
    assert config.cutoff.r_chi == 1.5
    assert config.solver.b is None


def test_emitted_config_parses_back():
    config = parse_config("[model]\ndelta = 0.25\nkappa = 0.1\n[dynamics]\nseed = 42\n"
                          "dt = 0.001\n[output]\ndirectory = somewhere\n")
    again = parse_config(emit_config(config))
    assert again == config
    assert again.seed == 42


def test_overrides():
    config = parse_config("").with_seed(9).with_output("elsewhere").with_command("verify")
    assert config.seed == 9
    assert config.output.directory == "elsewhere"
    assert config.command == "verify"
    assert config.with_seed(None) is config


@pytest.mark.parametrize("text", [
    "[model]\np = 2\n",
    "[model]\nq = 3.5\n",
    "[model]\nm1 = 1.0\n",
    "[model]\ndelta = 0\nkappa = 0\n",
    "[model]\nkappa = lots\n",
    "[model]\nkappa = nan\n",
    "[grid]\nsize = none\n",
    "[grid]\nsize = 3\n",
    "[solver]\ndamping = 1.5\n",
    "[dynamics]\nparticles = 10\n",
    "[dynamics]\nperturbation = twist\n",
    "[dynamics]\nseed = -1\n",
    "[model]\ncolour = red\n",
    "[physics]\ng = 1\n",
    "no section header\n",
])
def test_rejects_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.ini"))


def test_load_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[grid]\nsize = 401\n")
    assert load_config(str(path)).grid.size == 401


def test_thread_cap_from_the_environment(monkeypatch):
    monkeypatch.setenv(settings.THREADS_ENV, "1")
    assert settings.thread_count(8) == 1


def test_invalid_thread_cap_is_logged(monkeypatch, caplog):
    monkeypatch.setenv(settings.THREADS_ENV, "many")
    with caplog.at_level(logging.WARNING, logger="manevkit.settings"):
        assert settings.thread_count(1) == 1
    assert "MANEV_THREADS" in caplog.text
