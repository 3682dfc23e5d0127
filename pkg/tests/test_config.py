from pathlib import Path

import pytest

from cvqe.config import Settings, load_scan_config, scan_config_from_dict
from cvqe.errors import ConfigError
from cvqe.subspace import Selection
from tests.conftest import write_config

CONFIGS = Path(__file__).parent.parent / "configs"

MINIMAL = """
[model]
Q = 4
Ne = 2

[schedule]
ntau_list = [0, 10]
dtau_list = [0.1, 0.2]
"""


def test_shipped_configs_load():
    for path in sorted(CONFIGS.glob("*.toml")):
        config = load_scan_config(path)
        assert config.schema_version == 1


def test_defaults(tmp_path):
    config = load_scan_config(write_config(tmp_path / "c.toml", MINIMAL))
    assert (config.model.dmu, config.model.t, config.model.V) == (0.75, 1.0, 1.0)
    assert config.sampling.shots == 4096
    assert config.sampling.seeds == [0]
    assert config.sampling.rules() == [Selection("all")]
    assert config.solver.expansion_depth == 1
    assert config.methods.epsilon_mode == "frequency"
    assert config.units.t_hartree is None


def test_grid_is_ntau_major(tmp_path):
    config = load_scan_config(write_config(tmp_path / "c.toml", MINIMAL))
    assert config.schedule.points() == [(0, 0.1), (0, 0.2), (10, 0.1), (10, 0.2)]


def test_exact_shots_keyword(tmp_path):
    config = load_scan_config(write_config(tmp_path / "c.toml", MINIMAL + '\n[sampling]\nshots = "exact"\n'))
    assert config.sampling.shots is None


def test_hash_ignores_output_section(tmp_path):
    a = load_scan_config(write_config(tmp_path / "a.toml", MINIMAL))
    b = load_scan_config(write_config(tmp_path / "b.toml", MINIMAL + '\n[output]\ndirectory = "elsewhere"\n'))
    c = load_scan_config(write_config(tmp_path / "c.toml", MINIMAL.replace("Ne = 2", "Ne = 1")))
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 12


@pytest.mark.parametrize("patch, field", [
    (("Ne = 2", "Ne = 5"), "model"),
    (("Q = 4", "Q = 0"), "model.Q"),
    (("Ne = 2", "Ne = 2\nt = 0.0"), "model.t"),
    (("ntau_list = [0, 10]", "ntau_list = [-1]"), "schedule.ntau_list"),
    (("dtau_list = [0.1, 0.2]", "dtau_list = []"), "schedule.dtau_list"),
    (("[model]", "[model]\ncolour = 1"), "model.colour"),
])
def test_validation_errors_name_the_field(tmp_path, patch, field):
    path = write_config(tmp_path / "bad.toml", MINIMAL.replace(*patch))
    with pytest.raises(ConfigError) as exc:
        load_scan_config(path)
    assert f"field '{field}'" in str(exc.value)
    assert "bad.toml" in str(exc.value)


def test_bad_selection_rule(tmp_path):
    path = write_config(tmp_path / "c.toml", MINIMAL + '\n[sampling]\nselection = ["top_k:0"]\n')
    with pytest.raises(ConfigError, match="sampling.selection"):
        load_scan_config(path)


def test_toml_syntax_error_reports_line(tmp_path):
    path = write_config(tmp_path / "broken.toml", "[model]\nQ = = 4\n")
    with pytest.raises(ConfigError, match="line 2"):
        load_scan_config(path)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_scan_config("/nonexistent/cvqe.toml")


def test_unsupported_schema_version():
    with pytest.raises(ConfigError, match="schema_version"):
        scan_config_from_dict({"schema_version": 2, "model": {"Q": 2, "Ne": 1}, "schedule": {"ntau_list": [1], "dtau_list": [0.1]}})


def test_chain_model_from_section(tmp_path):
    config = load_scan_config(write_config(tmp_path / "c.toml", MINIMAL))
    model = config.model.chain()
    assert (model.Q, model.Ne, model.V) == (4, 2, 1.0)


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("CVQE_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("CVQE_DEFAULT_THREADS", "4")
    s = Settings()
    assert s.log_level == "DEBUG"
    assert s.default_threads == 4


def test_negative_seed_rejected(tmp_path):
    path = write_config(tmp_path / "c.toml", MINIMAL + "\n[sampling]\nseeds = [0, -3]\n")
    with pytest.raises(ConfigError, match=r"field 'sampling\.seeds\.1'"):
        load_scan_config(path)
