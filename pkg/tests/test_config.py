import pytest

from conftest import CONFIGS
from stmn import config
from stmn.errors import ConfigError


def test_empty_document_gives_defaults():
    cfg = config.parse_config("")
    assert cfg == config.defaults()
    assert cfg["admm"]["tol"] == 0.001 and cfg["manifold"]["H"] == 5


def test_unknown_key_reports_its_line():
    text = "name = 'x'\n\n[admm]\nalpha = 0.1\nlearning_rate = 0.2\n"
    with pytest.raises(ConfigError) as exc:
        config.parse_config(text)
    assert exc.value.line == 5
    assert "admm.learning_rate" in str(exc.value)


def test_unknown_section_and_top_level_key():
    with pytest.raises(ConfigError) as exc:
        config.parse_config("[optimizer]\nx = 1\n")
    assert exc.value.line == 1
    with pytest.raises(ConfigError):
        config.parse_config("epochs = 3\n")


@pytest.mark.parametrize("text", [
    "[admm]\nmax_iter = 1.5\n",
    "[admm]\nmax_iter = true\n",
    "[manifold]\nridge = 'small'\n",
    "seeds = 3\n",
])
def test_type_errors(text):
    with pytest.raises(ConfigError):
        config.parse_config(text)


def test_syntax_error_has_line():
    with pytest.raises(ConfigError) as exc:
        config.parse_config("name = 'x'\n[admm\n")
    assert exc.value.line == 2


def test_h_not_below_batch_is_rejected():
    with pytest.raises(ConfigError) as exc:
        config.parse_config("[admm]\nbatch_size = 10\n\n[manifold]\nH = 10\n")
    assert exc.value.line == 5
    with pytest.raises(ConfigError):
        config.parse_config("h_sweep = [3, 50]\n")


@pytest.mark.parametrize("text", [
    "modes = ['fast']\n",
    "seeds = []\n",
    "train_fraction = 0.0\n",
    "[data]\nlabel_noise = 1.0\n",
    "[data]\nclip_len = 8\noverlap = 8\n",
    "[data]\nT = 8\n",
    "[data]\ngenerator = 'csv'\n",
    "[net]\nactivation = 'gelu'\n",
    "[net]\nhidden = []\n",
    "[admm]\nsigma0 = 0.0\n",
])
def test_semantic_errors(text):
    with pytest.raises(ConfigError):
        config.parse_config(text)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_round_trip(path):
    cfg = config.load_config(path)
    again = config.parse_config(config.dump_config(cfg))
    assert again == cfg
    assert config.dump_config(again) == config.dump_config(cfg)


def test_builders():
    cfg = config.parse_config("[admm]\nsigma_max = 4\n[manifold]\nH = 7\n")
    a = config.admm_config(cfg, "baseline", H=3)
    assert a.baseline_mode and a.manifold.H == 3 and a.sigma_max == 4.0
    assert not config.admm_config(cfg).baseline_mode


def test_missing_file():
    with pytest.raises(ConfigError, match="nope.toml"):
        config.load_config("/nonexistent/nope.toml")
