"""Flat key = value configuration files."""

import pytest

from transformar.config import coerce, dump_config, load_config, parse_config_text, profile_values
from transformar.encoder import PROFILES
from transformar.errors import ConfigError
from transformar.training.trainer import TrainConfig


class TestCoerce:
    def test_types(self):
        assert coerce("epochs", " 12 ") == 12
        assert coerce("lr_main", "3e-4") == 3e-4
        assert coerce("use_shift", "False") is False
        assert coerce("center_bias", "yes") is True
        assert coerce("variant", "base") == "base"

    def test_errors(self):
        with pytest.raises(ConfigError, match="unknown"):
            coerce("lr", "1")
        with pytest.raises(ConfigError, match="int"):
            coerce("epochs", "ten")
        with pytest.raises(ConfigError):
            coerce("use_decoder", "maybe")


class TestFiles:
    def test_parse(self):
        text = "# run settings\nvariant = base\n\nepochs=7   # short\nprofile = tiny\n"
        values = parse_config_text(text)
        assert values["variant"] == "base" and values["epochs"] == 7
        assert values["embed_dim"] == PROFILES["tiny"].embed_dim

    def test_line_number_in_error(self):
        with pytest.raises(ConfigError, match="cfg:2"):
            parse_config_text("epochs = 3\nnonsense\n", "cfg")
        with pytest.raises(ConfigError, match="cfg:1"):
            parse_config_text("batchsize = 3\n", "cfg")

    def test_overrides_win(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("epochs = 5\nseed = 1\n")
        cfg = load_config(p, {"epochs": "9", "lr_encoder": 2e-5})
        assert (cfg.epochs, cfg.seed, cfg.lr_encoder) == (9, 1, 2e-5)

    def test_dump_roundtrip(self, tmp_path):
        cfg = TrainConfig(variant="kd_plus", epochs=3, smoothing_trigger="off", manifest="m.jsonl")
        p = tmp_path / "dump.cfg"
        p.write_text(dump_config(cfg))
        assert load_config(p) == cfg

    def test_missing_file_and_profile(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")
        with pytest.raises(ConfigError):
            profile_values("huge")
