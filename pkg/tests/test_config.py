import json

import pytest

from trileg.config import Config, config_from_dict, load_config, save_config
from trileg.errors import ValidationError


class TestConfig:
    def test_defaults_validate(self):
        Config().validate()

    def test_hash_stable_and_sensitive(self):
        a, b = Config(), Config()
        assert a.hash() == b.hash()
        b.actuation.v_max = 2.0
        assert a.hash() != b.hash()

    def test_save_load_roundtrip(self, tmp_path):
        cfg = Config()
        cfg.robot.rot_rate_deg = 4.0
        cfg.sim.seed = 42
        path = tmp_path / "cal.json"
        save_config(cfg, path)
        loaded = load_config(path)
        assert loaded.to_dict() == cfg.to_dict()
        assert loaded.hash() == cfg.hash()

    def test_env_var_discovery(self, tmp_path, monkeypatch):
        cfg = Config()
        cfg.actuation.dv_max = 0.25
        path = tmp_path / "cal.json"
        save_config(cfg, path)
        monkeypatch.setenv("TRILEG_CONFIG", str(path))
        assert load_config().actuation.dv_max == 0.25

    def test_partial_file_merges_defaults(self, tmp_path):
        path = tmp_path / "partial.json"
        path.write_text(json.dumps({"sim": {"seed": 9}}))
        cfg = load_config(path)
        assert cfg.sim.seed == 9
        assert cfg.actuation.v_max == 2.5

    def test_unknown_section_rejected(self):
        with pytest.raises(ValidationError):
            config_from_dict({"reactor": {}})

    def test_bad_json_rejected(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        with pytest.raises(ValidationError):
            load_config(path)

    def test_curve_validation(self):
        cfg = Config()
        cfg.robot.squat_curve = []
        with pytest.raises(ValidationError):
            cfg.validate()
        cfg = Config()
        cfg.robot.step_curve = [[0.0, 0.0], [0.0, 1.0]]
        with pytest.raises(ValidationError):
            cfg.validate()
        cfg = Config()
        cfg.robot.lift_curve = [[1.0, 1.0], [2.0, 2.0]]  # misses (0, 0)
        with pytest.raises(ValidationError):
            cfg.validate()

    def test_leg_azimuths_must_be_tripod(self):
        cfg = Config()
        cfg.robot.leg_azimuth_deg = [0.0, 90.0, 180.0]
        with pytest.raises(ValidationError):
            cfg.validate()
        cfg.robot.leg_azimuth_deg = [30.0, 150.0, 270.0]
        cfg.validate()

    def test_codec_grid_constraint(self):
        cfg = Config()
        cfg.codec.dv_range = 0.45
        with pytest.raises(ValidationError):
            cfg.validate()
