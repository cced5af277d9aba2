# tests/test_config.py
import logging

import pytest

from src.utils.config import PipelineConfig, build_pipeline_config, get_pipeline_config, load_config
from src.utils.errors import ConfigError
from src.utils.logger import get_logger, setup_logging


def test_test_overlay_is_merged_over_base(test_cfg):
    assert test_cfg.oracle.width == 64
    assert test_cfg.css.views == 12
    # untouched keys keep the base file's values
    assert test_cfg.crf.tau == pytest.approx(0.07)
    assert test_cfg.ransac.confidence == pytest.approx(0.999)


def test_invalid_values_raise_config_error():
    with pytest.raises(ConfigError):
        build_pipeline_config({"crf": {"tau": 0.0}})
    with pytest.raises(ConfigError):
        build_pipeline_config({"ransac": {"min_inliers": 2}})
    with pytest.raises(ConfigError):
        build_pipeline_config({"crf": {"temperature": 0.1}})


def test_missing_overlay_file_raises(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_overlay_from_environment(tmp_path, monkeypatch):
    overlay = tmp_path / "env.yaml"
    overlay.write_text("crf:\n  iterations: 9\n", encoding="utf-8")
    monkeypatch.setenv("SCENEKIT_CONFIG", str(overlay))

    assert load_config()["crf"]["iterations"] == 9


def test_with_overrides_skips_none_and_validates(test_cfg):
    updated = test_cfg.with_overrides({"crf": {"iterations": 2, "tau": None}, "runtime": {"seed": 5}})

    assert updated.crf.iterations == 2
    assert updated.crf.tau == test_cfg.crf.tau
    assert updated.runtime.seed == 5
    with pytest.raises(ConfigError):
        test_cfg.with_overrides({"render": {"alpha_max": 1.5}})


def test_fingerprint_ignores_threads_and_logging():
    base = PipelineConfig()
    assert base.fingerprint() == base.with_overrides({"runtime": {"threads": 8}}).fingerprint()
    assert base.fingerprint() == base.with_overrides({"logging": {"level": "DEBUG"}}).fingerprint()
    assert base.fingerprint() != base.with_overrides({"runtime": {"seed": 1}}).fingerprint()
    assert base.fingerprint() != base.with_overrides({"crf": {"window": 4}}).fingerprint()


def test_default_config_file_is_valid():
    cfg = get_pipeline_config()
    assert cfg.css.lambda_ssim == pytest.approx(0.2)
    assert cfg.render.background == (1.0, 1.0, 1.0)


def test_setup_logging_writes_to_file(tmp_path):
    log_file = tmp_path / "logs" / "run.log"
    setup_logging(log_cfg={"level": "DEBUG", "file": str(log_file), "console": False})
    get_logger("src.test").debug("[TEST] hello %d", 42)
    for handler in logging.getLogger().handlers:
        handler.flush()

    assert "[TEST] hello 42" in log_file.read_text(encoding="utf-8")


def test_setup_logging_rejects_unknown_level(tmp_path):
    with pytest.raises(ConfigError):
        setup_logging(level_override="LOUD", log_cfg={"file": str(tmp_path / "x.log"), "console": False})
