import json

import pytest

from src.config import CONFIG_KEYS, RunConfig, load_run_config, with_overrides
from src.utils import InvalidArgumentError
from utils.descriptors import ToyEmbedderConfig


def flatten(payload, prefix=""):
    keys = []
    for key, value in payload.items():
        if isinstance(value, dict):
            keys.extend(flatten(value, f"{prefix}{key}."))
        else:
            keys.append(prefix + key)
    return keys


def test_json_round_trip():
    cfg = RunConfig(pooling="max", levels=("L2", "L1"), codebook_size=16, compression_dims=(8,))
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.levels == ("L2", "L1")


def test_every_key_is_documented():
    assert sorted(flatten(RunConfig().to_dict())) == sorted(CONFIG_KEYS)


def test_unknown_keys_are_rejected():
    with pytest.raises(InvalidArgumentError, match="colour"):
        RunConfig.from_dict({"colour": "red"})
    with pytest.raises(InvalidArgumentError, match="vlad.q"):
        RunConfig.from_dict({"vlad": {"q": 1}})


def test_invalid_values_are_rejected():
    for payload in ({"pooling": "sum"}, {"strategy": "pyramid"}, {"vlad": {"r": 0}},
                    {"levels": ["L4"]}, {"codebook_size": 0}, {"source": "cnn"},
                    {"invariance": {"translations": [40]}}, {"grid": "dense"},
                    {"seed": -1}, {"seed": 2 ** 64}):
        with pytest.raises(InvalidArgumentError):
            RunConfig.from_dict(payload)
    with pytest.raises(InvalidArgumentError):
        RunConfig.from_json("[1, 2]")


def test_sgd_lambda_key():
    cfg = RunConfig.from_dict({"sgd": {"lambda": 0.01, "epochs": 3}, "seed": 9})
    assert cfg.sgd.lambda_ == 0.01
    assert cfg.sgd_config.seed == 9
    assert cfg.to_dict()["sgd"] == {"lambda": 0.01, "eta": 0.2, "epochs": 3}


def test_environment_defaults(monkeypatch, tmp_path):
    monkeypatch.setenv("MOP_OUT_DIR", str(tmp_path / "env-out"))
    monkeypatch.setenv("MOP_THREADS", "4")
    cfg = RunConfig()
    assert cfg.resolved_out_dir == tmp_path / "env-out"
    assert cfg.resolved_threads == 4
    assert RunConfig(out_dir="mine", threads=2).resolved_out_dir.name == "mine"
    assert RunConfig(threads=2).resolved_threads == 2

    monkeypatch.setenv("MOP_THREADS", "many")
    with pytest.raises(InvalidArgumentError):
        _ = cfg.resolved_threads


def test_fingerprint_tracks_model_hyperparameters_only():
    base = RunConfig()
    assert base.fingerprint() == RunConfig(out_dir="elsewhere", sgd=base.sgd).fingerprint()
    assert base.fingerprint() == RunConfig(compression_dims=(4,)).fingerprint()
    assert base.fingerprint() != RunConfig(codebook_size=64).fingerprint()
    assert base.fingerprint() != RunConfig(seed=1).fingerprint()
    assert base.fingerprint() != RunConfig(toy=ToyEmbedderConfig(out_dim=32)).fingerprint()


def test_pipeline_settings_follow_the_config():
    settings = RunConfig(pooling="average", strategy="multiscale", levels=("L2", "L3"),
                         patch_pca_dim=32).pipeline_settings()
    assert settings.method.value == "average"
    assert settings.strategy.pools_union
    assert settings.patch_pca_dim == 32


def test_invariance_sweep_order():
    sweep = RunConfig().invariance.to_sweep()
    assert len(sweep) == 34
    assert [s.kind.value for s in (sweep[0], sweep[6], sweep[15], sweep[24], sweep[33])] == [
        "scale", "translate_h", "translate_v", "rotate", "flip"]


def test_load_run_config(tmp_path):
    with pytest.raises(InvalidArgumentError, match="missing.json"):
        load_run_config(str(tmp_path / "missing.json"))
    assert load_run_config(None) == RunConfig()

    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 5, "windows": {"sides": [128], "stride": 8}}))
    cfg = load_run_config(str(path))
    assert cfg.seed == 5
    assert cfg.windows.sides == (128,)


def test_command_line_overrides():
    cfg = with_overrides(RunConfig(seed=1), seed=7, out_dir="o", threads=3)
    assert (cfg.seed, cfg.out_dir, cfg.threads) == (7, "o", 3)
    assert with_overrides(RunConfig()) == RunConfig()
    with pytest.raises(InvalidArgumentError):
        with_overrides(RunConfig(), seed=-1)


def test_validate_needs_source_inputs(tmp_path):
    with pytest.raises(InvalidArgumentError, match="images_dir"):
        RunConfig(source="toy").validate()
    with pytest.raises(InvalidArgumentError, match="activations_path"):
        RunConfig(source="store").validate()
    with pytest.raises(InvalidArgumentError, match="labels_path"):
        RunConfig(images_dir=str(tmp_path), labels_path=str(tmp_path / "nope.json")).validate()
    RunConfig(images_dir=str(tmp_path)).validate()
