import pytest

from app.config import load_pipeline_config, resolve
from app.errors import DataValidationError
from app.models import PolicyKind


def test_defaults_without_a_file(monkeypatch):
    monkeypatch.delenv("WEAKRANK_CONFIG", raising=False)
    monkeypatch.delenv("WEAKRANK_WORKERS", raising=False)
    config = load_pipeline_config()
    assert config.relabel_policy == PolicyKind.R1
    assert config.train.epochs == 30
    assert config.workers == 1


def test_workdir_resolves_against_config_directory(tmp_path, monkeypatch):
    monkeypatch.delenv("WEAKRANK_WORKERS", raising=False)
    path = tmp_path / "configs" / "run.yaml"
    path.parent.mkdir()
    path.write_text("paths:\n  workdir: ../data\n", encoding="utf-8")
    config = load_pipeline_config(path)
    assert resolve(config, "train.jsonl") == (tmp_path / "data" / "train.jsonl").resolve()


def test_overrides_replace_file_values_and_ignore_none(tmp_path, monkeypatch):
    monkeypatch.delenv("WEAKRANK_WORKERS", raising=False)
    path = tmp_path / "run.yaml"
    path.write_text("relabel_policy: R2\ntrain:\n  epochs: 5\n  seed: 4\n", encoding="utf-8")
    config = load_pipeline_config(path, {"train": {"epochs": 0, "seed": None}, "relabel_policy": None})
    assert config.train.epochs == 0
    assert config.train.seed == 4
    assert config.relabel_policy == PolicyKind.R2


def test_workers_from_environment(monkeypatch):
    monkeypatch.delenv("WEAKRANK_CONFIG", raising=False)
    monkeypatch.setenv("WEAKRANK_WORKERS", "3")
    assert load_pipeline_config().workers == 3
    assert load_pipeline_config(overrides={"workers": 2}).workers == 2


def test_bad_worker_count_in_environment(monkeypatch):
    monkeypatch.delenv("WEAKRANK_CONFIG", raising=False)
    monkeypatch.setenv("WEAKRANK_WORKERS", "many")
    with pytest.raises(DataValidationError, match="WEAKRANK_WORKERS"):
        load_pipeline_config()


def test_unknown_keys_are_rejected(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("trian:\n  epochs: 5\n", encoding="utf-8")
    with pytest.raises(DataValidationError, match="invalid pipeline config"):
        load_pipeline_config(path)


def test_invalid_yaml(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("train: [unclosed\n", encoding="utf-8")
    with pytest.raises(DataValidationError, match="invalid YAML"):
        load_pipeline_config(path)
