import json
import shutil
from pathlib import Path

import pandas as pd
import pytest
import yaml
from click.testing import CliRunner

from app import pipeline
from app.config import load_pipeline_config
from app.errors import StageError
from app.main import cli

GOLDEN_DIR = Path(__file__).parent / "golden"
STAGES = ["eval-lfs", "train-labeler", "relabel", "train-ranker", "evaluate"]
ARTIFACTS = [
    "votes/seed.votes.jsonl",
    "votes/train.votes.jsonl",
    "votes/eval.votes.jsonl",
    "models/labeler.json",
    "relabeled/train.relabeled.jsonl",
    "relabeled/eval.relabeled.jsonl",
    "models/ranker.json",
    "models/train_log.jsonl",
    "reports/lf_stats.csv",
    "reports/lf_correlations.csv",
    "reports/report.json",
    "reports/metrics.csv",
    "reports/quantiles.csv",
]


def _write_config(directory, tiny_synth_config, **sections):
    raw = {
        "paths": {"workdir": "work"},
        "synth": tiny_synth_config.model_dump(mode="json"),
        "train": {"epochs": 3, "batch_size_groups": 8, "seed": 3},
        "evaluation": {"k": 5},
    }
    for key, value in sections.items():
        raw[key] = {**raw.get(key, {}), **value} if isinstance(value, dict) else value
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "pipeline.yaml"
    path.write_text(yaml.safe_dump(raw, sort_keys=False), encoding="utf-8")
    return path


def _invoke(*args):
    return CliRunner().invoke(cli, list(args), catch_exceptions=False)


def _run_all_stages(config_path):
    for command in ["synth"] + STAGES:
        result = _invoke(command, "--config", str(config_path))
        assert result.exit_code == 0, result.output


def test_sample_size_command():
    result = _invoke("sample-size", "--max-error", "0.05")
    assert result.exit_code == 0
    assert result.output.strip() == "400"
    result = _invoke("sample-size", "--max-error", "0.05", "--z", "1.96")
    assert result.output.strip() == "385"


def test_sample_size_rejects_bad_error():
    result = _invoke("sample-size", "--max-error", "1.5")
    assert result.exit_code == 1
    assert "Error: [sample-size]" in result.output


def test_full_pipeline_writes_every_artifact(pipeline_config_file):
    _run_all_stages(pipeline_config_file)
    work = pipeline_config_file.parent / "work"
    for artifact in ARTIFACTS:
        assert (work / artifact).exists(), artifact

    report = json.loads((work / "reports/report.json").read_text(encoding="utf-8"))
    for key in ("ndcg_original", "ndcg_effective", "ndcg_weak"):
        assert 0.0 <= report[key] <= 1.0
    metrics = pd.read_csv(work / "reports/metrics.csv")
    assert list(metrics["label_set"]) == ["original", "effective", "weak"]
    assert set(metrics["metric"]) == {"ndcg@5"}

    log = [json.loads(line) for line in (work / "models/train_log.jsonl").read_text(encoding="utf-8").splitlines()]
    assert [row["epoch"] for row in log] == [0, 1, 2, 3]


def test_pipeline_reruns_are_byte_identical(tmp_path, tiny_synth_config):
    first = _write_config(tmp_path / "a", tiny_synth_config)
    second = _write_config(tmp_path / "b", tiny_synth_config)
    _run_all_stages(first)
    _run_all_stages(second)
    for artifact in ARTIFACTS:
        assert (tmp_path / "a/work" / artifact).read_bytes() == (tmp_path / "b/work" / artifact).read_bytes(), artifact


def test_parallel_lf_evaluation_matches_sequential(tmp_path, tiny_synth_config):
    config_path = _write_config(tmp_path, tiny_synth_config)
    _invoke("synth", "--config", str(config_path))
    votes = tmp_path / "work/votes/train.votes.jsonl"
    _invoke("eval-lfs", "--config", str(config_path), "--workers", "1")
    sequential = votes.read_bytes()
    _invoke("eval-lfs", "--config", str(config_path), "--workers", "4")
    assert votes.read_bytes() == sequential


def test_missing_taxonomy_with_taxonomy_lf_is_a_stage_error(pipeline_config_file):
    _invoke("synth", "--config", str(pipeline_config_file))
    (pipeline_config_file.parent / "work/taxonomy.csv").unlink()
    result = _invoke("eval-lfs", "--config", str(pipeline_config_file))
    assert result.exit_code == 1
    assert "Error: [eval-lfs]" in result.output
    assert "taxonomy" in result.output


def test_single_class_seed_fails_train_labeler(tmp_path, tiny_synth_config):
    config_path = _write_config(tmp_path, tiny_synth_config, synth={"irrelevance_rate": 0.0})
    for command in ["synth", "eval-lfs"]:
        assert _invoke(command, "--config", str(config_path)).exit_code == 0
    result = _invoke("train-labeler", "--config", str(config_path))
    assert result.exit_code == 1
    assert "[train-labeler]" in result.output
    assert "both classes" in result.output


def test_invalid_config_is_reported(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("train:\n  epochs: -1\n", encoding="utf-8")
    result = _invoke("train-ranker", "--config", str(path))
    assert result.exit_code == 1
    assert "Error: [config]" in result.output


def test_zero_epochs_persist_the_initial_model(pipeline_config_file):
    _run_all_stages(pipeline_config_file)
    result = _invoke("train-ranker", "--config", str(pipeline_config_file), "--epochs", "0")
    assert result.exit_code == 0
    log = (pipeline_config_file.parent / "work/models/train_log.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(log) == 1


def test_zero_probabilities_relabel_to_original(pipeline_config_file):
    _run_all_stages(pipeline_config_file)
    config = load_pipeline_config(pipeline_config_file)
    # a labeler whose every weight and bias is hugely negative predicts p ~ 0
    labeler_path = pipeline.resolve(config, config.paths.labeler_model)
    payload = json.loads(labeler_path.read_text(encoding="utf-8"))
    payload["weights"] = [[0.0, 0.0, 0.0] for _ in payload["weights"]]
    payload["bias"] = -800.0
    labeler_path.write_text(json.dumps(payload), encoding="utf-8")

    pipeline.cmd_relabel(config)
    groups = pipeline.datasets.load_groups(pipeline.relabeled_path(config, "train"))
    for doc in pipeline.datasets.flatten_docs(groups):
        assert doc.y_effective == doc.y_original
        assert doc.p == 0.0


def test_stage_error_wraps_module_errors(tmp_path):
    config = load_pipeline_config(overrides={"paths": {"workdir": str(tmp_path)}})
    with pytest.raises(StageError) as e:
        pipeline.cmd_relabel(config)
    assert e.value.stage == "relabel"
    assert "file not found" in str(e.value)


def test_excel_report(pipeline_config_file):
    _run_all_stages(pipeline_config_file)
    result = _invoke("evaluate", "--config", str(pipeline_config_file), "--excel")
    assert result.exit_code == 0
    sheets = pd.read_excel(pipeline_config_file.parent / "work/reports/report.xlsx", sheet_name=None)
    assert list(sheets) == ["metrics", "quantiles", "fraction_above", "feature_importance", "anomalies"]


def test_run_command_executes_every_stage(pipeline_config_file):
    result = _invoke("run", "--config", str(pipeline_config_file), "--synth")
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output.strip().splitlines()[-1])
    assert summary["k"] == 5


def _golden_workdir(tmp_path):
    work = tmp_path / "golden"
    shutil.copytree(GOLDEN_DIR / "input", work)
    return load_pipeline_config(work / "pipeline.yaml")


@pytest.mark.parametrize("artifact", [
    "votes/seed.votes.jsonl",
    "votes/train.votes.jsonl",
    "votes/eval.votes.jsonl",
    "reports/lf_stats.csv",
    "relabeled/train.relabeled.jsonl",
    "relabeled/eval.relabeled.jsonl",
    "reports/metrics.csv",
    "reports/quantiles.csv",
    "reports/fraction_above.csv",
    "reports/anomalies.csv",
])
def test_stages_match_committed_goldens(tmp_path, artifact):
    config = _golden_workdir(tmp_path)
    pipeline.cmd_eval_lfs(config)
    pipeline.cmd_relabel(config)
    pipeline.cmd_evaluate(config)
    expected = (GOLDEN_DIR / "expected" / artifact).read_bytes()
    assert (Path(config.paths.workdir) / artifact).read_bytes() == expected


def test_lf_count_must_match_lf_config(tmp_path):
    config = _golden_workdir(tmp_path)
    schema = Path(config.paths.workdir) / "schema.yaml"
    schema.write_text(schema.read_text(encoding="utf-8").replace("lf_count: 2", "lf_count: 3"), encoding="utf-8")
    with pytest.raises(StageError) as e:
        pipeline.cmd_eval_lfs(config)
    assert e.value.stage == "eval-lfs"
    assert "lf_count=3" in str(e.value)


def test_truncated_labeler_file_is_a_stage_error(tmp_path):
    config = _golden_workdir(tmp_path)
    pipeline.cmd_eval_lfs(config)
    labeler = Path(config.paths.workdir) / "labeler.json"
    labeler.write_text(labeler.read_text(encoding="utf-8")[:40], encoding="utf-8")
    with pytest.raises(StageError) as e:
        pipeline.cmd_relabel(config)
    assert e.value.stage == "relabel"
    assert "malformed JSON" in str(e.value)


def test_ranker_with_wrong_parameter_count_is_a_stage_error(tmp_path):
    config = _golden_workdir(tmp_path)
    pipeline.cmd_eval_lfs(config)
    pipeline.cmd_relabel(config)
    path = Path(config.paths.workdir) / "ranker.json"
    payload = json.loads(path.read_text(encoding="utf-8"))
    payload["parameters"] = payload["parameters"][:-1]
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(StageError) as e:
        pipeline.cmd_evaluate(config)
    assert e.value.stage == "evaluate"
    assert "invalid ranker model" in str(e.value)


def test_invalid_schema_yaml_is_reported_by_the_cli(tmp_path):
    config = _golden_workdir(tmp_path)
    (Path(config.paths.workdir) / "schema.yaml").write_text("feature_dim: [2\n", encoding="utf-8")
    result = _invoke("eval-lfs", "--config", str(Path(config.paths.workdir) / "pipeline.yaml"))
    assert result.exit_code == 1
    assert "Error: [eval-lfs]" in result.output
    assert "invalid YAML" in result.output


def test_lf_correlation_report(pipeline_config_file):
    _run_all_stages(pipeline_config_file)
    df = pd.read_csv(pipeline_config_file.parent / "work/reports/lf_correlations.csv")
    assert list(df.columns) == ["lf_a", "lf_b", "correlation"]
    assert len(df) == 10 * 9 // 2
