"""
Pipeline stages. Each cmd_* reads its inputs from files named by the PipelineConfig,
writes its outputs atomically and returns a small summary; any toolkit error is
re-raised as StageError tagged with the stage name.
"""
import contextlib
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import datasets, evaluator, ranker, relabeler, report_service, synthgen, weak_labeler
from .config import resolve
from .errors import DataValidationError, StageError, WeakRankError
from .labeling_functions import check_specs, compute_stats, eval_all, load_lf_specs
from .models import EvalReport, LFKind, QueryGroup, RankerModel, Taxonomy, WeakLabelModel
from .schemas import LFSpec, PipelineConfig

logger = logging.getLogger(__name__)

SPLITS = ("seed", "train", "eval")


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (WeakRankError, OSError) as e:
        logger.error(f"Stage {name} failed: {e}")
        raise StageError(name, str(e)) from e


# --- Path helpers ---

def dataset_path(config: PipelineConfig, split: str) -> Path:
    return resolve(config, getattr(config.paths, f"{split}_dataset"))


def truth_path(config: PipelineConfig, split: str) -> Path:
    if split == "seed":
        return resolve(config, config.paths.seed_truth)
    return synthgen.truth_path(dataset_path(config, split))


def votes_path(config: PipelineConfig, split: str) -> Path:
    return resolve(config, config.paths.votes_dir) / f"{split}.votes.jsonl"


def relabeled_path(config: PipelineConfig, split: str) -> Path:
    return resolve(config, config.paths.relabeled_dir) / f"{split}.relabeled.jsonl"


def report_path(config: PipelineConfig, name: str) -> Path:
    return resolve(config, config.paths.report_dir) / name


def _load_taxonomy_for(config: PipelineConfig, specs: Sequence[LFSpec]) -> Optional[Taxonomy]:
    needed = any(spec.kind == LFKind.TAXONOMY_MATCH for spec in specs)
    path = resolve(config, config.paths.taxonomy)
    if path is None or not path.exists():
        if needed:
            raise DataValidationError(f"taxonomy file {path} not found but a taxonomy_match LF is configured")
        if path is not None:
            logger.warning(f"Taxonomy {path} not found; no taxonomy LF is configured, continuing")
        return None
    return datasets.load_taxonomy(path)


def _aligned_votes(groups: Sequence[QueryGroup], record_ids: Sequence[str], votes: np.ndarray) -> np.ndarray:
    """Reorder vote rows to the flattened document order of groups."""
    row_of = {record_id: i for i, record_id in enumerate(record_ids)}
    order = []
    for doc in datasets.flatten_docs(groups):
        if doc.record_id not in row_of:
            raise DataValidationError(f"no LF votes for record '{doc.record_id}'")
        order.append(row_of[doc.record_id])
    return votes[np.asarray(order, dtype=np.int64)] if order else votes[:0]


def _ranker_inputs(config: PipelineConfig, split: str, specs: Sequence[LFSpec]) -> List[QueryGroup]:
    """Relabeled groups of a split with serveable LF outputs appended as features."""
    groups = datasets.load_groups(relabeled_path(config, split))
    if not any(spec.serveable for spec in specs):
        return groups
    record_ids, votes = datasets.load_votes(votes_path(config, split), m=len(specs))
    return ranker.augment_with_serveable_lfs(groups, _aligned_votes(groups, record_ids, votes), specs)


def feature_names(feature_dim: int, specs: Sequence[LFSpec]) -> List[str]:
    return [f"f{i}" for i in range(feature_dim)] + [f"lf:{spec.name}" for spec in specs if spec.serveable]


# --- Stages ---

def cmd_eval_lfs(config: PipelineConfig) -> Dict[str, Tuple[int, int]]:
    """Vote matrices for the seed, train and eval datasets plus an LF stats table."""
    with stage("eval-lfs"):
        schema = datasets.load_schema(resolve(config, config.paths.schema_file))
        specs = load_lf_specs(resolve(config, config.paths.lf_config))
        check_specs(specs, schema.feature_dim)
        if len(specs) != schema.lf_count:
            raise DataValidationError(
                f"schema declares lf_count={schema.lf_count} but the LF config has {len(specs)} LFs"
            )
        taxonomy = _load_taxonomy_for(config, specs)
        names = [spec.name for spec in specs]

        shapes = {}
        frames = []
        for split in SPLITS:
            records = datasets.load_records(dataset_path(config, split), schema)
            votes = eval_all(records, specs, taxonomy, workers=config.workers)
            datasets.write_votes(votes_path(config, split), [r.record_id for r in records], votes)
            shapes[split] = votes.shape

            labels = None
            truth_file = truth_path(config, split)
            if truth_file.exists():
                truth = datasets.load_truth(truth_file)
                if all(r.record_id in truth for r in records):
                    labels = [truth[r.record_id] for r in records]
            df = report_service.get_lf_summary_df(compute_stats(votes, labels, names))
            df.insert(0, 'Split', split)
            frames.append(df)
            logger.info(f"Evaluated {len(specs)} LFs on {len(records)} {split} records")

        summary = pd.concat(frames, ignore_index=True)
        datasets.atomic_write_bytes(report_path(config, "lf_stats.csv"), report_service.export_df_to_csv(summary).getvalue())
        return shapes


def cmd_train_labeler(config: PipelineConfig) -> Tuple[WeakLabelModel, Optional[float]]:
    """Fit on the training share of the seed set; report AUC on the held-out share."""
    with stage("train-labeler"):
        specs = load_lf_specs(resolve(config, config.paths.lf_config))
        record_ids, votes = datasets.load_votes(votes_path(config, "seed"), m=len(specs))
        truth = datasets.load_truth(truth_path(config, "seed"))
        examples = weak_labeler.seed_examples(record_ids, votes, truth)

        train_part, test_part = weak_labeler.split_seed(
            examples, config.labeler.test_fraction, config.labeler.split_seed
        )
        model = weak_labeler.fit(train_part, config.labeler.smoothing_alpha, [spec.name for spec in specs])

        auc = None
        if test_part and len({s.label for s in test_part}) == 2:
            auc = weak_labeler.evaluate_auc(model, test_part)
            logger.info(f"Held-out AUC {auc:.4f} on {len(test_part)} seed examples")
        elif test_part:
            logger.warning("Held-out seed share has a single class; AUC not computed")

        corr = weak_labeler.lf_correlations(votes, names=[spec.name for spec in specs])
        datasets.atomic_write_bytes(
            report_path(config, "lf_correlations.csv"),
            report_service.export_df_to_csv(report_service.get_lf_correlations_df(corr)).getvalue(),
        )
        weak_labeler.save_model(resolve(config, config.paths.labeler_model), model)
        return model, auc


def _group_order(records, groups: Sequence[QueryGroup]) -> np.ndarray:
    row_of = {r.record_id: i for i, r in enumerate(records)}
    return np.asarray([row_of[d.record_id] for d in datasets.flatten_docs(groups)], dtype=np.int64)


def cmd_relabel(config: PipelineConfig) -> Dict[str, int]:
    with stage("relabel"):
        schema = datasets.load_schema(resolve(config, config.paths.schema_file))
        model = weak_labeler.load_model(resolve(config, config.paths.labeler_model))
        policy = relabeler.policy_from_label_map(config.relabel_policy, schema.label_map)

        counts = {}
        for split in ("train", "eval"):
            records = datasets.load_records(dataset_path(config, split), schema)
            record_ids, votes = datasets.load_votes(votes_path(config, split), m=model.m)
            if record_ids != [r.record_id for r in records]:
                raise DataValidationError(f"{split} votes are not aligned with the {split} dataset; rerun eval-lfs")
            p = weak_labeler.predict_batch(model, votes)
            groups = datasets.to_query_groups(records, schema.label_map)
            groups = relabeler.relabel_dataset(groups, p[_group_order(records, groups)], policy)
            datasets.write_groups(relabeled_path(config, split), groups)
            counts[split] = len(records)
        return counts


def cmd_train_ranker(config: PipelineConfig) -> Tuple[RankerModel, List[dict]]:
    with stage("train-ranker"):
        specs = load_lf_specs(resolve(config, config.paths.lf_config))
        groups = _ranker_inputs(config, "train", specs)
        initial = None
        if config.paths.initial_ranker:
            initial = ranker.load_model(resolve(config, config.paths.initial_ranker))
        model, log = ranker.train_with_log(groups, config.train, initial)
        ranker.save_model(resolve(config, config.paths.ranker_model), model)
        datasets.write_jsonl(resolve(config, config.paths.train_log), log)
        return model, log


def cmd_evaluate(config: PipelineConfig) -> EvalReport:
    with stage("evaluate"):
        specs = load_lf_specs(resolve(config, config.paths.lf_config))
        groups = _ranker_inputs(config, "eval", specs)
        model = ranker.load_model(resolve(config, config.paths.ranker_model))
        settings = config.evaluation

        report = evaluator.evaluate(groups, model, settings.k, settings.gain_function)
        docs = datasets.flatten_docs(groups)
        report = report.model_copy(update={
            "per_engagement_quantiles": evaluator.score_quantiles(docs, settings.quantile_grid),
            "fraction_above": evaluator.fraction_above(docs, settings.thresholds),
            "feature_importance": ranker.feature_importance(model, groups),
        })
        anomalies = evaluator.find_anomalies(docs)
        write_report(config, report, anomalies, feature_names(model.feature_dim - _n_serveable(specs), specs))
        return report


def _n_serveable(specs: Sequence[LFSpec]) -> int:
    return sum(1 for spec in specs if spec.serveable)


def write_report(config: PipelineConfig, report: EvalReport, anomalies: Dict[str, List[str]], names: List[str]):
    datasets.atomic_write(report_path(config, "report.json"), report.model_dump_json(indent=2) + "\n")
    sheets = {
        "metrics": report_service.get_metrics_df(report),
        "quantiles": report_service.get_quantiles_df(report),
        "fraction_above": report_service.get_fraction_above_df(report),
        "feature_importance": report_service.get_feature_importance_df(report, names),
        "anomalies": report_service.get_anomalies_df(anomalies),
    }
    for name, df in sheets.items():
        datasets.atomic_write_bytes(report_path(config, f"{name}.csv"), report_service.export_df_to_csv(df).getvalue())
    if config.evaluation.excel:
        datasets.atomic_write_bytes(report_path(config, "report.xlsx"), report_service.export_df_to_excel(sheets).getvalue())
    logger.info(f"Wrote evaluation report to {report_path(config, '')}")


def cmd_sample_size(max_error: float, z_alpha: float = 2.0) -> int:
    with stage("sample-size"):
        try:
            return weak_labeler.estimate_required_samples(max_error, z_alpha)
        except ValueError as e:
            raise DataValidationError(str(e))


def cmd_synth(config: PipelineConfig) -> Dict[str, Path]:
    with stage("synth"):
        corpus = synthgen.generate(config.synth)
        paths = {
            "schema": resolve(config, config.paths.schema_file),
            "lfs": resolve(config, config.paths.lf_config),
            "taxonomy": resolve(config, config.paths.taxonomy or "taxonomy.csv"),
            "seed": dataset_path(config, "seed"),
            "seed_truth": truth_path(config, "seed"),
            "train": dataset_path(config, "train"),
            "eval": dataset_path(config, "eval"),
        }
        return synthgen.write_corpus(corpus, paths)


def run_all(config: PipelineConfig, synth: bool = False) -> EvalReport:
    """Every stage in order; stages still talk to each other only through files."""
    if synth:
        cmd_synth(config)
    cmd_eval_lfs(config)
    cmd_train_labeler(config)
    cmd_relabel(config)
    cmd_train_ranker(config)
    return cmd_evaluate(config)


def report_summary(report: EvalReport) -> str:
    return json.dumps({
        "k": report.k,
        "n_queries": report.n_queries,
        "ndcg_original": report.ndcg_original,
        "ndcg_effective": report.ndcg_effective,
        "ndcg_weak": report.ndcg_weak,
    })
