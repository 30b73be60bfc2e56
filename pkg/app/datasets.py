"""
File I/O for every artifact the pipeline exchanges: datasets, schema sidecars,
taxonomies, vote matrices, truth sidecars and relabeled query groups.
All writers go through atomic_write so a failed stage never leaves a partial file.
"""
import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError

from . import schemas
from .errors import DataValidationError
from .models import EngagementLabelMap, QueryDoc, QueryDocRecord, QueryGroup, Taxonomy, Vote

logger = logging.getLogger(__name__)


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_line(obj) -> str:
    # repr-based float formatting keeps every value bit-exact on reload
    return json.dumps(obj, ensure_ascii=False, allow_nan=False)


def write_jsonl(path, rows: Iterable[dict]):
    atomic_write(path, "".join(dumps_line(row) + "\n" for row in rows))


def iter_jsonl(path) -> Iterator[Tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("file not found", path=str(path))
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataValidationError(f"malformed JSON: {e.msg}", path=str(path), line_number=line_number)
            if not isinstance(row, dict):
                raise DataValidationError("expected a JSON object", path=str(path), line_number=line_number)
            yield line_number, row


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise DataValidationError("file not found", path=str(path))
    with open(path, "r", encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"malformed JSON: {e.msg}", path=str(path), line_number=e.lineno)
    if not isinstance(payload, dict):
        raise DataValidationError("expected a JSON object", path=str(path))
    return payload


# --- Schema sidecar ---

def load_schema(path) -> schemas.DatasetSchema:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("file not found", path=str(path))
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise DataValidationError(f"invalid YAML: {e}", path=str(path))
    if not isinstance(raw, dict):
        raise DataValidationError("top level must be a mapping", path=str(path))
    try:
        return schemas.DatasetSchema.model_validate(raw)
    except ValidationError as e:
        raise DataValidationError(f"invalid dataset schema: {e}", path=str(path))


def write_schema(path, schema: schemas.DatasetSchema):
    atomic_write(path, yaml.safe_dump(schema.model_dump(mode="json"), sort_keys=False))


# --- Records ---

def validate_record(record: QueryDocRecord, schema: schemas.DatasetSchema):
    if len(record.features) != schema.feature_dim:
        raise ValueError(
            f"record '{record.record_id}' has {len(record.features)} features, schema declares {schema.feature_dim}"
        )
    optional = set(schema.optional_features)
    for i, value in enumerate(record.features):
        if value is None:
            if i not in optional:
                raise ValueError(f"record '{record.record_id}' feature {i} is null but not declared optional")
        elif not math.isfinite(value):
            raise ValueError(f"record '{record.record_id}' feature {i} is not finite")
    lo, hi = schema.seniority_levels
    for field in ("user_seniority", "doc_seniority"):
        level = getattr(record, field)
        if level is not None and not lo <= level <= hi:
            raise ValueError(f"record '{record.record_id}' {field}={level} outside [{lo}, {hi}]")


def load_records(path, schema: schemas.DatasetSchema) -> List[QueryDocRecord]:
    records: List[QueryDocRecord] = []
    seen: Dict[str, int] = {}
    for line_number, row in iter_jsonl(path):
        try:
            record = QueryDocRecord.model_validate(row)
            validate_record(record, schema)
        except (ValidationError, ValueError) as e:
            raise DataValidationError(str(e), path=str(path), line_number=line_number)
        if record.record_id in seen:
            raise DataValidationError(
                f"duplicate record_id '{record.record_id}' (first seen on line {seen[record.record_id]})",
                path=str(path), line_number=line_number,
            )
        seen[record.record_id] = line_number
        records.append(record)
    logger.info(f"Loaded {len(records)} records from {path}")
    return records


def write_records(path, records: Sequence[QueryDocRecord]):
    write_jsonl(path, (r.model_dump(mode="json") for r in records))
    logger.info(f"Wrote {len(records)} records to {path}")


# --- Taxonomy ---

def load_taxonomy(path) -> Taxonomy:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("file not found", path=str(path))
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        logger.warning(f"Taxonomy {path} is empty; taxonomy LFs will abstain")
        return Taxonomy()

    df.columns = df.columns.astype(str).str.strip()
    missing_columns = [c for c in ("title", "industries") if c not in df.columns]
    if missing_columns:
        raise DataValidationError(f"missing columns: {', '.join(missing_columns)}", path=str(path))

    merged: Dict[str, set] = {}
    for index, row in df.iterrows():
        key = " ".join(str(row["title"]).split())
        industries = {s.strip() for s in str(row["industries"]).split("|") if s.strip()}
        if not industries:
            # header is line 1
            raise DataValidationError(f"taxonomy key '{key}' has no industries", path=str(path), line_number=index + 2)
        merged.setdefault(key, set()).update(industries)
    logger.info(f"Loaded taxonomy with {len(merged)} title keys from {path}")
    return Taxonomy(title_to_industry=merged)


def write_taxonomy(path, taxonomy: Taxonomy):
    df = pd.DataFrame(
        [{"title": key, "industries": "|".join(sorted(inds))} for key, inds in sorted(taxonomy.title_to_industry.items())],
        columns=["title", "industries"],
    )
    atomic_write(path, df.to_csv(index=False, lineterminator="\n"))


# --- Vote matrices ---

def votes_to_rows(record_ids: Sequence[str], votes: np.ndarray) -> Iterator[dict]:
    for record_id, row in zip(record_ids, votes):
        yield {"record_id": record_id, "votes": [Vote(int(v)).to_json() for v in row]}


def write_votes(path, record_ids: Sequence[str], votes: np.ndarray):
    if len(record_ids) != len(votes):
        raise DataValidationError(f"{len(record_ids)} record ids for {len(votes)} vote rows", path=str(path))
    write_jsonl(path, votes_to_rows(record_ids, votes))


def load_votes(path, m: Optional[int] = None) -> Tuple[List[str], np.ndarray]:
    record_ids: List[str] = []
    rows: List[List[int]] = []
    for line_number, row in iter_jsonl(path):
        try:
            votes = [int(Vote.from_json(v)) for v in row["votes"]]
            record_id = str(row["record_id"])
        except (KeyError, TypeError, ValueError) as e:
            raise DataValidationError(f"bad vote row: {e}", path=str(path), line_number=line_number)
        if m is None:
            m = len(votes)
        if len(votes) != m:
            raise DataValidationError(f"expected {m} votes, got {len(votes)}", path=str(path), line_number=line_number)
        record_ids.append(record_id)
        rows.append(votes)
    matrix = np.asarray(rows, dtype=np.int8).reshape(len(rows), m or 0)
    return record_ids, matrix


# --- Truth sidecars ---

def write_truth(path, record_ids: Sequence[str], labels: Sequence[int]):
    write_jsonl(path, ({"record_id": r, "label": int(y)} for r, y in zip(record_ids, labels)))


def load_truth(path) -> Dict[str, int]:
    truth: Dict[str, int] = {}
    for line_number, row in iter_jsonl(path):
        label = row.get("label")
        if label not in (0, 1) or isinstance(label, bool):
            raise DataValidationError(f"label must be 0 or 1, got {label!r}", path=str(path), line_number=line_number)
        truth[str(row.get("record_id"))] = int(label)
    return truth


# --- Query groups ---

def to_query_groups(
    records: Sequence[QueryDocRecord],
    label_map: EngagementLabelMap,
    probabilities: Optional[Sequence[float]] = None,
    fill_value: float = 0.0,
) -> List[QueryGroup]:
    """Group records by query_id in first-seen order. Null optional features become fill_value."""
    if probabilities is not None and len(probabilities) != len(records):
        raise DataValidationError(f"{len(probabilities)} probabilities for {len(records)} records")
    grouped: Dict[str, List[QueryDoc]] = {}
    for i, record in enumerate(records):
        y = label_map.value(record.engagement)
        doc = QueryDoc(
            record_id=record.record_id,
            features=[fill_value if v is None else v for v in record.features],
            y_original=y,
            y_effective=y,
            p=0.0 if probabilities is None else float(probabilities[i]),
            engagement=record.engagement,
            advertised=record.advertised,
        )
        grouped.setdefault(record.query_id, []).append(doc)
    return [QueryGroup(query_id=qid, docs=docs) for qid, docs in grouped.items()]


def flatten_docs(groups: Sequence[QueryGroup]) -> List[QueryDoc]:
    return [doc for group in groups for doc in group.docs]


def write_groups(path, groups: Sequence[QueryGroup]):
    def rows():
        for group in groups:
            for doc in group.docs:
                yield {"query_id": group.query_id, **doc.model_dump(mode="json")}
    write_jsonl(path, rows())
    logger.info(f"Wrote {len(groups)} query groups to {path}")


def load_groups(path) -> List[QueryGroup]:
    grouped: Dict[str, List[QueryDoc]] = {}
    dims = set()
    for line_number, row in iter_jsonl(path):
        try:
            query_id = str(row.pop("query_id"))
            doc = QueryDoc.model_validate(row)
        except (KeyError, ValidationError) as e:
            raise DataValidationError(f"bad relabeled row: {e}", path=str(path), line_number=line_number)
        dims.add(len(doc.features))
        if len(dims) > 1:
            raise DataValidationError(f"feature dimension changes to {len(doc.features)}", path=str(path), line_number=line_number)
        grouped.setdefault(query_id, []).append(doc)
    return [QueryGroup(query_id=qid, docs=docs) for qid, docs in grouped.items()]
