"""
Visit logs -> labelled diagnosis-frequency vectors.

A patient is positive when any visit carries a code from a target cluster.
For positives every visit from `horizon_days` before the first target
diagnosis onward is removed, so the predictors only see history that was
available in advance. Patients left with fewer than two visits are
excluded, and target-cluster features are zeroed for everyone.
"""

import json
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Sequence, Union

import numpy as np
import pandas as pd

from errors import InsufficientData, InvalidSpec, MalformedDate, UnmappedCode, ValidationError
from estimators import LabeledDataset

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Audit reason codes
UNMAPPED_CODE = 'unmapped_code'
HORIZON_WINDOW = 'horizon_window'
AFTER_FIRST_DIAGNOSIS = 'after_first_diagnosis'
INSUFFICIENT_VISITS = 'insufficient_visits'

MIN_VISITS = 2


# ---------- Data structures ----------

@dataclass(frozen=True)
class VisitRecord:
    patient_id: str
    visit_date: date
    code: str

    def __post_init__(self):
        if not self.code:
            raise ValidationError(f"empty diagnosis code for patient {self.patient_id}")


@dataclass(frozen=True)
class CodeMap:
    """Raw code -> dense cluster id 0..C-1, plus the clusters that define a positive."""

    mapping: Dict[str, int]
    target_clusters: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self):
        clusters = set(self.mapping.values())
        if not clusters:
            raise InvalidSpec("code map is empty")
        if clusters != set(range(len(clusters))):
            raise InvalidSpec("cluster ids must be contiguous integers starting at 0")
        missing = set(self.target_clusters) - clusters
        if missing:
            raise InvalidSpec(f"target clusters {sorted(missing)} do not appear in the code map")
        object.__setattr__(self, 'target_clusters', frozenset(self.target_clusters))

    @property
    def n_clusters(self) -> int:
        return len(set(self.mapping.values()))


class UnmappedPolicy(str, Enum):
    SKIP = 'skip'
    FAIL = 'fail'


@dataclass(frozen=True)
class AuditEntry:
    patient_id: str
    reason: str
    count: int


@dataclass
class IngestResult:
    patient_ids: List[str]
    features: np.ndarray    # (n, C) int64
    labels: np.ndarray      # (n,) int64
    audit: List[AuditEntry]

    def to_dataset(self) -> LabeledDataset:
        if not self.patient_ids:
            raise InsufficientData("no patient survived the exclusion rules")
        return LabeledDataset(self.features, self.labels)


# ---------- Readers ----------

def read_visits_csv(path: PathLike) -> List[VisitRecord]:
    """Read a visits CSV with header patient_id,visit_date,code (ISO-8601 dates)."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = {'patient_id', 'visit_date', 'code'} - set(frame.columns)
    if missing:
        raise ValidationError(f"{path}: missing columns {sorted(missing)}")
    try:
        dates = pd.to_datetime(frame['visit_date'].str.strip(), format='%Y-%m-%d', errors='raise')
    except (ValueError, TypeError) as e:
        raise MalformedDate(f"{path}: {e}") from e
    return [
        VisitRecord(str(pid).strip(), ts.date(), str(code).strip())
        for pid, ts, code in zip(frame['patient_id'], dates, frame['code'])
    ]


def read_code_map_csv(path: PathLike, target_clusters: Iterable[int]) -> CodeMap:
    """Read a code map CSV with header code,cluster."""
    frame = pd.read_csv(path, dtype={'code': str, 'cluster': np.int64}, keep_default_na=False)
    if 'code' not in frame.columns or 'cluster' not in frame.columns:
        raise ValidationError(f"{path}: expected header code,cluster")
    mapping = {str(c).strip(): int(k) for c, k in zip(frame['code'], frame['cluster'])}
    return CodeMap(mapping, frozenset(int(t) for t in target_clusters))


def parse_target_clusters(text: str) -> FrozenSet[int]:
    try:
        return frozenset(int(part) for part in text.split(',') if part.strip())
    except ValueError as e:
        raise InvalidSpec(f"bad --target-clusters value '{text}'") from e


# ---------- Core ----------

def _process_patient(
    patient_id: str,
    records: Sequence[VisitRecord],
    code_map: CodeMap,
    horizon_days: int,
    unmapped: UnmappedPolicy,
    audit: List[AuditEntry],
):
    """Return the frequency vector and label of one patient, or None if excluded."""
    mapped = []
    unmapped_count = 0
    for record in records:
        cluster = code_map.mapping.get(record.code)
        if cluster is None:
            if unmapped is UnmappedPolicy.FAIL:
                raise UnmappedCode(f"code '{record.code}' (patient {patient_id}) is not in the code map")
            unmapped_count += 1
            continue
        mapped.append((record.visit_date, cluster))
    if unmapped_count:
        audit.append(AuditEntry(patient_id, UNMAPPED_CODE, unmapped_count))

    target_dates = [d for d, cluster in mapped if cluster in code_map.target_clusters]
    label = 1 if target_dates else -1

    if label == 1:
        first = min(target_dates)
        visit_dates = {d for d, _ in mapped}
        in_window = sum(1 for d in visit_dates if 0 <= (first - d).days <= horizon_days)
        after = sum(1 for d in visit_dates if d > first)
        if in_window:
            audit.append(AuditEntry(patient_id, HORIZON_WINDOW, in_window))
        if after:
            audit.append(AuditEntry(patient_id, AFTER_FIRST_DIAGNOSIS, after))
        mapped = [(d, cluster) for d, cluster in mapped if (first - d).days > horizon_days]

    n_visits = len({d for d, _ in mapped})
    if n_visits < MIN_VISITS:
        audit.append(AuditEntry(patient_id, INSUFFICIENT_VISITS, n_visits))
        return None

    vector = np.bincount([cluster for _, cluster in mapped], minlength=code_map.n_clusters)
    vector[list(code_map.target_clusters)] = 0
    return vector.astype(np.int64), label


def build_frequency_vectors(
    visits: Iterable[VisitRecord],
    code_map: CodeMap,
    horizon_days: int,
    unmapped: UnmappedPolicy = UnmappedPolicy.SKIP,
) -> IngestResult:
    """
    Turn visit records into one frequency vector per surviving patient.

    Args:
        visits: records in any order
        code_map: code -> cluster map with the target clusters
        horizon_days: days before the first target diagnosis to exclude
        unmapped: skip (and audit) or fail on codes missing from the map

    Returns:
        IngestResult sorted by patient_id, with the audit trail
    """
    if horizon_days < 1:
        raise ValidationError(f"horizon_days must be a positive integer, got {horizon_days}")
    unmapped = UnmappedPolicy(unmapped)

    by_patient: Dict[str, List[VisitRecord]] = defaultdict(list)
    for record in visits:
        by_patient[record.patient_id].append(record)

    patient_ids: List[str] = []
    vectors = []
    labels = []
    audit: List[AuditEntry] = []
    for patient_id in sorted(by_patient):
        records = sorted(by_patient[patient_id], key=lambda r: (r.visit_date, r.code))
        outcome = _process_patient(patient_id, records, code_map, horizon_days, unmapped, audit)
        if outcome is None:
            continue
        vector, label = outcome
        patient_ids.append(patient_id)
        vectors.append(vector)
        labels.append(label)

    n_clusters = code_map.n_clusters
    features = np.vstack(vectors) if vectors else np.zeros((0, n_clusters), dtype=np.int64)
    logger.info("[ingest] horizon %dd: kept %d of %d patients (%d positive)",
                horizon_days, len(patient_ids), len(by_patient), labels.count(1))
    return IngestResult(patient_ids, features, np.asarray(labels, dtype=np.int64), audit)


# ---------- Writers ----------

def write_audit_jsonl(path: PathLike, audit: Iterable[AuditEntry]) -> None:
    lines = [json.dumps(asdict(entry)) for entry in audit]
    Path(path).write_text(''.join(line + '\n' for line in lines))


def write_ingest_csv(path: PathLike, result: IngestResult) -> None:
    """Dataset CSV (label,f1,...,fC) with integer counts."""
    columns = [f"f{j + 1}" for j in range(result.features.shape[1])]
    frame = pd.DataFrame(result.features, columns=columns)
    frame.insert(0, 'label', result.labels)
    frame.to_csv(path, index=False, lineterminator='\n')
