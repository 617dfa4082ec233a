"""Dataset ingestion, synthetic cohorts and persistence."""

from .manifest import (
    Dataset,
    DatasetManifest,
    SessionEntry,
    SubjectEntry,
    load_dataset,
    read_manifest,
    read_record_table,
    write_dataset,
    write_manifest,
    write_record_table,
)
from .pipeline import cache_features, extract_feature_store, segment_dataset, stack_blocks
from .store import ArrayStore, ModelBundle, load_bundle, save_bundle
from .synthetic import SyntheticCohort, SyntheticSubjectParams, synthesize_cohort, synthesize_ecg

__all__ = [
    "ArrayStore",
    "Dataset",
    "DatasetManifest",
    "ModelBundle",
    "SessionEntry",
    "SubjectEntry",
    "SyntheticCohort",
    "SyntheticSubjectParams",
    "cache_features",
    "extract_feature_store",
    "load_bundle",
    "load_dataset",
    "read_manifest",
    "read_record_table",
    "save_bundle",
    "segment_dataset",
    "stack_blocks",
    "synthesize_cohort",
    "synthesize_ecg",
    "write_dataset",
    "write_manifest",
    "write_record_table",
]
