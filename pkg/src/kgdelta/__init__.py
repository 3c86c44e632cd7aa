"""Streams of RDF triple deletions/additions built from Wikibase revision-history dumps."""

from kgdelta.dataset import Dataset, validate_dataset
from kgdelta.delta import IncrementalRevision, diff_key, graph_diff, make_incremental, replay
from kgdelta.model import EntityId, parse_entity_id, parse_revision_json
from kgdelta.rdf import Triple, serialize_revision, simple_statement_filter
from kgdelta.stats import compute_stats, emit_csv
from kgdelta.streams import EntityArchive, merge_global, read_entity, read_global

__all__ = [
    "Dataset",
    "EntityArchive",
    "EntityId",
    "IncrementalRevision",
    "Triple",
    "compute_stats",
    "diff_key",
    "emit_csv",
    "graph_diff",
    "make_incremental",
    "merge_global",
    "parse_entity_id",
    "parse_revision_json",
    "read_entity",
    "read_global",
    "replay",
    "serialize_revision",
    "simple_statement_filter",
    "validate_dataset",
]
__version__ = "0.1.0"
