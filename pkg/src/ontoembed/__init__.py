"""Ontology embeddings pretrained by maximising the satisfiability of
first-order axioms under fuzzy semantics, aligned across ontologies through
an indication relation, and evaluated as initialisation for a medication
recommender."""

__version__ = "0.1.0"

from .errors import (ConfigError, CycleError, DataError, DimensionMismatch, DivergenceError,
                     EmptyDomain, EmptyKnowledgeBase, MultiParentError, OntoEmbedError,
                     OrphanError, ParseError, UndefinedMetric, UnknownCode, UnknownNode)
from .grounding import (EmbeddingTable, ModelCheckpoint, PredicateNet, export_embeddings,
                        init_embeddings, load_checkpoint, load_embeddings, save_checkpoint)
from .logic import AggregationConfig, forall, fz_and, fz_implies, fz_not, sat_agg
from .ontology import KINDS, OntologyDag, OntologyKind, depth_of, derive_relations, load_ontology
from .sampler import AxiomBatch, batch_footprint, sample_batch
from .trainer import TrainConfig, TrainState, grad_check, select_checkpoints, train

__all__ = [
    "AggregationConfig", "AxiomBatch", "ConfigError", "CycleError", "DataError",
    "DimensionMismatch", "DivergenceError", "EmbeddingTable", "EmptyDomain",
    "EmptyKnowledgeBase", "KINDS", "ModelCheckpoint", "MultiParentError", "OntoEmbedError",
    "OntologyDag", "OntologyKind", "OrphanError", "ParseError", "PredicateNet", "TrainConfig",
    "TrainState", "UndefinedMetric", "UnknownCode", "UnknownNode", "batch_footprint",
    "depth_of", "derive_relations", "export_embeddings", "forall", "fz_and", "fz_implies",
    "fz_not", "grad_check", "init_embeddings", "load_checkpoint", "load_embeddings",
    "load_ontology", "sample_batch", "sat_agg", "save_checkpoint", "select_checkpoints", "train",
]
