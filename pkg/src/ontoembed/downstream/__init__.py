"""EHR handling, metrics and the reference recommender."""

from .ehr import Admission, DdiMatrix, PatientRecord, load_ddi_pairs, load_ehr, save_ehr
from .evaluate import evaluate, format_report
from .metrics import ddi_score, jaccard, precision_recall_f1
from .recommender import ReferenceRecommender, train_reference_model
from .split import SplitSpec, split_dataset

__all__ = [
    "Admission", "DdiMatrix", "PatientRecord", "ReferenceRecommender", "SplitSpec",
    "ddi_score", "evaluate", "format_report", "jaccard", "load_ddi_pairs", "load_ehr",
    "precision_recall_f1", "save_ehr", "split_dataset", "train_reference_model",
]
