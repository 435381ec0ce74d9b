"""Splitting, validation and the three-class model families."""
from .models import (FAMILIES, ClassifierSpec, TrainedModel, class_weights, derive_seed,
                     model_from_dict, model_from_json, predict_proba, register_family, train)
from .validation import (SEARCH_SPACES, DatasetSplit, SplitSpec, chronological_split,
                         classification_report, expanding_cv_folds, macro_f1, predicted_states,
                         randomized_search)

__all__ = [
    "FAMILIES", "ClassifierSpec", "TrainedModel", "class_weights", "derive_seed",
    "model_from_dict", "model_from_json", "predict_proba", "register_family", "train",
    "SEARCH_SPACES", "DatasetSplit", "SplitSpec", "chronological_split",
    "classification_report", "expanding_cv_folds", "macro_f1", "predicted_states",
    "randomized_search",
]
