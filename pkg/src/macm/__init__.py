"""Multiplicative-additive constrained models (MACMs) and their baselines.

Quick start::

    from macm import data, models, training

    ds, _ = data.minmax_normalize(data.load_csv("housing.csv", "price"))
    model = models.ModelBlueprint("macm_poly", degree=3).build(ds.n_features, seed=0)
    training.train(model, ds, training.TrainConfig(epochs=500))
"""
from .data import Dataset, FeatureSpec, FoldSplit, kfold_split, load_csv, minmax_normalize
from .errors import (
    DataError,
    MacmError,
    NumericOverflowError,
    SchemaError,
    UnsupportedOperationError,
    ValidationError,
)
from .kernels import BACKEND
from .models import (
    AblationModel,
    CesrModel,
    EsrModel,
    MacmModel,
    ModelBlueprint,
    ergodic_terms,
    load,
    model_grad,
    save,
)
from .shapes import MlpShape, PolynomialShape, init_shape
from .training import AdamState, TrainConfig, cross_validate, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AblationModel",
    "AdamState",
    "CesrModel",
    "DataError",
    "Dataset",
    "EsrModel",
    "FeatureSpec",
    "FoldSplit",
    "MacmError",
    "MacmModel",
    "MlpShape",
    "ModelBlueprint",
    "NumericOverflowError",
    "PolynomialShape",
    "SchemaError",
    "TrainConfig",
    "UnsupportedOperationError",
    "ValidationError",
    "cross_validate",
    "ergodic_terms",
    "evaluate",
    "init_shape",
    "kfold_split",
    "load",
    "load_csv",
    "minmax_normalize",
    "model_grad",
    "save",
    "train",
]
