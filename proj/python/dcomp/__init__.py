"""Composed discrete generation on enumerable toy worlds."""

from ._dcomp import (
    DcompError,
    ExactModel,
    FactorizedWorld,
    Model,
    SceneWorld,
    World,
    compose,
    compose_logits,
    error_eval,
    fit_count_model,
    load_count_model,
    normalize,
    sample,
    satisfaction_probability,
)

__all__ = [
    "DcompError",
    "ExactModel",
    "FactorizedWorld",
    "Model",
    "SceneWorld",
    "World",
    "compose",
    "compose_logits",
    "error_eval",
    "fit_count_model",
    "load_count_model",
    "normalize",
    "sample",
    "satisfaction_probability",
]
