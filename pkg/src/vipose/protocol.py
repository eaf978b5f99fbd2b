"""Adapter that lets the protocol harness train a scheme on its split."""

from __future__ import annotations

import numpy as np

from .model import ModelConfig, Pipeline
from .skeleton import SkeletonTopology
from .train import EpochLog, TrainConfig, train_scheme


class TrainableScheme:
    """``fit``/``predict`` wrapper around one scheme for run_protocol."""

    def __init__(self, scheme_name: str, train_config: TrainConfig,
                 model_config: ModelConfig, topo: SkeletonTopology):
        self.scheme_name = scheme_name
        self.train_config = train_config
        self.model_config = model_config
        self.topo = topo
        self.pipeline: Pipeline | None = None
        self.history: list[EpochLog] = []

    def fit(self, poses2d: np.ndarray, poses3d: np.ndarray) -> None:
        self.pipeline, self.history = train_scheme(
            self.scheme_name, poses2d, poses3d, self.train_config,
            self.model_config, self.topo)

    def predict(self, poses2d: np.ndarray) -> np.ndarray:
        if self.pipeline is None:
            raise RuntimeError("fit must run before predict")
        return self.pipeline.predict(poses2d)
