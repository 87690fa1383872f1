"""Desk-scale streaming SLU network."""
from streamslu.network.checkpoint import load_checkpoint, save_checkpoint
from streamslu.network.config import ConvSpec, ModelConfig
from streamslu.network.layers import time_reduce
from streamslu.network.model import ForwardOutput, HeadGrads, Pipeline, SluModel, backward, forward
from streamslu.network.objectives import last_step_ce, objective
from streamslu.network.params import ModelParams

__all__ = [
    "ConvSpec",
    "ForwardOutput",
    "HeadGrads",
    "ModelConfig",
    "ModelParams",
    "Pipeline",
    "SluModel",
    "backward",
    "forward",
    "last_step_ce",
    "load_checkpoint",
    "objective",
    "save_checkpoint",
    "time_reduce",
]
