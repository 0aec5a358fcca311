"""Discrete-time simulator and analysis toolkit for multi-channel wireless
downlink scheduling: greedy and matching-based policies, delay rate-function
estimation, and executable property checks."""

from .analysis import BoundInputs, estimate_rate_function, i_ag, i_u, i_x
from .engine import MetricsAccumulator, Schedule, SystemState, run, step
from .matching import WeightedBipartiteGraph, max_weight_matching
from .model import (IidBernoulli0L, IidOnOff, ModelConfig, Packet, SamplePath,
                    TwoStateMarkov, TwoStateMarkovChannel, generate_sample_path,
                    packet_precedes)
from .policies import FrameState, GFBS, make_policy

__version__ = "0.1.0"

__all__ = [
    "BoundInputs", "FrameState", "GFBS", "IidBernoulli0L", "IidOnOff",
    "MetricsAccumulator", "ModelConfig", "Packet", "SamplePath", "Schedule",
    "SystemState", "TwoStateMarkov", "TwoStateMarkovChannel",
    "WeightedBipartiteGraph", "estimate_rate_function", "generate_sample_path",
    "i_ag", "i_u", "i_x", "make_policy", "max_weight_matching",
    "packet_precedes", "run", "step",
]
