"""Sensing-aided mmWave beam prediction toolkit: codebook/channel simulation,
synthetic challenge datasets, a position-only GRU baseline and DBA scoring."""

from .beamsim import (ArrayConfig, BeamCodebook, ChannelState, Path, build_codebook,
                      optimal_beam, receive_power, steering_vector, synth_channel)
from .dataset import ChallengeSample, ScenarioConfig
from .geodesy import GeoPosition, NormalizationStats, UtmCoordinate, latlon_to_utm
from .metrics import MetricConfig, MetricReport, PredictionSet, dba_score, power_ratio, top_k_accuracy
from .model import ModelConfig

__version__ = "0.1.0"
