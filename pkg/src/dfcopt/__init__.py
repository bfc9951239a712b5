"""Layout design for coupled-resonator bandpass filters.

Modules, bottom-up:

- :mod:`dfcopt.circuit` - resonator parameters, layouts, validity, random templates
- :mod:`dfcopt.surrogate` - coupling-matrix response model (layout -> complex s21)
- :mod:`dfcopt.metrics` - passbands, multi-band IOU, reward functions
- :mod:`dfcopt.autodiff` / :mod:`dfcopt.nn` - reverse-mode autodiff, layers, Adam
- :mod:`dfcopt.gnn` - graph attention surrogate trained on model data
- :mod:`dfcopt.env` - the editing environment and best-of-K initialization
- :mod:`dfcopt.ppo` - PPO agent and the round-chained optimizer
- :mod:`dfcopt.pipeline` / :mod:`dfcopt.cli` - runs, artifacts, batch studies
"""

__version__ = "0.1.0"

from .circuit import Layout, ParamBounds, Resonator, TemplateSpec, sample_random_layout, validate_layout
from .metrics import PassbandSpec, RewardBreakdown, RewardConfig, multiband_iou, response_metrics
from .surrogate import AnalyticOracle, FrequencyGrid, SParams, SurrogateConfig, simulate

__all__ = [
    "AnalyticOracle", "FrequencyGrid", "Layout", "ParamBounds", "PassbandSpec", "Resonator", "RewardBreakdown",
    "RewardConfig", "SParams", "SurrogateConfig", "TemplateSpec", "multiband_iou", "response_metrics",
    "sample_random_layout", "simulate", "validate_layout",
]
