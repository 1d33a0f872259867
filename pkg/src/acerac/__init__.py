"""Actor-critic with experience replay and autocorrelated (AR) exploration noise."""

from .envs import make_env
from .learner import AceracLearner, LearnerConfig
from .noise import NoiseParams, NoiseState
from .replay import ReplayMemory, Transition

__all__ = [
    "AceracLearner",
    "LearnerConfig",
    "NoiseParams",
    "NoiseState",
    "ReplayMemory",
    "Transition",
    "make_env",
]
__version__ = "0.1.0"
