from .policy import LearnedPolicy, PolicySet
from .train import TrainConfig, Trainer, load_policy, train

__all__ = ["LearnedPolicy", "PolicySet", "TrainConfig", "Trainer", "load_policy", "train"]
