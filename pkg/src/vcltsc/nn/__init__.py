from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import Conv2D, Dense, Dropout, Flatten, Linear, MaxPool2D, ReLU, Softmax
from .net import Sequential, build_actor_critic, build_dqn_net, build_mlp_actor_critic, build_mlp_dqn
from .optim import Optimizer, OptimizerState, optimize_step

__all__ = [
    "Checkpoint", "Conv2D", "Dense", "Dropout", "Flatten", "Linear", "MaxPool2D", "Optimizer", "OptimizerState",
    "ReLU", "Sequential", "Softmax", "build_actor_critic", "build_dqn_net", "build_mlp_actor_critic",
    "build_mlp_dqn", "grad_check", "load_checkpoint", "optimize_step", "save_checkpoint",
]
