from .core import (
    N_ACTIONS,
    ReplayBuffer,
    RolloutBuffer,
    Transition,
    bellman_target,
    clipped_objective,
    clipped_objective_grad,
    epsilon,
    gae,
    q_learning_update,
    ratio,
    select_action_dqn,
)
from .dqn import DqnAgent, DqnConfig, dqn_train_step
from .env import SignalEnv
from .ppo import PpoAgent, PpoConfig, advantages_and_returns, ppo_update
from .train import (
    PolicyController,
    TrainResult,
    agent_from_checkpoint,
    check_transfer,
    load_policy,
    make_encoder,
    make_nets,
    save_result,
    train_dqn,
    train_ppo,
    write_train_log,
)

__all__ = [
    "N_ACTIONS", "DqnAgent", "DqnConfig", "PolicyController", "PpoAgent", "PpoConfig", "ReplayBuffer",
    "RolloutBuffer", "SignalEnv", "TrainResult", "Transition", "advantages_and_returns", "agent_from_checkpoint",
    "bellman_target", "check_transfer", "clipped_objective", "clipped_objective_grad", "dqn_train_step", "epsilon",
    "gae", "load_policy", "make_encoder", "make_nets", "ppo_update", "q_learning_update", "ratio",
    "save_result", "select_action_dqn", "train_dqn", "train_ppo", "write_train_log",
]
