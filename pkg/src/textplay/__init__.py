"""Choice-based text games, a siamese LSTM Q-learning agent, and exact MDP oracles."""

from .agent import (
    Experience,
    HistoryCounter,
    ReplayMemory,
    Scorer,
    TrainConfig,
    evaluate_greedy,
    history_transform,
    record_experience,
    sample_batch,
    select_action,
    train,
)
from .game_model import (
    GameDefinition,
    GameFormatError,
    GameParseError,
    GameSchemaError,
    ValidationReport,
    parse_game_file,
    validate_game,
)
from .harness import ConfigError, ScenarioConfig, bundled_games, load_game, run_scenario, token_overlap
from .network import NetConfig, NetworkParams, backward, finite_diff_check, init_params, q_value, rmsprop_step
from .oracle import optimal_value, policy_value, random_baseline
from .simulator import Observation, SimSession, play_episode, reset, step
from .text import Vocabulary, build_vocabulary, encode, pad_batch, preprocess_text

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Experience", "GameDefinition", "GameFormatError", "GameParseError", "GameSchemaError",
    "HistoryCounter", "NetConfig", "NetworkParams", "Observation", "ReplayMemory", "ScenarioConfig", "Scorer",
    "SimSession", "TrainConfig", "ValidationReport", "Vocabulary", "backward", "build_vocabulary", "bundled_games",
    "encode", "evaluate_greedy", "finite_diff_check", "history_transform", "init_params", "load_game",
    "optimal_value", "pad_batch", "parse_game_file", "play_episode", "policy_value", "preprocess_text", "q_value",
    "random_baseline", "record_experience", "reset", "rmsprop_step", "run_scenario", "sample_batch",
    "select_action", "step", "token_overlap", "train", "validate_game",
]
