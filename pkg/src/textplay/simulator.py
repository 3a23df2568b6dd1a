"""Episode simulation over a GameDefinition (the agent-environment loop)."""

from __future__ import annotations

import hashlib
import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .game_model import GameDefinition, Node


class SessionFinishedError(RuntimeError):
    pass


@dataclass(frozen=True)
class Observation:
    state_text: str
    action_texts: tuple[str, ...]
    reward: float
    terminal: bool


def session_seed(seed: int, game_name: str, episode: int) -> np.random.SeedSequence:
    """Independent RNG stream for one (experiment seed, game, episode) triple."""
    return np.random.SeedSequence([seed & 0xFFFFFFFF, zlib.crc32(game_name.encode("utf-8")), episode])


def _sample(rng: np.random.Generator, probs) -> int:
    if len(probs) == 1:
        return 0
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


@dataclass
class SimSession:
    game: GameDefinition
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    current: str = ""
    steps_taken: int = 0
    total_reward: float = 0.0
    finished: bool = False

    @classmethod
    def seeded(cls, game: GameDefinition, seed: int = 0, episode: int = 0) -> "SimSession":
        return cls(game, np.random.default_rng(session_seed(seed, game.name, episode)))

    def __post_init__(self):
        if not self.current:
            self.current = self.game.start_node

    @property
    def node(self) -> Node:
        return self.game.nodes[self.current]

    def _observe(self, reward: float) -> Observation:
        node = self.node
        text = node.descriptions[_sample(self.rng, [d.prob for d in node.descriptions])].text
        self.finished = node.terminal or self.steps_taken >= self.game.max_steps
        actions = () if self.finished else tuple(a.text for a in node.actions)
        return Observation(text, actions, reward, self.finished)

    def reset(self) -> Observation:
        self.current = self.game.start_node
        self.steps_taken = 0
        self.total_reward = 0.0
        return self._observe(0.0)

    def step(self, action_index: int) -> Observation:
        if self.finished:
            raise SessionFinishedError("step called on a finished session")
        actions = self.node.actions
        if not 0 <= action_index < len(actions):
            raise IndexError(f"action index {action_index} out of range for {len(actions)} actions")
        action = actions[action_index]
        outcome = action.outcomes[_sample(self.rng, [o.prob for o in action.outcomes])]
        self.current = outcome.target
        self.total_reward += outcome.reward
        self.steps_taken += 1
        return self._observe(outcome.reward)


def reset(session: SimSession) -> Observation:
    return session.reset()


def step(session: SimSession, action_index: int) -> Observation:
    return session.step(action_index)


@dataclass
class EpisodeTrace:
    steps: list[tuple[str, str, float]]
    total_reward: float
    finished: bool = True

    @property
    def length(self) -> int:
        return len(self.steps)

    def to_log(self) -> str:
        """One line per step: index, short hash of the state text, action text, reward."""
        lines = []
        for i, (state, action, reward) in enumerate(self.steps):
            digest = hashlib.sha1(state.encode("utf-8")).hexdigest()[:12]
            lines.append(f"{i}\t{digest}\t{action}\t{reward!r}")
        lines.append(f"total\t{self.total_reward!r}")
        return "\n".join(lines) + "\n"


Policy = Callable[[Observation], int]


def play_episode(session: SimSession, policy: Policy) -> EpisodeTrace:
    obs = session.reset()
    steps = []
    while not obs.terminal:
        index = policy(obs)
        action_text = obs.action_texts[index] if 0 <= index < len(obs.action_texts) else "?"
        state_text = obs.state_text
        obs = session.step(index)
        steps.append((state_text, action_text, obs.reward))
    return EpisodeTrace(steps, session.total_reward, session.finished)


def uniform_policy(rng: np.random.Generator) -> Policy:
    return lambda obs: int(rng.integers(len(obs.action_texts)))
