"""The text-game agent: history-penalized epsilon-greedy selection, replay memory, DQN-style training."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .game_model import GameDefinition
from .network import (
    NetConfig,
    NetworkParams,
    NumericError,
    OptimizerState,
    _row_cosine,
    backward,
    branch_outputs,
    init_params,
    rmsprop_step,
)
from .simulator import EpisodeTrace, Observation, SimSession, play_episode
from .text import UNK_ID, TokenSeq, Vocabulary

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Experience:
    state: TokenSeq
    action: TokenSeq
    reward: float
    next_state: TokenSeq
    next_actions: tuple[TokenSeq, ...]
    game_id: str = ""

    @property
    def terminal(self) -> bool:
        return not self.next_actions


class _Pool:
    """Set of slot indices with O(1) add, remove and uniform indexing."""

    def __init__(self):
        self.items: list[int] = []
        self.pos: dict[int, int] = {}

    def add(self, slot: int) -> None:
        self.pos[slot] = len(self.items)
        self.items.append(slot)

    def remove(self, slot: int) -> None:
        i = self.pos.pop(slot)
        last = self.items.pop()
        if last != slot:
            self.items[i] = last
            self.pos[last] = i

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, slot: int) -> bool:
        return slot in self.pos


class ReplayMemory:
    """FIFO ring buffer that keeps a live index of positive-reward entries."""

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.slots: list[Experience | None] = [None] * capacity
        self.next_slot = 0
        self.size = 0
        self.positive = _Pool()
        self.rest = _Pool()

    def __len__(self) -> int:
        return self.size

    def add(self, e: Experience) -> None:
        slot = self.next_slot
        old = self.slots[slot]
        if old is not None:
            (self.positive if slot in self.positive else self.rest).remove(slot)
        else:
            self.size += 1
        self.slots[slot] = e
        (self.positive if e.reward > 0 else self.rest).add(slot)
        self.next_slot = (slot + 1) % self.capacity

    def entries(self) -> list[Experience]:
        """Stored experiences, oldest first."""
        if self.size < self.capacity:
            return [e for e in self.slots[: self.size]]
        return self.slots[self.next_slot :] + self.slots[: self.next_slot]

    def positive_entries(self) -> list[Experience]:
        return [self.slots[i] for i in self.positive.items]


def record_experience(mem: ReplayMemory, e: Experience) -> None:
    mem.add(e)


def _draw(pool: Sequence[int], k: int, rng: np.random.Generator) -> list[int]:
    if k <= 0:
        return []
    replace = len(pool) < k
    picks = rng.choice(len(pool), size=k, replace=replace)
    return [pool[i] for i in picks]


def sample_batch(mem: ReplayMemory, b: int, p: float, rng: np.random.Generator) -> list[Experience]:
    """Draw ``b`` experiences, exactly ``floor(p*b)`` of them with positive reward.

    The remaining draws come from the non-positive entries. With no positives, or
    when ``floor(p*b) == 0``, the batch is uniform over the whole memory.
    Pools smaller than their quota are sampled with replacement.
    """
    if len(mem) == 0:
        raise ValueError("cannot sample from an empty replay memory")
    k = int(np.floor(p * b))
    if k == 0 or len(mem.positive) == 0:
        slots = _draw(mem.positive.items + mem.rest.items, b, rng)
    else:
        slots = _draw(mem.positive.items, k, rng)
        rest = mem.rest.items if len(mem.rest) else mem.positive.items
        slots += _draw(rest, b - k, rng)
    order = rng.permutation(len(slots))
    return [mem.slots[slots[i]] for i in order]


class HistoryCounter(Counter):
    """Per-episode visit counts keyed by (state text, action text)."""

    def visits(self, state_text: str, action_text: str) -> int:
        return self[(state_text, action_text)]

    def visit(self, state_text: str, action_text: str) -> None:
        self[(state_text, action_text)] += 1


def history_transform(q_norm, h):
    """Map normalized Q in [-1, 1] to 2*((q+1)/2)**(h+1) - 1."""
    q_norm = np.asarray(q_norm, dtype=float)
    return 2.0 * ((q_norm + 1.0) / 2.0) ** (np.asarray(h) + 1) - 1.0


def history_scores(q_norm, h):
    """Log of ((q+1)/2)**(h+1): ranks actions exactly as :func:`history_transform`.

    Working in log space keeps the ordering strict where the plain formula
    rounds, e.g. tiny differences in q near 0 or large h pushing values to -1.
    """
    q_norm = np.asarray(q_norm, dtype=float)
    with np.errstate(divide="ignore"):
        return (np.asarray(h) + 1) * (np.log1p(q_norm) - np.log(2.0))


class Scorer:
    """Q-values from a fixed parameter snapshot, memoizing branch outputs per token sequence."""

    def __init__(self, params: NetworkParams, vocab: Vocabulary, encoded: dict[str, TokenSeq] | None = None):
        self.params = params
        self.vocab = vocab
        self._encoded = {} if encoded is None else encoded
        self._out: dict[str, dict[tuple[int, ...], np.ndarray]] = {"state": {}, "action": {}}

    def encode(self, text: str) -> TokenSeq:
        seq = self._encoded.get(text)
        if seq is None:
            seq = self.vocab.encode(text)
            if not seq.ids:
                # text that normalizes to nothing still needs a non-empty input
                seq = TokenSeq((UNK_ID,), text)
            self._encoded[text] = seq
        return seq

    def outputs(self, seqs: Sequence[TokenSeq], branch: str) -> np.ndarray:
        cache = self._out[branch]
        missing = list(dict.fromkeys(s.ids for s in seqs if s.ids not in cache))
        if missing:
            out = branch_outputs(self.params, [TokenSeq(ids) for ids in missing], branch)
            for ids, row in zip(missing, out):
                cache[ids] = row
        return np.array([cache[s.ids] for s in seqs])

    def q_seqs(self, state: TokenSeq, actions: Sequence[TokenSeq]) -> np.ndarray:
        u = self.outputs([state], "state")
        v = self.outputs(actions, "action")
        cos, _, _ = _row_cosine(np.repeat(u, len(actions), axis=0), v)
        return self.params.reward_scale * cos

    def q_values(self, state_text: str, action_texts: Sequence[str]) -> np.ndarray:
        return self.q_seqs(self.encode(state_text), [self.encode(a) for a in action_texts])


def select_action(
    scorer: Scorer | Callable[[str, Sequence[str]], np.ndarray],
    obs: Observation,
    epsilon: float,
    history: HistoryCounter,
    rng: np.random.Generator,
    use_history: bool = True,
    reward_scale: float | None = None,
) -> int:
    """Epsilon-greedy choice over Q-values dampened by the per-episode history.

    ``scorer`` is a :class:`Scorer` or any callable returning raw Q-values for
    ``(state_text, action_texts)``; ``reward_scale`` defaults to the scorer's.
    """
    n = len(obs.action_texts)
    if obs.terminal or n == 0:
        raise ValueError("no actions to choose from")
    if epsilon > 0 and rng.random() < epsilon:
        index = int(rng.integers(n))
    else:
        if isinstance(scorer, Scorer):
            q = scorer.q_values(obs.state_text, obs.action_texts)
            scale = scorer.params.reward_scale if reward_scale is None else reward_scale
        else:
            q = np.asarray(scorer(obs.state_text, obs.action_texts), dtype=float)
            scale = 1.0 if reward_scale is None else reward_scale
        q = np.clip(q / scale, -1.0, 1.0)
        if use_history:
            h = [history.visits(obs.state_text, a) for a in obs.action_texts]
            if len(set(h)) > 1:  # equal counts leave the ranking unchanged
                q = history_scores(q, h)
        index = int(np.argmax(q))
    history.visit(obs.state_text, obs.action_texts[index])
    return index


# -- training ------------------------------------------------------------------


@dataclass
class TrainConfig:
    gamma: float = 0.95
    epsilon: float = 1.0
    epsilon_decay: float = 0.99
    batch_size: int = 256
    prioritized_fraction: float = 0.25
    episodes: int = 500
    learning_rate: float = 0.001
    seed: int = 0
    replay_capacity: int = 100_000
    eval_every: int = 10
    eval_episodes: int = 1
    net: NetConfig = field(default_factory=NetConfig)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError("epsilon_decay must lie in (0, 1]")
        if not 0.0 <= self.prioritized_fraction <= 1.0:
            raise ValueError("prioritized_fraction must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class CurveRow:
    episode: int
    game: str
    epsilon: float
    eval_reward: float
    eval_steps: float
    loss: float


@dataclass
class TrainResult:
    params: NetworkParams
    curve: list[CurveRow]
    losses: list[float]
    epsilons: list[float]
    updates_per_game: Counter
    final_eval: dict[str, "EvalResult"]


def reward_scale_for(games: Sequence[GameDefinition]) -> float:
    scale = max((abs(r) for g in games for r in g.rewards()), default=0.0)
    return scale if scale > 0 else 1.0


def _stream(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, *tags]))


def _targets(params: NetworkParams, vocab: Vocabulary, batch: Sequence[Experience], gamma: float) -> np.ndarray:
    """r for terminal transitions, r + gamma * max_a' Q(s', a') otherwise; clipped to +-reward_scale."""
    scorer = Scorer(params, vocab)
    targets = np.array([e.reward for e in batch], dtype=float)
    boot = [i for i, e in enumerate(batch) if not e.terminal]
    if boot:
        scorer.outputs([batch[i].next_state for i in boot], "state")
        scorer.outputs([a for i in boot for a in batch[i].next_actions], "action")
        for i in boot:
            e = batch[i]
            targets[i] += gamma * float(np.max(scorer.q_seqs(e.next_state, e.next_actions)))
    R = params.reward_scale
    return np.clip(targets, -R, R)


def play_training_episode(
    session: SimSession,
    scorer: Scorer,
    epsilon: float,
    rng: np.random.Generator,
    memory: ReplayMemory,
    game_id: str,
) -> float:
    history = HistoryCounter()
    obs = session.reset()
    while not obs.terminal:
        index = select_action(scorer, obs, epsilon, history, rng)
        nxt = session.step(index)
        memory.add(
            Experience(
                scorer.encode(obs.state_text),
                scorer.encode(obs.action_texts[index]),
                nxt.reward,
                scorer.encode(nxt.state_text),
                tuple(scorer.encode(a) for a in nxt.action_texts),
                game_id,
            )
        )
        obs = nxt
    return session.total_reward


EvalCallback = Callable[[int, float, NetworkParams], None]


def train(
    games: Sequence[GameDefinition],
    cfg: TrainConfig,
    vocab: Vocabulary,
    params: NetworkParams | None = None,
    eval_games: Sequence[GameDefinition] | None = None,
    on_eval: EvalCallback | None = None,
    episode_offset: int = 0,
    reward_scale: float | None = None,
) -> TrainResult:
    """Train on one or more games: each episode plays every game once, then one RMSProp step.

    ``eval_games`` (default: the training games) are evaluated greedily every
    ``cfg.eval_every`` episodes and after the last one.
    """
    if not games:
        raise ValueError("need at least one game to train on")
    eval_games = list(games) if eval_games is None else list(eval_games)
    if params is None:
        scale = reward_scale if reward_scale is not None else reward_scale_for(games)
        params = init_params(cfg.net, len(vocab), cfg.seed, reward_scale=scale)
    else:
        params = params.copy()
    opt = OptimizerState.for_params(params, cfg.learning_rate)
    memory = ReplayMemory(cfg.replay_capacity)
    rng = _stream(cfg.seed, 1, episode_offset)
    encoded: dict[str, TokenSeq] = {}

    curve: list[CurveRow] = []
    losses: list[float] = []
    epsilons: list[float] = []
    updates: Counter = Counter()
    final_eval: dict[str, EvalResult] = {}

    for e in range(cfg.episodes):
        episode = episode_offset + e
        # closed form rather than repeated multiplication, so eps(e) = eps0 * decay**e exactly
        epsilon = cfg.epsilon * cfg.epsilon_decay**e
        epsilons.append(epsilon)
        scorer = Scorer(params, vocab, encoded)
        for game in games:
            session = SimSession.seeded(game, cfg.seed, episode)
            play_training_episode(session, scorer, epsilon, rng, memory, game.name)

        batch = sample_batch(memory, cfg.batch_size, cfg.prioritized_fraction, rng)
        targets = _targets(params, vocab, batch, cfg.gamma)
        loss, grads = backward(params, [(x.state, x.action, t) for x, t in zip(batch, targets)])
        if not np.isfinite(loss):
            raise NumericError("loss")
        rmsprop_step(params, opt, grads)
        updates.update({x.game_id for x in batch})
        losses.append(loss)
        epsilon = cfg.epsilon * cfg.epsilon_decay ** (e + 1)

        last = e == cfg.episodes - 1
        if (cfg.eval_every and (e + 1) % cfg.eval_every == 0) or last:
            results = evaluate_greedy(params, vocab, eval_games, cfg.eval_episodes, seed=cfg.seed + 7919 * (episode + 1))
            for game in eval_games:
                r = results[game.name]
                curve.append(CurveRow(episode + 1, game.name, epsilon, r.mean_reward, r.mean_steps, loss))
            if last:
                final_eval = results
            if on_eval is not None:
                on_eval(episode + 1, loss, params)
            log.debug("episode %d loss %.4f eps %.4f %s", episode + 1, loss, epsilon,
                      {k: v.mean_reward for k, v in results.items()})
    return TrainResult(params, curve, losses, epsilons, updates, final_eval)


# -- evaluation ----------------------------------------------------------------


@dataclass
class EvalResult:
    mean_reward: float
    mean_steps: float
    rewards: list[float]


def greedy_episode(scorer: Scorer, session: SimSession, use_history: bool = True) -> EpisodeTrace:
    """One epsilon = 0 episode with a fresh history counter."""
    history = HistoryCounter()
    rng = np.random.default_rng(0)  # never consulted at epsilon = 0

    def policy(obs: Observation) -> int:
        return select_action(scorer, obs, 0.0, history, rng, use_history=use_history)

    return play_episode(session, policy)


def evaluate_greedy(
    params: NetworkParams,
    vocab: Vocabulary,
    games: Sequence[GameDefinition],
    episodes_per_game: int = 1,
    seed: int = 0,
    use_history: bool = True,
) -> dict[str, EvalResult]:
    """Mean undiscounted reward of the greedy (epsilon = 0) policy, per game."""
    scorer = Scorer(params, vocab)
    results = {}
    for game in games:
        rewards, steps = [], []
        for ep in range(episodes_per_game):
            trace = greedy_episode(scorer, SimSession.seeded(game, seed, ep), use_history)
            rewards.append(trace.total_reward)
            steps.append(trace.length)
        results[game.name] = EvalResult(float(np.mean(rewards)), float(np.mean(steps)), rewards)
    return results
