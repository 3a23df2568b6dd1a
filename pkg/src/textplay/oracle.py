"""Exact solutions on the known game MDP: optimal value, policy evaluation, random baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .game_model import GameDefinition

TIE_TOL = 1e-12
VALUE_TOL = 1e-9


@dataclass
class MdpView:
    """Dense arrays over node ids; descriptions are dropped (they do not affect dynamics)."""

    states: list[str]
    n_actions: np.ndarray  # (S,)
    transition: np.ndarray  # (S, A, S)  P(s'|s,a)
    expected_reward: np.ndarray  # (S, A)    sum_s' P(s'|s,a) R(s,a,s')
    terminal: np.ndarray  # (S,) bool
    start: int
    horizon: int

    @classmethod
    def from_game(cls, game: GameDefinition) -> "MdpView":
        states = list(game.nodes)
        index = {s: i for i, s in enumerate(states)}
        S = len(states)
        A = max((len(n.actions) for n in game.nodes.values()), default=0)
        P = np.zeros((S, max(A, 1), S))
        R = np.zeros((S, max(A, 1)))
        n_actions = np.zeros(S, dtype=int)
        terminal = np.zeros(S, dtype=bool)
        for s, node in game.nodes.items():
            i = index[s]
            terminal[i] = node.terminal
            n_actions[i] = len(node.actions)
            for a, edge in enumerate(node.actions):
                for o in edge.outcomes:
                    P[i, a, index[o.target]] += o.prob
                    R[i, a] += o.prob * o.reward
        return cls(states, n_actions, P, R, terminal, index[game.start_node], game.max_steps)

    def index(self, state: str) -> int:
        return self.states.index(state)


@dataclass
class OptimalSolution:
    value: float
    policy: dict[str, int]
    values: dict[str, float]
    converged_at: int | None  # number of stages after which values stopped changing, if before the horizon


def _best_action(q_row: np.ndarray, n: int) -> int:
    """Lowest index among actions within TIE_TOL of the maximum."""
    q = q_row[:n]
    best = q.max()
    return int(np.flatnonzero(q >= best - TIE_TOL)[0])


def _stationary_policy(mdp: MdpView, q: np.ndarray, v: np.ndarray, live: np.ndarray) -> dict[str, int]:
    """Greedy policy for converged values that never stalls on ties.

    With gamma = 1 in a cyclic game, walking round a loop can tie with heading
    for the ending; following such ties forever earns nothing. Among the
    value-optimal actions we therefore take the one with the fewest expected
    steps to an ending (then the lowest index), which reaches the optimum.
    """
    S, A = q.shape
    optimal = (np.arange(A)[None, :] < mdp.n_actions[:, None]) & (q >= v[:, None] - VALUE_TOL)
    steps = np.where(live, np.inf, 0.0)
    succ = {(i, a): np.flatnonzero(mdp.transition[i, a] > 0) for i in np.flatnonzero(live) for a in range(A)}

    def expected_steps(i, a, d):
        js = succ[(i, a)]
        return 1.0 + float(mdp.transition[i, a, js] @ d[js])

    for _ in range(mdp.horizon):
        new = steps.copy()
        for i in np.flatnonzero(live):
            new[i] = min(expected_steps(i, a, steps) for a in np.flatnonzero(optimal[i]))
        if np.array_equal(new, steps):
            break
        steps = new

    policy = {}
    for i in np.flatnonzero(live):
        candidates = np.flatnonzero(optimal[i])
        if np.isfinite(steps[i]):
            candidates = [a for a in candidates if expected_steps(i, a, steps) <= steps[i] + VALUE_TOL]
        policy[mdp.states[i]] = int(candidates[0])
    return policy


def optimal_value(game: GameDefinition, gamma: float = 1.0) -> OptimalSolution:
    """Finite-horizon value iteration with horizon = max_steps.

    When values converge before the horizon (reported in ``converged_at``) the
    returned ``policy`` is stationary and optimal; see :func:`_stationary_policy`
    for how ties are broken. Otherwise it is the greedy policy of the first
    stage (ties to the lowest index).
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    mdp = MdpView.from_game(game)
    S, A = mdp.expected_reward.shape
    valid = np.arange(A)[None, :] < mdp.n_actions[:, None]
    live = ~mdp.terminal & (mdp.n_actions > 0)

    v = np.zeros(S)
    converged_at = None
    q = np.zeros((S, A))
    for k in range(1, mdp.horizon + 1):
        q = mdp.expected_reward + gamma * (mdp.transition @ v)
        q = np.where(valid, q, -np.inf)
        v_new = np.where(live, q.max(axis=1, initial=-np.inf), 0.0)
        if converged_at is None and np.array_equal(v_new, v):
            converged_at = k - 1
        v = v_new

    if converged_at is not None:
        policy = _stationary_policy(mdp, q, v, live)
    else:
        policy = {mdp.states[i]: _best_action(q[i], mdp.n_actions[i]) for i in range(S) if live[i]}
    values = {mdp.states[i]: float(v[i]) for i in range(S)}
    return OptimalSolution(float(v[mdp.start]), policy, values, converged_at)


class PolicyError(KeyError):
    pass


PolicySpec = Union[Mapping[str, Union[int, Sequence[float]]], Callable[[str], Union[int, Sequence[float]]]]


def _policy_matrix(mdp: MdpView, policy: PolicySpec) -> np.ndarray:
    """Action distributions (S, A); rows of unreachable states stay NaN."""
    S, A = mdp.expected_reward.shape
    pi = np.full((S, A), np.nan)
    lookup = policy if callable(policy) else policy.__getitem__
    stack, seen = [mdp.start], {mdp.start}
    while stack:
        i = stack.pop()
        if mdp.terminal[i] or mdp.n_actions[i] == 0:
            continue
        try:
            choice = lookup(mdp.states[i])
        except KeyError:
            raise PolicyError(f"policy is undefined for reachable state {mdp.states[i]!r}") from None
        n = mdp.n_actions[i]
        row = np.zeros(A)
        if isinstance(choice, (int, np.integer)):
            if not 0 <= choice < n:
                raise PolicyError(f"policy picks invalid action {choice} in state {mdp.states[i]!r}")
            row[choice] = 1.0
        else:
            probs = np.asarray(choice, dtype=float)
            if probs.shape != (n,) or abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
                raise PolicyError(f"bad action distribution for state {mdp.states[i]!r}")
            row[:n] = probs
        pi[i] = row
        successors = np.flatnonzero((row[:, None] * mdp.transition[i]).sum(axis=0) > 0)
        for j in successors:
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return pi


def policy_value(game: GameDefinition, policy: PolicySpec, gamma: float = 1.0) -> float:
    """Exact finite-horizon expected return of a (possibly stochastic) stationary policy.

    ``policy`` maps node id -> action index or a distribution over the node's actions.
    """
    mdp = MdpView.from_game(game)
    pi = _policy_matrix(mdp, policy)
    defined = ~np.isnan(pi[:, 0])
    pi = np.nan_to_num(pi)
    r_pi = np.sum(pi * mdp.expected_reward, axis=1)
    p_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    v = np.zeros(len(mdp.states))
    for _ in range(mdp.horizon):
        v = np.where(defined, r_pi + gamma * (p_pi @ v), 0.0)
    return float(v[mdp.start])


def uniform_policy(game: GameDefinition) -> dict[str, list[float]]:
    return {
        s: [1.0 / len(n.actions)] * len(n.actions)
        for s, n in game.nodes.items()
        if not n.terminal and n.actions
    }


@dataclass
class BaselineResult:
    mean: float
    std: float
    episodes: int

    @property
    def stderr(self) -> float:
        return self.std / np.sqrt(self.episodes)


def random_baseline(game: GameDefinition, episodes: int = 10000, seed: int = 0) -> BaselineResult:
    """Monte Carlo return of the uniform-random policy under max_steps truncation.

    All episodes advance in lockstep over the game graph, one vectorized step at a time.
    """
    mdp = MdpView.from_game(game)
    rng = np.random.default_rng(seed)
    S, A = mdp.expected_reward.shape
    # per (state, action): flattened outcome tables
    index = {s: i for i, s in enumerate(mdp.states)}
    max_out = max((len(a.outcomes) for n in game.nodes.values() for a in n.actions), default=1)
    cum = np.ones((S, A, max_out))
    target = np.zeros((S, A, max_out), dtype=int)
    reward = np.zeros((S, A, max_out))
    for s, node in game.nodes.items():
        i = index[s]
        for a, edge in enumerate(node.actions):
            c = np.cumsum([o.prob for o in edge.outcomes])
            c[-1] = 1.0
            cum[i, a, : len(c)] = c
            for k, o in enumerate(edge.outcomes):
                target[i, a, k] = index[o.target]
                reward[i, a, k] = o.reward

    cur = np.full(episodes, mdp.start)
    total = np.zeros(episodes)
    done = mdp.terminal[cur] | (mdp.n_actions[cur] == 0)
    for _ in range(mdp.horizon):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        s = cur[active]
        a = (rng.random(active.size) * mdp.n_actions[s]).astype(int)
        k = (rng.random(active.size)[:, None] >= cum[s, a]).sum(axis=1)
        k = np.minimum(k, max_out - 1)
        total[active] += reward[s, a, k]
        cur[active] = target[s, a, k]
        done[active] = mdp.terminal[cur[active]] | (mdp.n_actions[cur[active]] == 0)
    return BaselineResult(float(total.mean()), float(total.std()), episodes)
