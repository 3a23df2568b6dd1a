import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chain_doc, loop_doc
from textplay.game_model import classify_game, game_from_dict
from textplay.harness import load_game
from textplay.oracle import policy_value, uniform_policy
from textplay.simulator import EpisodeTrace, SessionFinishedError, SimSession, play_episode, reset, step


def test_reset_chain(chain):
    obs = reset(SimSession.seeded(chain))
    assert obs.state_text == "You are in room 0 of a long corridor."
    assert len(obs.action_texts) == 1
    assert obs.reward == 0 and not obs.terminal


def test_reset_terminal_game():
    doc = {"meta": {"name": "t"}, "start": "x",
           "nodes": {"x": {"descriptions": [{"text": "Over."}], "terminal": True, "actions": []}}}
    s = SimSession.seeded(game_from_dict(doc))
    obs = reset(s)
    assert obs.terminal and obs.action_texts == ()
    with pytest.raises(SessionFinishedError):
        step(s, 0)


def test_degenerate_description_distribution():
    doc = chain_doc()
    doc["nodes"]["n0"]["descriptions"] = [{"text": "X", "prob": 1.0}]
    s = SimSession.seeded(game_from_dict(doc), seed=3)
    assert all(s.reset().state_text == "X" for _ in range(20))


def test_step_reward_to_terminal():
    s = SimSession.seeded(game_from_dict(chain_doc(steps=1, reward=10)))
    s.reset()
    obs = step(s, 0)
    assert obs.reward == 10 and obs.terminal
    assert s.finished and s.total_reward == 10


def test_step_out_of_range(loop):
    s = SimSession.seeded(loop)
    s.reset()
    step(s, 0)
    with pytest.raises(IndexError):
        step(s, 5)


def test_step_after_finish(chain):
    s = SimSession.seeded(chain)
    s.reset()
    for _ in range(3):
        step(s, 0)
    with pytest.raises(SessionFinishedError):
        step(s, 0)


def test_coin_mean_reward(coin):
    s = SimSession.seeded(coin, seed=11)
    total = 0.0
    for _ in range(10000):
        s.reset()
        total += step(s, 0).reward
    assert abs(total / 10000 - 5.0) <= 0.3


def test_always_zero_on_chain(chain):
    trace = play_episode(SimSession.seeded(chain), lambda obs: 0)
    assert trace.total_reward == pytest.approx(19.4)
    assert trace.length == 3 and trace.finished


def test_loop_forever_truncates(loop):
    trace = play_episode(SimSession.seeded(loop), lambda obs: 0)
    assert trace.length == 500
    assert trace.finished
    assert trace.total_reward == 0


def test_truncation_invariant():
    s = SimSession.seeded(game_from_dict(loop_doc(max_steps=7)))
    obs = s.reset()
    while not obs.terminal:
        obs = s.step(0)
    assert s.steps_taken == 7 and s.finished and obs.action_texts == ()


def test_invalid_policy_index_propagates(chain):
    with pytest.raises(IndexError):
        play_episode(SimSession.seeded(chain), lambda obs: 3)


def test_uniform_policy_on_fork_matches_exact_value():
    fork = load_game("fork")
    exact = policy_value(fork, uniform_policy(fork))
    rng = np.random.default_rng(5)
    s = SimSession(fork, np.random.default_rng(6))
    returns = [play_episode(s, lambda obs: int(rng.integers(len(obs.action_texts)))).total_reward
               for _ in range(10000)]
    se = np.std(returns) / np.sqrt(len(returns))
    assert abs(np.mean(returns) - exact) < 4 * se


def test_seeded_sessions_reproduce():
    marsh = load_game("marsh")
    a = play_episode(SimSession.seeded(marsh, 4, 2), lambda obs: 0)
    b = play_episode(SimSession.seeded(marsh, 4, 2), lambda obs: 0)
    assert a.to_log() == b.to_log()


def test_trace_log_format():
    trace = EpisodeTrace([("room", "go", 1.5)], 1.5)
    lines = trace.to_log().splitlines()
    fields = lines[0].split("\t")
    assert fields[0] == "0" and len(fields[1]) == 12 and fields[2:] == ["go", "1.5"]
    assert lines[-1] == "total\t1.5"


@given(st.sampled_from(["lighthouse", "expedition", "station"]), st.integers(0, 2**32 - 1), st.integers(0, 20))
@settings(max_examples=40, deadline=None)
def test_deterministic_transitions_ignore_seed(name, seed, choice):
    g = load_game(name)
    assert classify_game(g)[0]
    for node_id, node in g.nodes.items():
        if node.terminal:
            continue
        a = choice % len(node.actions)
        s = SimSession.seeded(g, seed)
        s.reset()
        s.current = node_id
        s.step(a)
        assert s.current == node.actions[a].outcomes[0].target
