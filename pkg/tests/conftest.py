"""Small hand-authored game documents shared across the test modules."""

import pytest

from textplay.game_model import game_from_dict


def chain_doc(steps=3, reward=19.4, name="chain"):
    nodes = {}
    for i in range(steps):
        nodes[f"n{i}"] = {
            "descriptions": [{"text": f"You are in room {i} of a long corridor."}],
            "terminal": False,
            "actions": [{"text": f"walk on from room {i}",
                         "outcomes": [{"target": f"n{i + 1}", "reward": reward if i == steps - 1 else 0}]}],
        }
    nodes[f"n{steps}"] = {"descriptions": [{"text": "The corridor ends in daylight."}], "terminal": True, "actions": []}
    return {"meta": {"name": name}, "start": "n0", "nodes": nodes}


def coin_doc(name="coin"):
    """One decision: a fair coin paying 10 or 0, or a sure 4."""
    return {
        "meta": {"name": name},
        "start": "table",
        "nodes": {
            "table": {
                "descriptions": [{"text": "A coin and an envelope lie on the table."}],
                "terminal": False,
                "actions": [
                    {"text": "flip the coin", "outcomes": [
                        {"target": "heads", "prob": 0.5, "reward": 10},
                        {"target": "tails", "prob": 0.5, "reward": 0}]},
                    {"text": "take the envelope", "outcomes": [{"target": "envelope", "reward": 4}]},
                ],
            },
            "heads": {"descriptions": [{"text": "Heads."}], "terminal": True, "actions": []},
            "tails": {"descriptions": [{"text": "Tails."}], "terminal": True, "actions": []},
            "envelope": {"descriptions": [{"text": "Four coins."}], "terminal": True, "actions": []},
        },
    }


def loop_doc(max_steps=500, name="loop"):
    """Two rooms linked both ways; only room b has an exit."""
    return {
        "meta": {"name": name, "max_steps": max_steps},
        "start": "a",
        "nodes": {
            "a": {"descriptions": [{"text": "Room a."}], "terminal": False,
                  "actions": [{"text": "go to b", "outcomes": [{"target": "b", "reward": 0}]}]},
            "b": {"descriptions": [{"text": "Room b."}], "terminal": False,
                  "actions": [{"text": "go to a", "outcomes": [{"target": "a", "reward": 0}]},
                              {"text": "leave", "outcomes": [{"target": "out", "reward": 1}]}]},
            "out": {"descriptions": [{"text": "Outside."}], "terminal": True, "actions": []},
        },
    }


def bandit_doc(name="bandit"):
    """One state, two actions rewarding +1 and -1."""
    return {
        "meta": {"name": name},
        "start": "s",
        "nodes": {
            "s": {"descriptions": [{"text": "Two levers stand before you."}], "terminal": False,
                  "actions": [{"text": "pull the red lever", "outcomes": [{"target": "end", "reward": -1}]},
                              {"text": "pull the green lever", "outcomes": [{"target": "end", "reward": 1}]}]},
            "end": {"descriptions": [{"text": "The machine goes quiet."}], "terminal": True, "actions": []},
        },
    }


@pytest.fixture
def chain():
    return game_from_dict(chain_doc())


@pytest.fixture
def coin():
    return game_from_dict(coin_doc())


@pytest.fixture
def loop():
    return game_from_dict(loop_doc())


@pytest.fixture
def bandit():
    return game_from_dict(bandit_doc())


# -- acceptance reporting ---------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
