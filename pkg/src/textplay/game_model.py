"""Portable game-graph format: data types, JSON parsing/serialization and validation."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Any, Union

DEFAULT_MAX_STEPS = 500
PROB_TOLERANCE = 1e-9


class GameFormatError(ValueError):
    """Base class for problems reading a game document."""


class GameParseError(GameFormatError):
    """The document is not well-formed JSON."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class GameSchemaError(GameFormatError):
    """A required field is missing or has the wrong type."""

    def __init__(self, field_path: str, problem: str = "missing required field"):
        super().__init__(f"{problem}: {field_path!r}")
        self.field = field_path


@dataclass(frozen=True)
class Outcome:
    target: str
    prob: float
    reward: float


@dataclass(frozen=True)
class Description:
    text: str
    prob: float


@dataclass(frozen=True)
class ActionEdge:
    text: str
    outcomes: tuple[Outcome, ...]


@dataclass(frozen=True)
class Node:
    descriptions: tuple[Description, ...]
    terminal: bool
    actions: tuple[ActionEdge, ...] = ()


@dataclass(frozen=True)
class GameDefinition:
    """An immutable game graph. ``nodes`` must not be mutated after construction."""

    name: str
    start_node: str
    nodes: dict[str, Node]
    max_steps: int = DEFAULT_MAX_STEPS

    def node(self, node_id: str) -> Node:
        return self.nodes[node_id]

    def texts(self):
        """Yield every description and action text in document order."""
        for node in self.nodes.values():
            for d in node.descriptions:
                yield d.text
            for a in node.actions:
                yield a.text

    def rewards(self):
        for node in self.nodes.values():
            for a in node.actions:
                for o in a.outcomes:
                    yield o.reward


GameSource = Union[str, bytes, PathLike, Path]


def _require(obj: dict, key: str, path: str, kind: type | tuple[type, ...]) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise GameSchemaError(f"{path}{key}")
    value = obj[key]
    kinds = kind if isinstance(kind, tuple) else (kind,)
    # bool is an int subclass; only accept it where bool is asked for
    if not isinstance(value, kinds) or (isinstance(value, bool) and bool not in kinds):
        expected = "/".join(k.__name__ for k in kinds)
        raise GameSchemaError(f"{path}{key}", f"wrong type for field (expected {expected})")
    return value


def _fill_probs(given: list[float | None]) -> list[float]:
    """Omitted probabilities share the remaining mass equally."""
    missing = [i for i, p in enumerate(given) if p is None]
    if not missing:
        return [float(p) for p in given]
    rest = 1.0 - sum(p for p in given if p is not None)
    share = rest / len(missing)
    return [share if p is None else float(p) for p in given]


def _optional_prob(entry: dict, path: str) -> float | None:
    if "prob" not in entry or entry["prob"] is None:
        return None
    p = entry["prob"]
    if isinstance(p, bool) or not isinstance(p, (int, float)):
        raise GameSchemaError(f"{path}prob", "wrong type for field (expected number)")
    return float(p)


def _load_json(source: GameSource) -> Any:
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        text = source
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameParseError(exc.msg, exc.lineno, exc.colno) from exc


def game_from_dict(doc: Any) -> GameDefinition:
    """Build a GameDefinition from an already-decoded JSON document."""
    if not isinstance(doc, dict):
        raise GameSchemaError("<root>", "document must be a JSON object")
    meta = _require(doc, "meta", "", dict)
    name = _require(meta, "name", "meta.", str)
    max_steps = meta.get("max_steps", DEFAULT_MAX_STEPS)
    if isinstance(max_steps, bool) or not isinstance(max_steps, int):
        raise GameSchemaError("meta.max_steps", "wrong type for field (expected int)")
    start = _require(doc, "start", "", str)
    raw_nodes = _require(doc, "nodes", "", dict)

    nodes: dict[str, Node] = {}
    for node_id, raw in raw_nodes.items():
        path = f"nodes.{node_id}."
        if not isinstance(raw, dict):
            raise GameSchemaError(f"nodes.{node_id}", "node must be an object")
        raw_descs = _require(raw, "descriptions", path, list)
        terminal = _require(raw, "terminal", path, bool)
        texts, probs = [], []
        for i, d in enumerate(raw_descs):
            dpath = f"{path}descriptions[{i}]."
            texts.append(_require(d, "text", dpath, str))
            probs.append(_optional_prob(d, dpath))
        descriptions = tuple(Description(t, p) for t, p in zip(texts, _fill_probs(probs)))

        actions = []
        raw_actions = raw.get("actions", [])
        if not isinstance(raw_actions, list):
            raise GameSchemaError(f"{path}actions", "wrong type for field (expected list)")
        for j, a in enumerate(raw_actions):
            apath = f"{path}actions[{j}]."
            text = _require(a, "text", apath, str)
            raw_outs = _require(a, "outcomes", apath, list)
            targets, oprobs, rewards = [], [], []
            for k, o in enumerate(raw_outs):
                opath = f"{apath}outcomes[{k}]."
                targets.append(_require(o, "target", opath, str))
                oprobs.append(_optional_prob(o, opath))
                rewards.append(float(_require(o, "reward", opath, (int, float))))
            outcomes = tuple(Outcome(t, p, r) for t, p, r in zip(targets, _fill_probs(oprobs), rewards))
            actions.append(ActionEdge(text, outcomes))
        nodes[node_id] = Node(descriptions, terminal, tuple(actions))

    return GameDefinition(name=name, start_node=start, nodes=nodes, max_steps=max_steps)


def parse_game_file(source: GameSource) -> GameDefinition:
    """Parse a game document given as a path, JSON text, or raw bytes.

    Only structural checks happen here; see :func:`validate_game` for semantics.
    """
    return game_from_dict(_load_json(source))


def game_to_dict(game: GameDefinition) -> dict:
    return {
        "meta": {"name": game.name, "max_steps": game.max_steps},
        "start": game.start_node,
        "nodes": {
            node_id: {
                "descriptions": [{"text": d.text, "prob": d.prob} for d in node.descriptions],
                "terminal": node.terminal,
                "actions": [
                    {
                        "text": a.text,
                        "outcomes": [
                            {"target": o.target, "prob": o.prob, "reward": o.reward} for o in a.outcomes
                        ],
                    }
                    for a in node.actions
                ],
            }
            for node_id, node in game.nodes.items()
        },
    }


def dump_game(game: GameDefinition, indent: int | None = 2) -> str:
    return json.dumps(game_to_dict(game), indent=indent)


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    kind: str
    message: str
    severity: str = "error"
    node: str | None = None
    detail: str | None = None


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "warning"]

    @property
    def ok(self) -> bool:
        """True when the game is playable (warnings allowed)."""
        return not self.errors

    def kinds(self) -> set[str]:
        return {f.kind for f in self.findings}

    def __len__(self) -> int:
        return len(self.findings)

    def __iter__(self):
        return iter(self.findings)

    def format(self) -> str:
        if not self.findings:
            return "ok"
        return "\n".join(f"{f.severity}: [{f.kind}] {f.message}" for f in self.findings)


def _check_distribution(report: ValidationReport, probs, node_id: str, what: str) -> None:
    for p in probs:
        if not (math.isfinite(p) and 0.0 < p <= 1.0):
            report.findings.append(
                Finding("probability-range", f"{what} in node {node_id!r} has probability {p!r} outside (0, 1]",
                        node=node_id, detail=what)
            )
    total = math.fsum(probs)
    if abs(total - 1.0) > PROB_TOLERANCE:
        report.findings.append(
            Finding("probability-sum", f"{what} in node {node_id!r} sums to {total!r}, not 1",
                    node=node_id, detail=what)
        )


def reachable_nodes(game: GameDefinition) -> set[str]:
    seen = {game.start_node}
    queue = deque([game.start_node])
    while queue:
        node = game.nodes.get(queue.popleft())
        if node is None:
            continue
        for a in node.actions:
            for o in a.outcomes:
                if o.target not in seen and o.target in game.nodes:
                    seen.add(o.target)
                    queue.append(o.target)
    return seen


def validate_game(game: GameDefinition) -> ValidationReport:
    """Check every playability invariant; never raises."""
    report = ValidationReport()
    add = report.findings.append

    if game.max_steps < 1:
        add(Finding("bad-max-steps", f"max_steps must be positive, got {game.max_steps}"))
    if game.start_node not in game.nodes:
        add(Finding("missing-start", f"start node {game.start_node!r} does not exist", detail=game.start_node))

    for node_id, node in game.nodes.items():
        if not node.descriptions:
            add(Finding("no-descriptions", f"node {node_id!r} has no descriptions", node=node_id))
        else:
            for d in node.descriptions:
                if not d.text.strip():
                    add(Finding("empty-text", f"node {node_id!r} has an empty description", node=node_id))
            _check_distribution(report, [d.prob for d in node.descriptions], node_id, "descriptions")

        if node.terminal and node.actions:
            add(Finding("terminal-with-actions", f"terminal node {node_id!r} has actions", node=node_id))
        if not node.terminal and not node.actions:
            add(Finding("dead-end", f"non-terminal node {node_id!r} has no actions", node=node_id))

        for j, a in enumerate(node.actions):
            label = f"action {j} ({a.text!r})"
            if not a.text.strip():
                add(Finding("empty-text", f"node {node_id!r} has an empty action text", node=node_id))
            if not a.outcomes:
                add(Finding("no-outcomes", f"{label} in node {node_id!r} has no outcomes", node=node_id))
                continue
            _check_distribution(report, [o.prob for o in a.outcomes], node_id, label)
            for o in a.outcomes:
                if o.target not in game.nodes:
                    add(Finding("dangling-target", f"{label} in node {node_id!r} targets unknown node {o.target!r}",
                                node=node_id, detail=o.target))
                if not math.isfinite(o.reward):
                    add(Finding("non-finite-reward", f"{label} in node {node_id!r} has reward {o.reward!r}",
                                node=node_id))

    if game.start_node in game.nodes:
        reached = reachable_nodes(game)
        for node_id in game.nodes:
            if node_id not in reached:
                add(Finding("unreachable", f"node {node_id!r} is unreachable from the start",
                            severity="warning", node=node_id))
    return report


def classify_game(game: GameDefinition) -> tuple[bool, bool]:
    """Return ``(deterministic_transitions, deterministic_descriptions)``."""
    transitions = all(len(a.outcomes) == 1 for n in game.nodes.values() for a in n.actions)
    descriptions = all(len(n.descriptions) == 1 for n in game.nodes.values())
    return transitions, descriptions


def is_deterministic(game: GameDefinition) -> bool:
    return all(classify_game(game))


def load_games(paths) -> list[GameDefinition]:
    return [parse_game_file(p) for p in paths]
