"""Experiment orchestration: scenario configs, the four training scenarios, metrics and the bundled corpus."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import TrainConfig, TrainResult, evaluate_greedy, reward_scale_for, train
from .game_model import GameDefinition, is_deterministic, parse_game_file, validate_game
from .network import NetConfig, save_params
from .oracle import optimal_value, random_baseline
from .text import Vocabulary, build_vocabulary, preprocess_text

log = logging.getLogger(__name__)

SCENARIOS = ("single", "transfer", "generalisation", "multi")
SCENARIO_LABELS = {
    "single": "Individual game",
    "transfer": "Transfer learning",
    "generalisation": "Generalisation",
    "multi": "Multiple games",
}
RANDOM_LABEL = "Random agent (average)"
OPTIMAL_LABEL = "Optimal"

CURVE_COLUMNS = ["episode", "game", "scenario", "seed", "epsilon", "eval_reward", "eval_steps", "loss"]
METRICS_COLUMNS = ["scenario", "game", "seed", "episode", "epsilon", "eval_reward", "oracle_reward", "random_reward"]

_HYPER_KEYS = {"gamma", "epsilon", "epsilon_decay", "batch_size", "prioritized_fraction", "learning_rate",
               "episodes", "replay_capacity", "eval_every", "eval_episodes"}
_NET_KEYS = {f.name for f in fields(NetConfig)}


class ConfigError(ValueError):
    """A scenario config that is malformed or breaks a scenario invariant."""


# -- bundled corpus --------------------------------------------------------------


def bundled_games() -> list[str]:
    """Names of the games shipped with the package."""
    root = resources.files("textplay") / "games"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_game(ref: str, base_dir: str | Path | None = None) -> Path:
    """A game reference is a file path (relative to ``base_dir`` if given) or a bundled game name."""
    candidates = [Path(ref)]
    if base_dir is not None and not Path(ref).is_absolute():
        candidates.insert(0, Path(base_dir) / ref)
    for c in candidates:
        if c.is_file():
            return c
    bundled = resources.files("textplay") / "games" / f"{ref}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no game file or bundled game named {ref!r}")


def load_game(ref: str, base_dir: str | Path | None = None) -> GameDefinition:
    """Parse and validate a game; validation errors raise :class:`ConfigError`."""
    game = parse_game_file(resolve_game(ref, base_dir))
    report = validate_game(game)
    if not report.ok:
        raise ConfigError(f"game {ref!r} is invalid:\n{report.format()}")
    return game


def token_overlap(games: Sequence[GameDefinition]) -> dict[str, float]:
    """Per game: percentage of its distinct tokens that occur in at least one other game."""
    if len(games) < 2:
        raise ValueError("token overlap needs at least two games")
    tokens = [{t for text in g.texts() for t in preprocess_text(text)} for g in games]
    out = {}
    for i, g in enumerate(games):
        others = set().union(*(t for j, t in enumerate(tokens) if j != i))
        own = tokens[i]
        out[g.name] = 100.0 * len(own & others) / len(own) if own else 0.0
    return out


# -- config ----------------------------------------------------------------------


@dataclass
class ScenarioConfig:
    scenario: str
    train_games: list[str] = field(default_factory=list)
    pretrain_games: list[str] = field(default_factory=list)
    eval_games: list[str] = field(default_factory=list)
    train: TrainConfig = field(default_factory=TrainConfig)
    repetitions: int = 5
    seed: int = 0
    output_dir: str = "runs"
    pretrain_episodes: int | None = None  # transfer only; defaults to train.episodes
    random_episodes: int = 10_000
    base_dir: str | None = None  # where relative game paths are resolved

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path | None = None) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario config must be a JSON object")
        unknown = set(data) - {"scenario", "games", "hyperparameters", "network", "repetitions", "seed",
                               "output_dir", "random_episodes"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        games = data.get("games", {})
        if not isinstance(games, dict) or set(games) - {"train", "pretrain", "eval"}:
            raise ConfigError("games must map train/pretrain/eval to lists of game references")
        hyper = dict(data.get("hyperparameters", {}))
        pretrain_episodes = hyper.pop("pretrain_episodes", None)
        bad = set(hyper) - _HYPER_KEYS
        if bad:
            raise ConfigError(f"unknown hyperparameters: {sorted(bad)}")
        net = data.get("network", {})
        if set(net) - _NET_KEYS:
            raise ConfigError(f"unknown network fields: {sorted(set(net) - _NET_KEYS)}")
        try:
            tcfg = TrainConfig(**hyper, seed=int(data.get("seed", 0)), net=NetConfig(**net))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        cfg = cls(
            scenario=data.get("scenario", ""),
            train_games=list(games.get("train", [])),
            pretrain_games=list(games.get("pretrain", [])),
            eval_games=list(games.get("eval", [])),
            train=tcfg,
            repetitions=int(data.get("repetitions", 5)),
            seed=int(data.get("seed", 0)),
            output_dir=str(data.get("output_dir", "runs")),
            pretrain_episodes=pretrain_episodes,
            random_episodes=int(data.get("random_episodes", 10_000)),
            base_dir=None if base_dir is None else str(base_dir),
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(data, base_dir=path.parent)

    def validate(self) -> None:
        """Check scenario invariants; defaults eval games where the scenario implies them."""
        s = self.scenario
        if s not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {s!r}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.train.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if s in ("single", "multi"):
            if self.pretrain_games:
                raise ConfigError(f"{s} scenario takes no pretrain games")
            if not self.eval_games:
                self.eval_games = list(self.train_games)
            if self.eval_games != self.train_games:
                raise ConfigError(f"{s} scenario must evaluate on exactly its training games")
            if s == "single" and len(self.train_games) != 1:
                raise ConfigError("single scenario needs exactly one game")
            if s == "multi" and len(self.train_games) < 2:
                raise ConfigError("multi scenario needs at least two games")
        elif s == "transfer":
            if len(self.train_games) != 1 or not self.pretrain_games:
                raise ConfigError("transfer scenario needs pretrain games and exactly one final training game")
            if not self.eval_games:
                self.eval_games = list(self.train_games)
            if self.eval_games != self.train_games:
                raise ConfigError("transfer scenario evaluates on its final game")
        else:  # generalisation
            if self.train_games:
                raise ConfigError("generalisation scenario never trains on the held-out game; use pretrain")
            if not self.pretrain_games or len(self.eval_games) != 1:
                raise ConfigError("generalisation scenario needs pretrain games and exactly one held-out game")
        held_out = set(self.train_games if s == "transfer" else self.eval_games)
        if s in ("transfer", "generalisation") and held_out & set(self.pretrain_games):
            raise ConfigError("pretrain games must not include the held-out game")
        if len(set(self.pretrain_games)) != len(self.pretrain_games) or len(set(self.train_games)) != len(self.train_games):
            raise ConfigError("duplicate game references")


# -- running ---------------------------------------------------------------------


@dataclass
class RepetitionResult:
    seed: int
    final_rewards: dict[str, float]
    updates_per_game: dict[str, int]
    results: list[TrainResult]
    vocab: Vocabulary


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    repetitions: list[RepetitionResult]
    summary: dict[str, dict[str, float]]  # row label -> game -> value
    oracle: dict[str, float]
    random: dict[str, float]
    files: dict[str, Path]


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _load_all(cfg: ScenarioConfig) -> dict[str, GameDefinition]:
    games: dict[str, GameDefinition] = {}
    for ref in dict.fromkeys(cfg.pretrain_games + cfg.train_games + cfg.eval_games):
        games[ref] = load_game(ref, cfg.base_dir)
    names = [g.name for g in games.values()]
    if len(set(names)) != len(names):
        raise ConfigError("two referenced games share a name")
    return games


def _run_repetition(cfg: ScenarioConfig, games: dict[str, GameDefinition], seed: int) -> RepetitionResult:
    tcfg = TrainConfig(**{f.name: getattr(cfg.train, f.name) for f in fields(TrainConfig)})
    tcfg.seed = seed
    pretrain = [games[r] for r in cfg.pretrain_games]
    final = [games[r] for r in cfg.train_games]
    evals = [games[r] for r in cfg.eval_games]
    s = cfg.scenario

    if s == "generalisation":
        vocab_games = pretrain
    else:
        vocab_games = pretrain + final
    vocab = build_vocabulary(vocab_games)
    scale = reward_scale_for(vocab_games)

    results = []
    if s in ("single", "multi"):
        results.append(train(final, tcfg, vocab, eval_games=evals, reward_scale=scale))
    elif s == "generalisation":
        results.append(train(pretrain, tcfg, vocab, eval_games=evals, reward_scale=scale))
    else:  # transfer: pretrain, then a fresh run (new memory, epsilon reset) on the final game
        pcfg = TrainConfig(**{f.name: getattr(tcfg, f.name) for f in fields(TrainConfig)})
        pcfg.episodes = cfg.pretrain_episodes or tcfg.episodes
        pre = train(pretrain, pcfg, vocab, eval_games=evals, reward_scale=scale)
        results.append(pre)
        results.append(train(final, tcfg, vocab, params=pre.params, eval_games=evals, episode_offset=pcfg.episodes))

    params = results[-1].params
    final_eval = evaluate_greedy(params, vocab, evals, tcfg.eval_episodes, seed=seed + 104729)
    updates: dict[str, int] = {}
    for r in results:
        for k, v in r.updates_per_game.items():
            updates[k] = updates.get(k, 0) + v
    for g in games.values():
        updates.setdefault(g.name, 0)
    return RepetitionResult(seed, {k: v.mean_reward for k, v in final_eval.items()}, updates, results, vocab)


def run_scenario(cfg: ScenarioConfig, output_dir: str | Path | None = None) -> ScenarioResult:
    """Run every repetition of a scenario and write its CSVs, checkpoints and vocabularies.

    Files: ``curve.csv`` (learning curves), ``metrics.csv`` (curve rows with the
    oracle and random reference values), ``summary.csv`` (random / trained /
    optimal rows per evaluated game), ``updates.csv`` (gradient updates per game)
    and ``seed<k>.ckpt`` plus ``seed<k>.vocab`` per repetition.
    """
    cfg.validate()
    games = _load_all(cfg)
    by_name = {g.name: g for g in games.values()}
    oracle = {g.name: optimal_value(g, 1.0).value for g in games.values()}
    random = {g.name: random_baseline(g, cfg.random_episodes, seed=cfg.seed).mean for g in games.values()}

    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    curve_rows, metric_rows, update_rows = [], [], []
    reps = []
    for r in range(cfg.repetitions):
        seed = cfg.seed + r
        log.info("%s scenario, repetition %d (seed %d)", cfg.scenario, r + 1, seed)
        rep = _run_repetition(cfg, games, seed)
        reps.append(rep)
        for res in rep.results:
            for row in res.curve:
                curve_rows.append([row.episode, row.game, cfg.scenario, seed, row.epsilon, row.eval_reward,
                                   row.eval_steps, row.loss])
                metric_rows.append([cfg.scenario, row.game, seed, row.episode, row.epsilon, row.eval_reward,
                                    oracle[row.game], random[row.game]])
        for name in sorted(rep.updates_per_game):
            update_rows.append([seed, name, rep.updates_per_game[name]])
        save_params(rep.results[-1].params, out / f"seed{seed}.ckpt")
        rep.vocab.save(out / f"seed{seed}.vocab")

    eval_names = [games[r].name for r in cfg.eval_games]
    trained = {n: float(np.mean([rep.final_rewards[n] for rep in reps])) for n in eval_names}
    summary = {
        RANDOM_LABEL: {n: random[n] for n in eval_names},
        SCENARIO_LABELS[cfg.scenario]: trained,
        OPTIMAL_LABEL: {n: oracle[n] for n in eval_names},
    }
    for n in eval_names:
        if is_deterministic(by_name[n]) and trained[n] > oracle[n] + 1e-6:
            raise AssertionError(f"trained reward on {n} exceeds the oracle optimum")

    files = {
        "curve": out / "curve.csv",
        "metrics": out / "metrics.csv",
        "summary": out / "summary.csv",
        "updates": out / "updates.csv",
    }
    _write_csv(files["curve"], CURVE_COLUMNS, curve_rows)
    _write_csv(files["metrics"], METRICS_COLUMNS, metric_rows)
    _write_csv(files["summary"], ["row", *eval_names], [[label, *(vals[n] for n in eval_names)]
                                                        for label, vals in summary.items()])
    _write_csv(files["updates"], ["seed", "game", "updates"], update_rows)
    return ScenarioResult(cfg, reps, summary, oracle, random, files)


def format_summary(result: ScenarioResult) -> str:
    names = list(next(iter(result.summary.values())))
    width = max(len(k) for k in result.summary) + 2
    lines = [" " * width + "".join(f"{n:>18}" for n in names)]
    for label, vals in result.summary.items():
        lines.append(f"{label:<{width}}" + "".join(f"{vals[n]:>18.3f}" for n in names))
    return "\n".join(lines)
