"""Command-line interface: validate, play, oracle, train, eval and baseline subcommands."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .agent import Scorer, greedy_episode
from .game_model import GameFormatError, parse_game_file, validate_game
from .harness import ConfigError, ScenarioConfig, bundled_games, format_summary, load_game, resolve_game, run_scenario
from .network import load_params
from .oracle import optimal_value, random_baseline
from .simulator import SimSession
from .text import Vocabulary


class CliError(Exception):
    pass


def _cmd_validate(args, out: TextIO, err: TextIO) -> int:
    game = parse_game_file(resolve_game(args.game))
    report = validate_game(game)
    if not report.ok:
        print(report.format(), file=err)
        return 1
    print(report.format() if len(report) else f"{game.name}: ok", file=out)
    return 0


def _cmd_play(args, out: TextIO, err: TextIO, inp: TextIO) -> int:
    game = load_game(args.game)
    session = SimSession.seeded(game, args.seed, 0)
    obs = session.reset()
    while not obs.terminal:
        print(obs.state_text, file=out)
        for i, a in enumerate(obs.action_texts):
            print(f"  [{i}] {a}", file=out)
        while True:
            print("> ", end="", file=out, flush=True)
            line = inp.readline()
            if not line:
                print("\ninput ended before the game finished", file=err)
                return 1
            try:
                index = int(line.strip())
            except ValueError:
                print(f"enter a number between 0 and {len(obs.action_texts) - 1}", file=out)
                continue
            if 0 <= index < len(obs.action_texts):
                break
            print(f"enter a number between 0 and {len(obs.action_texts) - 1}", file=out)
        obs = session.step(index)
        if obs.reward:
            print(f"(reward {obs.reward:g})", file=out)
    print(obs.state_text, file=out)
    if not session.node.terminal:
        print(f"step limit of {game.max_steps} reached", file=out)
    print(f"Final reward: {session.total_reward:g}", file=out)
    return 0


def _cmd_oracle(args, out: TextIO, err: TextIO) -> int:
    rows = []
    for ref in args.games:
        game = load_game(ref)
        sol = optimal_value(game, args.gamma)
        base = random_baseline(game, args.episodes, seed=args.seed)
        policy = " ".join(f"{s}:{a}" for s, a in sol.policy.items())
        rows.append([game.name, sol.value, base.mean, base.std, policy])
    print(f"{'game':<18}{'optimal':>10}{'random':>10}{'std':>10}  policy", file=out)
    for name, value, mean, std, policy in rows:
        print(f"{name:<18}{value:>10.4f}{mean:>10.4f}{std:>10.4f}  {policy}", file=out)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["game", "optimal", "random_mean", "random_std", "policy"])
            for name, value, mean, std, policy in rows:
                w.writerow([name, repr(value), repr(mean), repr(std), policy])
    return 0


def _cmd_baseline(args, out: TextIO, err: TextIO) -> int:
    print(f"{'game':<18}{'mean':>10}{'std':>10}{'stderr':>10}", file=out)
    for ref in args.games:
        game = load_game(ref)
        b = random_baseline(game, args.episodes, seed=args.seed)
        print(f"{game.name:<18}{b.mean:>10.4f}{b.std:>10.4f}{b.stderr:>10.4f}", file=out)
    return 0


def _cmd_train(args, out: TextIO, err: TextIO) -> int:
    cfg = ScenarioConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
    if args.repetitions is not None:
        cfg.repetitions = args.repetitions
    if args.episodes is not None:
        cfg.train.episodes = args.episodes
    cfg.validate()
    result = run_scenario(cfg, args.output_dir)
    print(format_summary(result), file=out)
    for kind, path in result.files.items():
        print(f"{kind}: {path}", file=out)
    return 0


def _cmd_eval(args, out: TextIO, err: TextIO) -> int:
    ckpt = Path(args.checkpoint)
    params = load_params(ckpt)
    vocab_path = Path(args.vocab) if args.vocab else ckpt.with_suffix(".vocab")
    if not vocab_path.is_file():
        raise CliError(f"vocabulary file {vocab_path} not found (pass --vocab)")
    vocab = Vocabulary.load(vocab_path)
    if len(vocab) != params.vocab_size:
        raise CliError(f"vocabulary has {len(vocab)} tokens but the checkpoint expects {params.vocab_size}")
    scorer = Scorer(params, vocab)
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        print(f"{'game':<18}{'mean':>10}{'steps':>10}", file=out)
        for ref in args.games:
            game = load_game(ref)
            rewards, steps = [], []
            for ep in range(args.episodes):
                trace = greedy_episode(scorer, SimSession.seeded(game, args.seed, ep), not args.no_history)
                rewards.append(trace.total_reward)
                steps.append(trace.length)
                if log_fh:
                    log_fh.write(f"# {game.name} episode {ep}\n{trace.to_log()}")
            print(f"{game.name:<18}{np.mean(rewards):>10.4f}{np.mean(steps):>10.1f}", file=out)
    finally:
        if log_fh:
            log_fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textplay", description="Choice-based text games and a siamese Q-learning agent.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def game_help() -> str:
        return f"game file or bundled name ({', '.join(bundled_games())})"

    p = sub.add_parser("validate", help="check a game file")
    p.add_argument("game", help=game_help())
    p.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")

    p = sub.add_parser("play", help="play a game in the terminal")
    p.add_argument("game", help=game_help())
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("oracle", help="optimal value, policy and random baseline")
    p.add_argument("games", nargs="+", help=game_help())
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--episodes", type=int, default=10_000, help="random-baseline episodes")
    p.add_argument("--csv", help="also write the table to this CSV file")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("baseline", help="Monte Carlo return of the uniform-random policy")
    p.add_argument("games", nargs="+", help=game_help())
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="run a scenario config")
    p.add_argument("config", help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--output-dir", default=None, help="override the config output_dir")
    p.add_argument("--repetitions", type=int, default=None)
    p.add_argument("--episodes", type=int, default=None)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("games", nargs="+", help=game_help())
    p.add_argument("--vocab", help="vocabulary file (default: checkpoint path with .vocab suffix)")
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--no-history", action="store_true", help="disable the history penalty")
    p.add_argument("--log", help="write episode traces to this file")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Sequence[str] | None = None, stdin: TextIO | None = None, stdout: TextIO | None = None,
         stderr: TextIO | None = None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=err,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            return _cmd_validate(args, out, err)
        if args.command == "play":
            return _cmd_play(args, out, err, stdin or sys.stdin)
        if args.command == "oracle":
            return _cmd_oracle(args, out, err)
        if args.command == "baseline":
            return _cmd_baseline(args, out, err)
        if args.command == "train":
            return _cmd_train(args, out, err)
        return _cmd_eval(args, out, err)
    except (FileNotFoundError, GameFormatError, ConfigError, CliError, ValueError) as exc:
        print(f"textplay {args.command}: {exc}", file=err)
        return 2


if __name__ == "__main__":
    sys.exit(main())
