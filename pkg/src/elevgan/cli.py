"""Command-line entry point: ``elevgan <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
import time
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from . import logcodec, sim
from .config import ConfigError
from .logcodec import RealismReport, VocabError
from .models import (
    DEFAULT_SEED_TEXT,
    CheckpointMismatch,
    GeneratorParams,
    generate_sequence,
    load_checkpoint,
    save_checkpoint,
)
from .nn import ShapeError
from .trainer import (
    evaluate_generator,
    load_corpus,
    load_train_config,
    new_gan_state,
    pretrain_discriminator,
    pretrain_generator,
    train,
)

BATCH_T_MAX = 10_000
CONFIG_SUFFIXES = (".cfg", ".conf", ".ini", ".txt")
USER_ERRORS = (OSError, ValueError, ConfigError, CheckpointMismatch, VocabError, ShapeError, KeyError)


class CommandError(Exception):
    pass


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


@contextlib.contextmanager
def _outputs() -> Iterator[list[Path]]:
    """Collects paths written by a command and deletes them if it fails."""
    written: list[Path] = []
    try:
        yield written
    except BaseException:
        for path in written:
            with contextlib.suppress(OSError):
                path.unlink()
        raise


def _write_text(path: Path, text: str, written: list[Path]) -> None:
    written.append(path)
    path.write_text(text, encoding="utf-8", newline="\n")


def _new_files(directory: Path, before: set[Path]) -> list[Path]:
    if not directory.is_dir():
        return []
    return [p for p in directory.iterdir() if p.is_file() and p not in before]


def _snapshot(directory: Path) -> set[Path]:
    return set(directory.iterdir()) if directory.is_dir() else set()


# -- simulate ---------------------------------------------------------------------------


def _simulate_one(cfg_path: Optional[Path], t_max: Optional[int], out: Path, written: list[Path], default_t: int) -> None:
    if cfg_path is None:
        config, file_t = sim.BuildingConfig(), default_t
    else:
        config, file_t = sim.load_sim_config(cfg_path)
    horizon = file_t if t_max is None else t_max
    start = time.perf_counter()
    events = sim.run(config, horizon)
    _write_text(out, logcodec.format_log(events), written)
    elapsed = time.perf_counter() - start
    _err(f"{out}: {len(events)} lines, t_max {horizon}, {elapsed:.2f} s")


def cmd_simulate(args: argparse.Namespace) -> None:
    out = Path(args.out)
    with _outputs() as written:
        if args.config is not None and Path(args.config).is_dir():
            configs = sorted(p for p in Path(args.config).iterdir() if p.suffix in CONFIG_SUFFIXES)
            if not configs:
                raise CommandError(f"no config files ({', '.join(CONFIG_SUFFIXES)}) in {args.config}")
            out.mkdir(parents=True, exist_ok=True)
            t_max = BATCH_T_MAX if args.t_max is None else args.t_max
            for cfg_path in configs:
                _simulate_one(cfg_path, t_max, out / f"{cfg_path.stem}.log", written, BATCH_T_MAX)
        else:
            cfg_path = Path(args.config) if args.config else None
            _simulate_one(cfg_path, args.t_max, out, written, 1_000_000)


# -- training ----------------------------------------------------------------------------


def _train_setup(args: argparse.Namespace):
    cfg = load_train_config(args.config)
    corpus = load_corpus(cfg)
    out = Path(cfg.out_dir)
    return cfg, corpus, out


@contextlib.contextmanager
def _out_dir_guard(out: Path) -> Iterator[None]:
    before = _snapshot(out)
    created = not out.exists()
    try:
        yield
    except BaseException:
        for path in _new_files(out, before):
            with contextlib.suppress(OSError):
                path.unlink()
        if created:
            with contextlib.suppress(OSError):
                out.rmdir()
        raise


def cmd_pretrain_gen(args: argparse.Namespace) -> None:
    cfg, corpus, out = _train_setup(args)
    with _out_dir_guard(out):
        out.mkdir(parents=True, exist_ok=True)
        state = new_gan_state(corpus, cfg)
        history = pretrain_generator(state.gen, corpus, cfg, state.streams, log=_err)
        save_checkpoint(state.gen, corpus.vocab, out / "generator")
        history.write_csv(out / "history_pretrain_gen.csv")


def cmd_pretrain_disc(args: argparse.Namespace) -> None:
    cfg, corpus, out = _train_setup(args)
    with _out_dir_guard(out):
        out.mkdir(parents=True, exist_ok=True)
        state = new_gan_state(corpus, cfg)
        gen_path = out / "generator.npz"
        if gen_path.exists():
            gen, _ = load_checkpoint(gen_path, expect_vocab=corpus.vocab)
            if not isinstance(gen, GeneratorParams):
                raise CheckpointMismatch(f"{gen_path} is not a generator checkpoint")
            state.gen = gen
            _err(f"using generator checkpoint {gen_path}")
        else:
            _err("no generator checkpoint, pretraining against an untrained generator")
        history = pretrain_discriminator(state.gen, state.disc, corpus, cfg, state.streams, log=_err)
        save_checkpoint(state.disc, corpus.vocab, out / "discriminator")
        history.write_csv(out / "history_pretrain_disc.csv")


def cmd_train(args: argparse.Namespace) -> None:
    cfg, corpus, out = _train_setup(args)
    with _out_dir_guard(out):
        train(cfg, corpus, log=_err)


# -- generation and evaluation --------------------------------------------------------------


def _load_generator(path: str) -> tuple[GeneratorParams, logcodec.Vocabulary]:
    model, vocab = load_checkpoint(path)
    if not isinstance(model, GeneratorParams):
        raise CheckpointMismatch(f"{path} is not a generator checkpoint")
    return model, vocab


def _checkpoint_arg(args: argparse.Namespace) -> str:
    if args.checkpoint:
        return args.checkpoint
    if args.config:
        return str(Path(load_train_config(args.config).out_dir) / "generator.npz")
    raise CommandError("a generator checkpoint is required (--checkpoint or -c CONFIG)")


def cmd_generate(args: argparse.Namespace) -> None:
    gen, vocab = _load_generator(_checkpoint_arg(args))
    rng = np.random.default_rng(args.seed)
    start = time.perf_counter()
    out = generate_sequence(gen, args.seed_text, args.length, vocab, rng, args.temperature)
    elapsed = time.perf_counter() - start
    with _outputs() as written:
        _write_text(Path(args.out), out.text, written)
    rate = args.length / elapsed if elapsed > 0 else float("inf")
    _err(f"{args.out}: {args.length} characters, {rate:.0f} chars/s")


def _report(report: RealismReport, csv_path: Optional[str]) -> None:
    print(report.to_kv(), end="")
    if csv_path:
        path = Path(csv_path)
        fresh = not path.exists() or path.stat().st_size == 0
        with open(path, "a", encoding="utf-8", newline="\n") as fh:
            if fresh:
                fh.write(RealismReport.csv_header() + "\n")
            fh.write(report.csv_row() + "\n")


def cmd_features(args: argparse.Namespace) -> None:
    text = Path(args.log).read_text(encoding="utf-8")
    _report(logcodec.realism_features(text, ignore_case=args.ignore_case), args.csv)


def cmd_evaluate(args: argparse.Namespace) -> None:
    if args.log is not None:
        if args.checkpoint or args.config:
            raise CommandError("evaluate takes either a log file or a generator checkpoint, not both")
        cmd_features(args)
        return
    gen, vocab = _load_generator(_checkpoint_arg(args))
    report, _ = evaluate_generator(gen, vocab, args.length, np.random.default_rng(args.seed), args.seed_text)
    _report(report, args.csv)


# -- parser -------------------------------------------------------------------------------


def _count(text: str) -> int:
    """Non-negative integer; accepts forms like ``1e6``."""
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value < 0 or value != int(value):
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return int(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elevgan", description="Elevator log simulation and adversarial log generation."
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="run the elevator simulator and write an event log")
    p.add_argument("-c", "--config", help="building config file, or a directory of configs (batch mode)")
    p.add_argument("-t", "--t-max", type=_count, help="simulation horizon in ticks (default: config value, 1e6; 1e4 in batch mode)")
    p.add_argument("-o", "--out", required=True, help="output log file (output directory in batch mode)")
    p.set_defaults(func=cmd_simulate)

    for name, func, text in (
        ("pretrain-gen", cmd_pretrain_gen, "MLE-pretrain the generator on the corpus"),
        ("pretrain-disc", cmd_pretrain_disc, "pretrain the discriminator against the current generator"),
        ("train", cmd_train, "full run: pretraining then adversarial epochs"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("-c", "--config", required=True, help="training config file (key=value)")
        p.set_defaults(func=func)

    p = sub.add_parser("generate", help="sample text from a generator checkpoint")
    p.add_argument("--checkpoint", help="generator checkpoint (.npz with .manifest sidecar)")
    p.add_argument("-c", "--config", help="training config; its out_dir/generator.npz is used if --checkpoint is absent")
    p.add_argument("--seed-text", default=DEFAULT_SEED_TEXT, help=f"priming text (default: {DEFAULT_SEED_TEXT!r})")
    p.add_argument("--length", type=_count, default=10_000, help="characters to sample (default: 10000)")
    p.add_argument("--seed", type=_count, default=0, help="sampling RNG seed (default: 0)")
    p.add_argument("--temperature", type=float, help="sampling temperature (default: from checkpoint)")
    p.add_argument("-o", "--out", required=True, help="output text file")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("features", help="realism metrics of a log file")
    p.add_argument("log", help="log file to analyse")
    p.add_argument("--csv", help="append the metrics as one CSV row to this file")
    p.add_argument("--ignore-case", action="store_true", help="match keywords case-insensitively (for lowercase generator output)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("evaluate", help="realism metrics of a log file or of a fresh generator sample")
    p.add_argument("log", nargs="?", help="log file to analyse (omit to sample a generator)")
    p.add_argument("--checkpoint", help="generator checkpoint to sample from")
    p.add_argument("-c", "--config", help="training config; its out_dir/generator.npz is used if --checkpoint is absent")
    p.add_argument("--seed-text", default=DEFAULT_SEED_TEXT, help=f"priming text (default: {DEFAULT_SEED_TEXT!r})")
    p.add_argument("--length", type=_count, default=10_000, help="characters to sample, at least 1000 (default: 10000)")
    p.add_argument("--seed", type=_count, default=0, help="sampling RNG seed (default: 0)")
    p.add_argument("--csv", help="append the metrics as one CSV row to this file")
    p.add_argument("--ignore-case", action="store_true", help="match keywords case-insensitively when reading a log file")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CommandError, *USER_ERRORS) as exc:
        _err(f"elevgan {args.command}: error: {exc}")
        return 1
    except sim.SimulationFault as exc:
        _err(f"elevgan {args.command}: internal simulator fault: {exc}")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
