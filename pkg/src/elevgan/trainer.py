"""SeqGAN-style adversarial training.

The generator is treated as a stochastic policy. Discrete samples are never
differentiated: each sampled token is scored by Monte-Carlo rollouts
(complete the prefix with the frozen generator, average the discriminator's
P(real) over the completions), and the generator is updated with REINFORCE
on teacher-forced log-probabilities of the tokens it actually chose.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import logcodec
from .config import ConfigError, from_mapping, read_kv
from .logcodec import RealismReport, Vocabulary
from .models import (
    DEFAULT_SEED_TEXT,
    BatchGeneration,
    DiscriminatorConfig,
    DiscriminatorParams,
    GeneratorConfig,
    GeneratorParams,
    discriminator_forward,
    discriminator_train_step,
    generate_batch,
    generate_sequence,
    generator_logits,
    init_discriminator,
    init_generator,
    mle_pretrain_step,
    prime,
    sample_from,
    save_checkpoint,
)
from .nn import Tape, adam_step, backward, ops

HISTORY_HEADER = (
    "epoch",
    "g_loss",
    "mean_reward",
    "d_loss",
    "d_acc",
    "parse_rate",
    "monotonic_frac",
    "lifecycle_rate",
)


@dataclass(frozen=True)
class TrainConfig:
    corpus: str = ""
    out_dir: str = "runs/default"
    fold_lowercase: bool = True
    seq_length: int = 100
    batch_size: int = 64
    # generator
    emb_dim: int = 32
    hidden_dim: int = 128
    temperature: float = 1.0
    mle_epochs: int = 10
    mle_lr: float = 0.003
    # discriminator
    disc_emb_dim: int = 32
    conv_filters: int = 64
    conv_width: int = 5
    disc_hidden_dim: int = 64
    dropout: float = 0.2
    disc_epochs: int = 3
    disc_windows: int = 2000
    lr_d: float = 0.001
    # adversarial phase
    epochs: int = 10
    g_steps: int = 1
    d_steps: int = 1
    g_batch_size: int = 16
    n_rollouts: int = 8
    lr_g: float = 0.001
    baseline_decay: float = 0.9
    start_text: str = "\n"
    # evaluation sample per history row (0 disables)
    eval_chars: int = 2000
    eval_seed_text: str = DEFAULT_SEED_TEXT
    # seeds
    init_seed: int = 0
    data_seed: int = 1
    sample_seed: int = 2
    dropout_seed: int = 3

    def __post_init__(self):
        if self.n_rollouts < 1:
            raise ConfigError(f"n_rollouts must be >= 1, got {self.n_rollouts}")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ConfigError(f"baseline_decay must lie in [0, 1), got {self.baseline_decay}")
        if self.seq_length < self.conv_width:
            raise ConfigError("seq_length must be at least conv_width")
        for name in ("batch_size", "g_batch_size", "seq_length"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (half real, half fake)")

    def generator_config(self, vocab_size: int) -> GeneratorConfig:
        return GeneratorConfig(vocab_size, self.emb_dim, self.hidden_dim, self.temperature)

    def discriminator_config(self, vocab_size: int) -> DiscriminatorConfig:
        return DiscriminatorConfig(
            vocab_size, self.disc_emb_dim, self.conv_filters, self.conv_width, self.disc_hidden_dim, self.dropout
        )


def load_train_config(path: str | Path, **overrides) -> TrainConfig:
    raw = read_kv(path)
    raw.update({k: str(v) for k, v in overrides.items() if v is not None})
    cfg = from_mapping(TrainConfig, raw)
    # relative paths are resolved against the config file's directory
    base = Path(path).parent
    updates = {}
    for key in ("corpus", "out_dir"):
        value = getattr(cfg, key)
        if value and not Path(value).is_absolute():
            updates[key] = str(base / value)
    return replace(cfg, **updates)


# -- history --------------------------------------------------------------------


@dataclass
class HistoryRow:
    epoch: str
    g_loss: float = math.nan
    mean_reward: float = math.nan
    d_loss: float = math.nan
    d_acc: float = math.nan
    parse_rate: float = math.nan
    monotonic_frac: float = math.nan
    lifecycle_rate: float = math.nan

    def values(self) -> list[str]:
        return [self.epoch] + [repr(float(getattr(self, k))) for k in HISTORY_HEADER[1:]]


@dataclass
class TrainHistory:
    rows: list[HistoryRow] = field(default_factory=list)

    def append(self, row: HistoryRow) -> None:
        self.rows.append(row)

    def extend(self, other: "TrainHistory") -> None:
        self.rows.extend(other.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for row in self.rows:
            writer.writerow(row.values())
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


@dataclass
class Baseline:
    """Exponential moving average of rewards, subtracted to form advantages."""

    value: float = 0.5
    decay: float = 0.9

    def update(self, reward: float) -> None:
        self.value = self.decay * self.value + (1.0 - self.decay) * reward


# -- data ---------------------------------------------------------------------------


@dataclass
class Corpus:
    vocab: Vocabulary
    tokens: np.ndarray
    start_tokens: np.ndarray
    # positions directly after an occurrence of start_tokens (real window starts)
    window_starts: np.ndarray

    @classmethod
    def from_text(
        cls, text: str, seq_length: int, start_text: str = "\n", vocab: Optional[Vocabulary] = None, fold_lowercase: bool = True
    ) -> "Corpus":
        vocab = vocab or logcodec.build_vocab(text, fold_lowercase)
        tokens = logcodec.encode(text, vocab)
        start = logcodec.encode(start_text, vocab)
        return cls(vocab, tokens, start, window_starts(tokens, start, seq_length))

    def windows(self, positions: np.ndarray, length: int) -> np.ndarray:
        return self.tokens[positions[:, None] + np.arange(length)]


def window_starts(tokens: np.ndarray, start_tokens: np.ndarray, length: int) -> np.ndarray:
    n, k = len(tokens), len(start_tokens)
    last = n - length
    if k == 0:
        return np.arange(0, max(last + 1, 0))
    hits = np.ones(max(n - k + 1, 0), dtype=bool)
    for j, tok in enumerate(start_tokens):
        hits &= tokens[j : n - k + 1 + j] == tok
    starts = np.nonzero(hits)[0] + k
    return starts[starts <= last]


@dataclass
class Streams:
    """Independent RNG streams so that no phase perturbs another."""

    data: np.random.Generator
    sample: np.random.Generator
    rollout: np.random.Generator
    dropout: np.random.Generator

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "Streams":
        sample_seq = np.random.SeedSequence(cfg.sample_seed)
        sample_child, rollout_child = sample_seq.spawn(2)
        return cls(
            data=np.random.default_rng(cfg.data_seed),
            sample=np.random.default_rng(sample_child),
            rollout=np.random.default_rng(rollout_child),
            dropout=np.random.default_rng(cfg.dropout_seed),
        )


# -- rollouts and policy gradient ------------------------------------------------------


def _score(disc: DiscriminatorParams, tokens: np.ndarray) -> np.ndarray:
    return discriminator_forward(disc, tokens, training_mode=False)


def rollout_reward(
    gen: GeneratorParams,
    disc: DiscriminatorParams,
    partial_sequence,
    n_rollouts: int,
    rng: np.random.Generator,
    horizon: int,
    seed_tokens,
) -> float:
    """Expected P(real) of a partial sequence, estimated with ``n_rollouts`` completions.

    A sequence already at the horizon is scored directly.
    """
    partial = np.asarray(partial_sequence, dtype=np.int64)
    if len(partial) > horizon:
        raise ValueError(f"partial sequence of length {len(partial)} exceeds horizon {horizon}")
    if len(partial) == horizon:
        return float(_score(disc, partial[None])[0])
    context = np.concatenate([np.asarray(seed_tokens, dtype=np.int64), partial])
    dist, state = prime(gen, context, n_rollouts)
    completion = sample_from(gen, dist, state, horizon - len(partial), rng).tokens
    full = np.concatenate([np.repeat(partial[None], n_rollouts, axis=0), completion], axis=1)
    return float(_score(disc, full).mean())


def rollout_rewards(
    gen: GeneratorParams,
    disc: DiscriminatorParams,
    batch: BatchGeneration,
    n_rollouts: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Reward for every generated token: [B, T] rollout estimates of each prefix."""
    tokens = batch.tokens
    B, T = tokens.shape
    if batch.states is None or batch.dists is None:
        raise ValueError("rollout_rewards needs a generation made with keep_states=True")
    rewards = np.empty((B, T))
    for t in range(1, T):
        # the prefix tokens[:, :t] is fixed; states[t] produces token t
        h, c = batch.states[t]
        state = (np.repeat(h, n_rollouts, axis=0), np.repeat(c, n_rollouts, axis=0))
        dist = np.repeat(batch.dists[t], n_rollouts, axis=0)
        completion = sample_from(gen, dist, state, T - t, rng).tokens
        full = np.concatenate([np.repeat(tokens[:, :t], n_rollouts, axis=0), completion], axis=1)
        rewards[:, t - 1] = _score(disc, full).reshape(B, n_rollouts).mean(axis=1)
    rewards[:, T - 1] = _score(disc, tokens)
    return rewards


def policy_gradient_step(
    gen: GeneratorParams,
    sequences: np.ndarray,
    rewards: np.ndarray,
    baseline: Baseline,
    lr: float,
    seed_tokens,
) -> float:
    """REINFORCE update: minimise ``-mean((reward - baseline) * log p(chosen token))``.

    ``sequences[B, T]`` were sampled after ``seed_tokens``; the log-probs are
    recomputed under the tape by feeding seed + sequence, so gradients reach
    the generator through its probabilities, not through the samples. A step
    with identically zero advantage leaves the generator untouched.
    """
    sequences = np.asarray(sequences, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=np.float64)
    if sequences.ndim != 2 or rewards.shape != sequences.shape:
        raise ValueError(f"rewards {rewards.shape} must align one-per-token with sequences {sequences.shape}")
    seed = np.asarray(seed_tokens, dtype=np.int64)
    if seed.size == 0:
        raise ValueError("policy_gradient_step needs the seed tokens the sequences were drawn after")
    B, T = sequences.shape
    advantage = rewards - baseline.value
    baseline.update(float(rewards.mean()))
    if not np.any(advantage):
        return 0.0

    seed_rows = np.repeat(seed[None], B, axis=0)
    inputs = np.concatenate([seed_rows, sequences[:, :-1]], axis=1)
    targets = np.concatenate([seed_rows[:, 1:], sequences], axis=1)
    n_seed = len(seed) - 1
    weights = np.concatenate([np.zeros((B, n_seed)), advantage], axis=1) * (targets.shape[1] / T)
    with Tape() as tape:
        logits, _ = generator_logits(gen, inputs)
        loss = ops.softmax_cross_entropy(logits, targets, weights)
    grads = backward(tape, loss, gen.params)
    adam_step(gen.params, grads, lr)
    return float(loss.data)


# -- phases -----------------------------------------------------------------------


def evaluate_generator(
    gen: GeneratorParams,
    vocab: Vocabulary,
    sample_chars: int,
    rng: np.random.Generator,
    seed_text: str = DEFAULT_SEED_TEXT,
) -> tuple[RealismReport, str]:
    """Generate ``seed_text`` + ``sample_chars`` characters and measure realism."""
    if sample_chars < 1000:
        raise ValueError("evaluate_generator needs sample_chars >= 1000")
    out = generate_sequence(gen, seed_text, sample_chars, vocab, rng)
    text = vocab.fold(seed_text) + out.text
    return logcodec.realism_features(text, ignore_case=vocab.lowercase_folded), text


def _realism_columns(row: HistoryRow, gen: GeneratorParams, vocab: Vocabulary, cfg: TrainConfig, tag: int) -> None:
    if cfg.eval_chars <= 0:
        return
    # evaluation draws from its own fixed stream so training is unaffected
    rng = np.random.default_rng([cfg.sample_seed, 7919, tag])
    report, _ = evaluate_generator(gen, vocab, max(cfg.eval_chars, 1000), rng, cfg.eval_seed_text)
    row.parse_rate = report.line_parse_rate
    row.monotonic_frac = report.timestamp_monotonic_fraction
    row.lifecycle_rate = report.lifecycle_complete_rate


def pretrain_generator(
    gen: GeneratorParams,
    corpus: Corpus,
    cfg: TrainConfig,
    streams: Streams,
    log: Optional[Callable[[str], None]] = None,
) -> TrainHistory:
    """Teacher-forced next-character training for ``cfg.mle_epochs`` epochs."""
    history = TrainHistory()
    if cfg.mle_epochs <= 0:
        return history
    batches = logcodec.batchify(corpus.tokens, cfg.seq_length, cfg.batch_size)
    for epoch in range(1, cfg.mle_epochs + 1):
        order = streams.data.permutation(len(batches))
        losses = [mle_pretrain_step(gen, *batches[i], cfg.mle_lr) for i in order]
        row = HistoryRow(f"mle_{epoch}", g_loss=float(np.mean(losses)))
        _realism_columns(row, gen, corpus.vocab, cfg, epoch)
        history.append(row)
        if log:
            log(f"mle epoch {epoch}: loss={row.g_loss:.4f} parse_rate={row.parse_rate:.3f}")
    return history


def sample_real(corpus: Corpus, count: int, length: int, rng: np.random.Generator) -> np.ndarray:
    if len(corpus.window_starts) == 0:
        raise ValueError(f"corpus has no window of length {length} after the start text")
    return corpus.windows(rng.choice(corpus.window_starts, size=count), length)


def sample_fake(gen: GeneratorParams, corpus: Corpus, count: int, length: int, rng: np.random.Generator) -> np.ndarray:
    return generate_batch(gen, corpus.start_tokens, count, length, rng, gen.config.temperature).tokens


def measure_reward(
    gen: GeneratorParams, disc: DiscriminatorParams, corpus: Corpus, cfg: TrainConfig, streams: Streams
) -> float:
    batch = generate_batch(gen, corpus.start_tokens, cfg.g_batch_size, cfg.seq_length, streams.sample, keep_states=True)
    return float(rollout_rewards(gen, disc, batch, cfg.n_rollouts, streams.rollout).mean())


def pretrain_discriminator(
    gen: GeneratorParams,
    disc: DiscriminatorParams,
    corpus: Corpus,
    cfg: TrainConfig,
    streams: Streams,
    epochs: Optional[int] = None,
    log: Optional[Callable[[str], None]] = None,
) -> TrainHistory:
    """Train the discriminator on real windows vs. fresh samples of ``gen``.

    Each epoch draws ``cfg.disc_windows`` real windows and as many generated
    sequences, then runs balanced half/half batches over them.
    """
    epochs = cfg.disc_epochs if epochs is None else epochs
    history = TrainHistory()
    if epochs <= 0:
        return history
    half = cfg.batch_size // 2
    if len(corpus.window_starts) < half:
        raise ValueError(
            f"corpus provides {len(corpus.window_starts)} windows of length {cfg.seq_length}, need at least {half}"
        )
    for epoch in range(1, epochs + 1):
        real = sample_real(corpus, cfg.disc_windows, cfg.seq_length, streams.data)
        fake = sample_fake(gen, corpus, cfg.disc_windows, cfg.seq_length, streams.sample)
        losses, accs = [], []
        for start in range(0, cfg.disc_windows, half):
            loss, acc = discriminator_train_step(
                disc, real[start : start + half], fake[start : start + half], cfg.lr_d, streams.dropout
            )
            losses.append(loss)
            accs.append(acc)
        row = HistoryRow(f"disc_{epoch}", d_loss=float(np.mean(losses)), d_acc=float(np.mean(accs)))
        if epoch == epochs:
            row.mean_reward = measure_reward(gen, disc, corpus, cfg, streams)
        history.append(row)
        if log:
            log(f"disc epoch {epoch}: loss={row.d_loss:.4f} acc={row.d_acc:.3f}")
    return history


@dataclass
class GanState:
    gen: GeneratorParams
    disc: DiscriminatorParams
    corpus: Corpus
    config: TrainConfig
    streams: Streams
    baseline: Baseline
    epoch: int = 0


def new_gan_state(corpus: Corpus, cfg: TrainConfig, gen: Optional[GeneratorParams] = None) -> GanState:
    V = corpus.vocab.size
    gen = gen or init_generator(cfg.generator_config(V), cfg.init_seed)
    disc = init_discriminator(cfg.discriminator_config(V), cfg.init_seed + 1)
    return GanState(gen, disc, corpus, cfg, Streams.from_config(cfg), Baseline(0.5, cfg.baseline_decay))


def adversarial_epoch(state: GanState) -> HistoryRow:
    """``g_steps`` policy-gradient updates, then ``d_steps`` discriminator updates."""
    cfg, gen, disc, corpus, streams = state.config, state.gen, state.disc, state.corpus, state.streams
    state.epoch += 1
    g_losses, rewards_seen, d_losses, d_accs = [], [], [], []
    for _ in range(cfg.g_steps):
        batch = generate_batch(
            gen, corpus.start_tokens, cfg.g_batch_size, cfg.seq_length, streams.sample, gen.config.temperature, keep_states=True
        )
        rewards = rollout_rewards(gen, disc, batch, cfg.n_rollouts, streams.rollout)
        g_losses.append(policy_gradient_step(gen, batch.tokens, rewards, state.baseline, cfg.lr_g, corpus.start_tokens))
        rewards_seen.append(float(rewards.mean()))
    half = cfg.batch_size // 2
    for _ in range(cfg.d_steps):
        real = sample_real(corpus, half, cfg.seq_length, streams.data)
        fake = sample_fake(gen, corpus, half, cfg.seq_length, streams.sample)
        loss, acc = discriminator_train_step(disc, real, fake, cfg.lr_d, streams.dropout)
        d_losses.append(loss)
        d_accs.append(acc)

    def avg(xs):
        return float(np.mean(xs)) if xs else math.nan

    row = HistoryRow(str(state.epoch), avg(g_losses), avg(rewards_seen), avg(d_losses), avg(d_accs))
    _realism_columns(row, gen, corpus.vocab, cfg, 1000 + state.epoch)
    return row


def load_corpus(cfg: TrainConfig, vocab: Optional[Vocabulary] = None) -> Corpus:
    if not cfg.corpus:
        raise ValueError("training config has no corpus path")
    path = Path(cfg.corpus)
    if not path.is_file():
        raise FileNotFoundError(f"corpus not found: {path}")
    text = path.read_text(encoding="utf-8")
    return Corpus.from_text(text, cfg.seq_length, cfg.start_text, vocab, cfg.fold_lowercase)


def train(
    cfg: TrainConfig,
    corpus: Optional[Corpus] = None,
    log: Optional[Callable[[str], None]] = None,
) -> TrainHistory:
    """Full run: MLE pretraining, discriminator pretraining, ``cfg.epochs`` adversarial epochs.

    Checkpoints (``generator``/``discriminator`` .npz + .manifest) are
    rewritten after every phase and epoch, and ``history.csv`` at the end.
    """
    corpus = corpus or load_corpus(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = new_gan_state(corpus, cfg)
    history = pretrain_generator(state.gen, corpus, cfg, state.streams, log)
    save_checkpoint(state.gen, corpus.vocab, out / "generator")
    history.extend(pretrain_discriminator(state.gen, state.disc, corpus, cfg, state.streams, log=log))
    save_checkpoint(state.disc, corpus.vocab, out / "discriminator")
    for _ in range(cfg.epochs):
        row = adversarial_epoch(state)
        history.append(row)
        save_checkpoint(state.gen, corpus.vocab, out / "generator")
        save_checkpoint(state.disc, corpus.vocab, out / "discriminator")
        if log:
            log(f"epoch {row.epoch}: g_loss={row.g_loss:.4f} reward={row.mean_reward:.4f} d_acc={row.d_acc:.3f}")
    history.write_csv(out / "history.csv")
    return history
