"""Character-level LSTM generator and convolutional discriminator.

Generator: embedding -> LSTM -> dense softmax over the vocabulary.
Discriminator: embedding -> conv1d -> global max pool -> dense relu ->
dropout -> dense sigmoid, scoring P(sequence is real).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import logcodec
from .logcodec import Vocabulary
from .nn import ParamSet, Tape, Tensor, adam_step, backward
from .nn import ops
from .nn.ops import _sigmoid, _softmax

DEFAULT_SEED_TEXT = "1 - New Call:"


class CheckpointMismatch(ValueError):
    """A checkpoint was written for a different vocabulary or model kind."""


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _check_tokens(tokens: np.ndarray, vocab_size: int) -> np.ndarray:
    tokens = np.asarray(tokens)
    if not np.issubdtype(tokens.dtype, np.integer):
        raise ValueError(f"tokens must be integers, got {tokens.dtype}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab_size):
        raise ValueError(f"token outside vocabulary of size {vocab_size}")
    return tokens.astype(np.int64, copy=False)


# -- generator ----------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorConfig:
    vocab_size: int
    emb_dim: int = 32
    hidden_dim: int = 128
    temperature: float = 1.0


@dataclass
class GeneratorParams:
    config: GeneratorConfig
    params: ParamSet

    def copy(self) -> "GeneratorParams":
        return GeneratorParams(self.config, self.params.copy())


def init_generator(config: GeneratorConfig, seed: int = 0) -> GeneratorParams:
    rng = np.random.default_rng(seed)
    V, E, H = config.vocab_size, config.emb_dim, config.hidden_dim
    bias = np.zeros(4 * H)
    bias[H : 2 * H] = 1.0  # forget gate
    params = ParamSet(
        {
            "embedding": _uniform(rng, (V, E), E),
            "lstm/wx": _uniform(rng, (E, 4 * H), E),
            "lstm/wh": _uniform(rng, (H, 4 * H), H),
            "lstm/b": bias,
            "out/w": _uniform(rng, (H, V), H),
            "out/b": np.zeros(V),
        }
    )
    return GeneratorParams(config, params)


State = tuple[np.ndarray, np.ndarray]


def zero_state(gen: GeneratorParams, batch: int) -> State:
    H = gen.config.hidden_dim
    return np.zeros((batch, H)), np.zeros((batch, H))


def generator_logits(
    gen: GeneratorParams, tokens: np.ndarray, state: Optional[State] = None
) -> tuple[Tensor, tuple[Tensor, Tensor]]:
    """Tape-aware forward pass on ``tokens[B, T]``; returns logits [B, T, V] and (h, c)."""
    p = gen.params
    tokens = _check_tokens(tokens, gen.config.vocab_size)
    batch = tokens.shape[0]
    h0, c0 = state if state is not None else zero_state(gen, batch)
    x = ops.embedding_lookup(p["embedding"], tokens)
    hs, h, c = ops.lstm(x, Tensor(h0), Tensor(c0), p["lstm/wx"], p["lstm/wh"], p["lstm/b"])
    return ops.dense(hs, p["out/w"], p["out/b"]), (h, c)


def generator_forward(
    gen: GeneratorParams, input_tokens, initial_state: Optional[State] = None
) -> tuple[np.ndarray, State]:
    """Next-token distributions for every input position.

    ``input_tokens`` is [T] or [B, T]; the result is [T, V] or [B, T, V]
    and the recurrent state after the last token.
    """
    tokens = np.asarray(input_tokens)
    single = tokens.ndim == 1
    tokens = tokens[None] if single else tokens
    if tokens.shape[1] == 0:
        state = initial_state if initial_state is not None else zero_state(gen, tokens.shape[0])
        empty = np.zeros((tokens.shape[0], 0, gen.config.vocab_size))
        return (empty[0] if single else empty), state
    logits, (h, c) = generator_logits(gen, tokens, initial_state)
    probs = _softmax(logits.data)
    return (probs[0] if single else probs), (h.data, c.data)


def generator_step(gen: GeneratorParams, tokens: np.ndarray, state: State) -> tuple[np.ndarray, State]:
    """Feed one token per row (no tape); returns distributions [B, V] and the new state."""
    p = gen.params.values()
    H = gen.config.hidden_dim
    h, c = state
    z = (p["embedding"][tokens] @ p["lstm/wx"] + p["lstm/b"]) + h @ p["lstm/wh"]
    i = _sigmoid(z[:, :H])
    f = _sigmoid(z[:, H : 2 * H])
    g = np.tanh(z[:, 2 * H : 3 * H])
    o = _sigmoid(z[:, 3 * H :])
    c = f * c + i * g
    h = o * np.tanh(c)
    return _softmax(h @ p["out/w"] + p["out/b"]), (h, c)


def _temper(probs: np.ndarray, temperature: float) -> np.ndarray:
    if not np.all(np.isfinite(probs)):
        raise ValueError("distribution contains non-finite values")
    if temperature == 1.0:
        return probs
    if temperature <= 0.0:
        out = np.zeros_like(probs)
        np.put_along_axis(out, probs.argmax(axis=-1)[..., None], 1.0, axis=-1)
        return out
    with np.errstate(divide="ignore"):
        logits = np.log(probs) / temperature
    return _softmax(logits)


def sample_batch(probs: np.ndarray, rng: np.random.Generator, temperature: float = 1.0) -> np.ndarray:
    """One categorical draw per row of ``probs[B, V]`` using one uniform each."""
    probs = _temper(np.asarray(probs, dtype=np.float64), temperature)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_next(distribution, rng: np.random.Generator, temperature: float = 1.0) -> int:
    """Draw one token; temperature 0 means argmax."""
    return int(sample_batch(np.asarray(distribution, dtype=np.float64)[None], rng, temperature)[0])


@dataclass
class GenerationOutput:
    tokens: np.ndarray  # [L]
    probs: np.ndarray  # [L], probability of each chosen token when it was drawn
    text: str = ""


@dataclass
class BatchGeneration:
    tokens: np.ndarray  # [B, L]
    probs: np.ndarray  # [B, L]
    # states[t] and dists[t] produce token t; kept for rollouts
    states: Optional[list[State]] = None
    dists: Optional[list[np.ndarray]] = None


def prime(gen: GeneratorParams, seed_tokens: np.ndarray, batch: int) -> tuple[np.ndarray, State]:
    """Feed ``seed_tokens`` (shared by all rows); returns the next distribution and state."""
    seed_tokens = _check_tokens(seed_tokens, gen.config.vocab_size)
    if seed_tokens.size == 0:
        raise ValueError("generation needs at least one seed token")
    state = zero_state(gen, 1)
    for tok in seed_tokens:
        dist, state = generator_step(gen, np.array([tok]), state)
    return np.repeat(dist, batch, axis=0), (np.repeat(state[0], batch, axis=0), np.repeat(state[1], batch, axis=0))


def sample_from(
    gen: GeneratorParams,
    dist: np.ndarray,
    state: State,
    length: int,
    rng: np.random.Generator,
    temperature: float = 1.0,
    keep_states: bool = False,
) -> BatchGeneration:
    """Autoregressively draw ``length`` tokens per row starting from (dist, state)."""
    batch = dist.shape[0]
    tokens = np.zeros((batch, length), dtype=np.int64)
    probs = np.zeros((batch, length))
    states: list[State] = []
    dists: list[np.ndarray] = []
    for t in range(length):
        if keep_states:
            states.append(state)
            dists.append(dist)
        tempered = _temper(dist, temperature)
        tok = sample_batch(tempered, rng)
        tokens[:, t] = tok
        probs[:, t] = tempered[np.arange(batch), tok]
        if t + 1 < length:
            dist, state = generator_step(gen, tok, state)
    return BatchGeneration(tokens, probs, states if keep_states else None, dists if keep_states else None)


def generate_batch(
    gen: GeneratorParams,
    seed_tokens: np.ndarray,
    batch: int,
    length: int,
    rng: np.random.Generator,
    temperature: float = 1.0,
    keep_states: bool = False,
) -> BatchGeneration:
    dist, state = prime(gen, seed_tokens, batch)
    return sample_from(gen, dist, state, length, rng, temperature, keep_states)


def generate_sequence(
    gen: GeneratorParams,
    seed_text: str,
    length: int,
    vocab: Vocabulary,
    rng: np.random.Generator,
    temperature: Optional[float] = None,
) -> GenerationOutput:
    """Feed ``seed_text`` then sample ``length`` characters.

    ``text`` holds only the sampled characters; callers that want the full
    sample prepend the (folded) seed themselves.
    """
    seed = logcodec.encode(seed_text, vocab)
    if length == 0:
        return GenerationOutput(np.zeros(0, dtype=np.int64), np.zeros(0), "")
    temp = gen.config.temperature if temperature is None else temperature
    out = generate_batch(gen, seed, 1, length, rng, temp)
    return GenerationOutput(out.tokens[0], out.probs[0], logcodec.decode(out.tokens[0], vocab))


def mle_pretrain_step(gen: GeneratorParams, inputs: np.ndarray, targets: np.ndarray, lr: float) -> float:
    """One teacher-forced next-char cross-entropy update; returns the loss before it."""
    inputs, targets = np.asarray(inputs), np.asarray(targets)
    if inputs.shape != targets.shape or inputs.ndim != 2:
        raise ValueError(f"input/target batches must share a [B, T] shape, got {inputs.shape} and {targets.shape}")
    targets = _check_tokens(targets, gen.config.vocab_size)
    with Tape() as tape:
        logits, _ = generator_logits(gen, inputs)
        loss = ops.softmax_cross_entropy(logits, targets)
    grads = backward(tape, loss, gen.params)
    adam_step(gen.params, grads, lr)
    return float(loss.data)


# -- discriminator --------------------------------------------------------------


@dataclass(frozen=True)
class DiscriminatorConfig:
    vocab_size: int
    emb_dim: int = 32
    filters: int = 64
    width: int = 5
    hidden_dim: int = 64
    dropout: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass
class DiscriminatorParams:
    config: DiscriminatorConfig
    params: ParamSet

    def copy(self) -> "DiscriminatorParams":
        return DiscriminatorParams(self.config, self.params.copy())


def init_discriminator(config: DiscriminatorConfig, seed: int = 0) -> DiscriminatorParams:
    rng = np.random.default_rng(seed)
    V, E, F, W, Hd = config.vocab_size, config.emb_dim, config.filters, config.width, config.hidden_dim
    params = ParamSet(
        {
            "embedding": _uniform(rng, (V, E), E),
            "conv/kernel": _uniform(rng, (W, E, F), W * E),
            "conv/bias": np.zeros(F),
            "hidden/w": _uniform(rng, (F, Hd), F),
            "hidden/b": np.zeros(Hd),
            "out/w": _uniform(rng, (Hd, 1), Hd),
            "out/b": np.zeros(1),
        }
    )
    return DiscriminatorParams(config, params)


def discriminator_logits(
    disc: DiscriminatorParams,
    tokens: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Raw scores [B] for ``tokens[B, T]`` (tape-aware)."""
    p = disc.params
    cfg = disc.config
    tokens = _check_tokens(tokens, cfg.vocab_size)
    if tokens.ndim != 2:
        raise ValueError(f"expected a [batch, time] token array, got shape {tokens.shape}")
    if tokens.shape[1] < cfg.width:
        raise ValueError(f"sequence length {tokens.shape[1]} is shorter than the conv width {cfg.width}")
    x = ops.embedding_lookup(p["embedding"], tokens)
    x = ops.conv1d(x, p["conv/kernel"], p["conv/bias"])
    x = ops.global_max_pool1d(x)
    x = ops.relu(ops.dense(x, p["hidden/w"], p["hidden/b"]))
    x = ops.dropout(x, cfg.dropout, rng, training)
    x = ops.dense(x, p["out/w"], p["out/b"])
    return ops.reshape(x, (tokens.shape[0],))


def discriminator_forward(
    disc: DiscriminatorParams,
    token_sequence,
    training_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
):
    """P(real) for one sequence [T] (returns float) or a batch [B, T] (returns array)."""
    tokens = np.asarray(token_sequence)
    single = tokens.ndim == 1
    scores = _sigmoid(discriminator_logits(disc, tokens[None] if single else tokens, training_mode, rng).data)
    return float(scores[0]) if single else scores


def discriminator_train_step(
    disc: DiscriminatorParams,
    real_batch: np.ndarray,
    fake_batch: np.ndarray,
    lr: float,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, float]:
    """Binary cross-entropy on real (label 1) + fake (label 0); returns pre-update (loss, accuracy)."""
    real_batch, fake_batch = np.asarray(real_batch), np.asarray(fake_batch)
    if len(real_batch) == 0 or len(fake_batch) == 0:
        raise ValueError("discriminator_train_step needs nonempty real and fake batches")
    tokens = np.concatenate([real_batch, fake_batch])
    labels = np.concatenate([np.ones(len(real_batch)), np.zeros(len(fake_batch))])
    with Tape() as tape:
        logits = discriminator_logits(disc, tokens, training=True, rng=rng)
        loss = ops.sigmoid_binary_cross_entropy(logits, labels)
    grads = backward(tape, loss, disc.params)
    accuracy = float(np.mean((logits.data >= 0.0) == (labels == 1.0)))
    adam_step(disc.params, grads, lr)
    return float(loss.data), accuracy


# -- checkpoints ------------------------------------------------------------------


def _manifest_path(path: Path) -> Path:
    return path.with_suffix(".manifest")


def save_checkpoint(model: GeneratorParams | DiscriminatorParams, vocab: Vocabulary, path: str | Path) -> None:
    """Write ``<path>.npz`` weights and a ``<path>.manifest`` key=value sidecar."""
    path = Path(path).with_suffix(".npz")
    kind = "generator" if isinstance(model, GeneratorParams) else "discriminator"
    model.params.save(path)
    lines = [
        f"kind={kind}",
        f"vocab_digest={vocab.digest()}",
        f"vocab_chars={json.dumps(''.join(vocab.chars))}",
        f"lowercase_folded={vocab.lowercase_folded}",
    ]
    lines += [f"{k}={v}" for k, v in asdict(model.config).items()]
    _manifest_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(
    path: str | Path, expect_vocab: Optional[Vocabulary] = None
) -> tuple[GeneratorParams | DiscriminatorParams, Vocabulary]:
    path = Path(path).with_suffix(".npz")
    manifest = _read_manifest(_manifest_path(path).read_text(encoding="utf-8"))
    vocab = Vocabulary(tuple(json.loads(manifest["vocab_chars"])), manifest["lowercase_folded"] == "True")
    if vocab.digest() != manifest["vocab_digest"]:
        raise CheckpointMismatch(f"{path}: manifest vocabulary digest is inconsistent")
    if expect_vocab is not None and expect_vocab.digest() != vocab.digest():
        raise CheckpointMismatch(
            f"{path}: checkpoint vocabulary {vocab.digest()} does not match expected {expect_vocab.digest()}"
        )
    params = ParamSet.load(path)
    if manifest["kind"] == "generator":
        cfg = GeneratorConfig(
            int(manifest["vocab_size"]),
            int(manifest["emb_dim"]),
            int(manifest["hidden_dim"]),
            float(manifest["temperature"]),
        )
        model: GeneratorParams | DiscriminatorParams = GeneratorParams(cfg, params)
    elif manifest["kind"] == "discriminator":
        dcfg = DiscriminatorConfig(
            int(manifest["vocab_size"]),
            int(manifest["emb_dim"]),
            int(manifest["filters"]),
            int(manifest["width"]),
            int(manifest["hidden_dim"]),
            float(manifest["dropout"]),
        )
        model = DiscriminatorParams(dcfg, params)
    else:
        raise CheckpointMismatch(f"{path}: unknown model kind {manifest['kind']!r}")
    if model.config.vocab_size != vocab.size:
        raise CheckpointMismatch(f"{path}: model vocab_size {model.config.vocab_size} != vocabulary size {vocab.size}")
    return model, vocab


def _read_manifest(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, value = line.split("=", 1)
            out[key] = value
    return out
