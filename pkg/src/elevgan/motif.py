"""Synthetic motif language: endless repetitions of one fixed 4-token word.

Small enough that a full adversarial run takes seconds, which makes it the
test bed for checking that the policy-gradient signal moves the generator.
"""

from __future__ import annotations

import numpy as np

from .logcodec import Vocabulary
from .trainer import Corpus, TrainConfig

MOTIF_ALPHABET = "abcdefgh"
MOTIF = "bfah"


def motif_vocab() -> Vocabulary:
    return Vocabulary(tuple(MOTIF_ALPHABET), lowercase_folded=False)


def motif_config(**overrides) -> TrainConfig:
    """Desk-scale settings for the motif task (vocab 8, horizon 20)."""
    base = dict(
        seq_length=20,
        batch_size=32,
        emb_dim=8,
        hidden_dim=32,
        mle_epochs=0,
        disc_emb_dim=8,
        conv_filters=16,
        conv_width=4,
        disc_hidden_dim=16,
        dropout=0.0,
        disc_epochs=3,
        disc_windows=256,
        lr_d=5e-3,
        epochs=20,
        g_steps=10,
        d_steps=1,
        g_batch_size=16,
        n_rollouts=8,
        lr_g=1e-2,
        start_text=MOTIF[-1],
        eval_chars=0,
        out_dir="runs/motif",
    )
    base.update(overrides)
    return TrainConfig(**base)


def motif_corpus(cfg: TrainConfig, repeats: int = 3000) -> Corpus:
    return Corpus.from_text(MOTIF * repeats, cfg.seq_length, cfg.start_text, motif_vocab())


def motif_fidelity(tokens: np.ndarray) -> float:
    """Fraction of generated tokens equal to the motif continuation.

    Sequences are generated right after the motif's last token, so position
    ``t`` should hold ``MOTIF[t % 4]``.
    """
    tokens = np.atleast_2d(tokens)
    vocab = motif_vocab()
    expected = np.array([vocab.index(MOTIF[t % len(MOTIF)]) for t in range(tokens.shape[1])])
    return float((tokens == expected).mean())
