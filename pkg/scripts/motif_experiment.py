"""Adversarial training on the motif language over several seeds.

For each seed, reports the mean discriminator reward after discriminator
pretraining and after the adversarial epochs, plus the motif fidelity of a
fresh sample. Fidelity near 1/8 means uniform output, 1.0 means the motif.
"""

import argparse
import time

import numpy as np

from elevgan.models import generate_batch
from elevgan.motif import motif_config, motif_corpus, motif_fidelity
from elevgan.trainer import adversarial_epoch, new_gan_state, pretrain_discriminator


def run(seed: int, epochs: int, **overrides) -> tuple[float, float, float]:
    cfg = motif_config(epochs=epochs, init_seed=seed, data_seed=seed + 10, sample_seed=seed + 20, **overrides)
    corpus = motif_corpus(cfg)
    state = new_gan_state(corpus, cfg)
    base = pretrain_discriminator(state.gen, state.disc, corpus, cfg, state.streams).rows[-1].mean_reward
    final = base
    for _ in range(cfg.epochs):
        final = adversarial_epoch(state).mean_reward
    tokens = generate_batch(state.gen, corpus.start_tokens, 200, cfg.seq_length, np.random.default_rng(seed)).tokens
    return base, final, motif_fidelity(tokens)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=6)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--g-steps", type=int, default=None)
    args = parser.parse_args()
    overrides = {} if args.g_steps is None else {"g_steps": args.g_steps}

    for seed in range(args.seeds):
        start = time.perf_counter()
        base, final, fidelity = run(seed, args.epochs, **overrides)
        print(
            f"seed {seed}: reward {base:.4f} -> {final:.4f} ({final / base - 1:+.0%}), "
            f"fidelity {fidelity:.3f}, {time.perf_counter() - start:.1f} s"
        )


if __name__ == "__main__":
    main()
