"""Full training run on the default simulator log.

Simulates the corpus first if it is missing, then runs MLE pretraining,
discriminator pretraining and the adversarial epochs. Checkpoints and
history.csv land in the config's out_dir.
"""

import argparse
from pathlib import Path

from elevgan import logcodec, sim
from elevgan.trainer import load_train_config, train


def main() -> None:
    here = Path(__file__).resolve().parent
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(here / "configs" / "train.cfg"))
    parser.add_argument("--epochs", type=int, default=None, help="override adversarial epochs")
    parser.add_argument("--mle-epochs", type=int, default=None)
    args = parser.parse_args()

    cfg = load_train_config(args.config, epochs=args.epochs, mle_epochs=args.mle_epochs)
    corpus = Path(cfg.corpus)
    if not corpus.exists():
        corpus.parent.mkdir(parents=True, exist_ok=True)
        corpus.write_text(logcodec.format_log(sim.run(sim.BuildingConfig(), 1_000_000)), newline="\n")
        print(f"simulated {corpus}")
    history = train(cfg, log=print)
    last = history.rows[-1]
    print(f"done: {len(history)} history rows, final parse rate {last.parse_rate:.3f}")


if __name__ == "__main__":
    main()
