"""Simulate the default building and print the realism metrics of its log."""

import argparse
import time
from pathlib import Path

from elevgan import logcodec, sim


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="building config file (default building if omitted)")
    parser.add_argument("--t-max", type=float, default=None)
    parser.add_argument("--out", default="runs/default.log")
    args = parser.parse_args()

    if args.config:
        config, t_max = sim.load_sim_config(args.config)
    else:
        config, t_max = sim.BuildingConfig(), 1_000_000
    if args.t_max is not None:
        t_max = int(args.t_max)

    start = time.perf_counter()
    events = sim.run(config, t_max)
    text = logcodec.format_log(events)
    elapsed = time.perf_counter() - start

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8", newline="\n")
    print(f"{out}: {len(events)} lines over {t_max} ticks in {elapsed:.1f} s")
    print(logcodec.realism_features(text).to_kv(), end="")


if __name__ == "__main__":
    main()
