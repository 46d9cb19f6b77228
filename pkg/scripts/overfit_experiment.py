"""Train the default model for N epochs on a synthetic world and report loss ratio and test metrics.

Compares the dense-hotspot world against the default generator settings
with ``--world default``.
"""

import argparse
import logging

from cvit.experiments import run_world
from cvit.model import ModelConfig
from cvit.synth import SynthConfig, dense_hotspot_world
from cvit.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--world", choices=["dense", "default"], default="dense")
    ap.add_argument("--world-seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--model-seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--weeks", type=int, default=8)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    print("world_seed,loss_ratio,test_rmse,test_recall,test_map,rush_recall,rush_map,seconds")
    for seed in args.world_seeds:
        world = dense_hotspot_world(seed, args.weeks) if args.world == "dense" else SynthConfig(weeks=args.weeks, seed=seed)
        r = run_world(world, ModelConfig(), TrainConfig(epochs=args.epochs, seed=args.model_seed))
        print(f"{seed},{r.loss_ratio:.4f},{r.test_all.rmse:.4f},{r.test_all.recall:.4f},{r.test_all.map:.4f},"
              f"{r.test_rush.recall:.4f},{r.test_rush.map:.4f},{r.seconds:.0f}")


if __name__ == "__main__":
    main()
