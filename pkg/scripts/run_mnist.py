"""One-vs-one MNIST at desk scale: 1000 train and 500 test images per class."""

import argparse
import logging
import time

from lpspu.config import mnist_preset
from lpspu.experiments import evaluate, load_task, train_and_select
from lpspu.runtime import tune_allocator


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", nargs="+", default=["0,1", "3,8"])
    ap.add_argument("--labeled", type=int, default=100)
    ap.add_argument("--path", default="data/mnist")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    tune_allocator()
    for pair in args.pairs:
        cfg = mnist_preset(pair, args.labeled)
        cfg.data.path = args.path
        cfg.run.seed = args.seed
        if args.epochs:
            cfg.train.epochs = args.epochs
        t0 = time.time()
        train, test = load_task(cfg)
        res = train_and_select(cfg, train)
        acc, per = evaluate(res.models, res.selection.members, test, "accuracy")
        print(f"{pair}: accuracy {acc:.4f} members {[round(a, 4) for a in per]} "
              f"estimate {res.selection.estimate:.4f} {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
