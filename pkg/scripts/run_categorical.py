"""Stratified k-fold F1 of the selected pair on a categorical dataset preset."""

import argparse
import logging
import time

import numpy as np

from lpspu.config import UCI_PRESETS, uci_preset
from lpspu.experiments import cross_validate, load_task
from lpspu.runtime import tune_allocator


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("dataset", choices=sorted(UCI_PRESETS))
    ap.add_argument("--fraction", type=float, default=0.3, help="labeled share of the positives")
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--path", help="CSV path (default data/uci/<dataset>.csv)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    tune_allocator()
    cfg = uci_preset(args.dataset, args.fraction, args.path)
    cfg.run.seed = args.seed
    ds, _ = load_task(cfg)
    print(f"{args.dataset}: {len(ds)} rows, {int(ds.truth.sum())} positive, {ds.n_labeled} labeled")
    t0 = time.time()
    res = cross_validate(cfg, ds, args.folds)
    f1 = [r.score for r in res]
    print("fold F1:", " ".join(f"{v:.3f}" for v in f1))
    print(f"mean F1 {np.mean(f1):.3f} +/- {np.std(f1):.3f}, mean estimate {np.mean([r.estimate for r in res]):.3f}, "
          f"{time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
