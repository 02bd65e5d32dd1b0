"""Does the agreement estimate rank hyperparameter tuples like test F1 does?

Runs the tuning grid on one dataset and prints the Spearman correlation
between estimated accuracy and fold-averaged test F1 across tuples.
"""

import argparse
import logging
import time

from lpspu.config import UCI_PRESETS, parse_grid, uci_preset
from lpspu.experiments import load_task
from lpspu.runtime import tune_allocator
from lpspu.selection import spearman, tune


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dataset", choices=sorted(UCI_PRESETS))
    ap.add_argument("--grid", required=True, help='tuples as "d:4,bond:2;d:6,bond:4"')
    ap.add_argument("--fraction", type=float, default=0.3)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--models", type=int, default=3, help="models per (tuple, fold) cell")
    ap.add_argument("--store", help="JSONL file for resumable cells")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    tune_allocator()
    cfg = uci_preset(args.dataset, args.fraction)
    ds, _ = load_task(cfg)
    grid = parse_grid(args.grid)
    t0 = time.time()
    res = tune(ds, grid, cfg.train_config(), args.folds, args.models, cfg.run.seed, cfg.model.repeat,
               store=args.store)
    for t, params in enumerate(grid):
        print(params, f"estimate {res.estimates[t]:.3f} F1 {res.test_f1[t]:.3f}")
    ids = sorted(res.estimates)
    rho, p = spearman([res.estimates[t] for t in ids], [res.test_f1[t] for t in ids])
    print(f"spearman {rho:.3f} (p = {p:.4f}); chosen {res.chosen_params}; {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
