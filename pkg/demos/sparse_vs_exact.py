"""Fit exact and variational sparse models to data drawn from a known prior.

Usage: python demos/sparse_vs_exact.py [seed]
"""

import sys
import time

import numpy as np

from convgp import data as dio
from convgp.exact import NoiseModel
from convgp.instances import random_kernel_spec
from convgp.optimize import OptimizerConfig
from convgp.pipeline import fit_model, predict


def main(seed=0):
    rng = np.random.default_rng(seed)
    # four outputs driven by one white-noise and one smooth latent
    kspec = random_kernel_spec(rng, 4, 1, ("white", "se"))
    table = dio.synth_table(kspec, NoiseModel(np.full(4, 0.1)), [150] * 4, rng)
    train, test = dio.train_test_split(table, 0.2, rng)
    data = dio.table_to_dataset(train)
    X = [test.inputs()[test.output_id == d] for d in range(4)]
    y = np.concatenate([test.target[test.output_id == d] for d in range(4)])
    ids = np.repeat(np.arange(4), [len(x) for x in X])
    cfg = OptimizerConfig(max_iters=100)
    for engine, K in [("exact", None), ("dtcvar", 10), ("dtcvar", 30), ("dtcvar", 60)]:
        t = time.perf_counter()
        model = fit_model(data, engine, num_inducing=K, cfg=cfg, seed=seed)
        mean, _ = predict(model, X)
        rep = dio.metrics(np.concatenate(mean), y, ids)
        label = engine if K is None else f"{engine} K={K}"
        print(f"{label:12s} objective {model.objective:9.2f}  test SMSE {rep.smse:.4f}  "
              f"({time.perf_counter() - t:.1f} s)")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
