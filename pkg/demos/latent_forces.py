"""Choose the number of white-noise forces of a latent force model by the bound.

Data come from a model with one smooth and two white forces; candidate
models with 0-3 white forces are fitted and ranked by their optimised
variational bound.

Usage: python demos/latent_forces.py [seed]
"""

import sys

import numpy as np

from convgp import data as dio
from convgp.exact import NoiseModel
from convgp.instances import random_slfm_spec
from convgp.optimize import OptimizerConfig
from convgp.pipeline import fit_model


def main(seed=0):
    rng = np.random.default_rng(seed)
    truth = random_slfm_spec(rng, 3, ("se", "white", "white"))
    table = dio.synth_table(truth, NoiseModel(np.full(3, 0.05)), [80] * 3, rng, 0.0, 10.0)
    data = dio.table_to_dataset(table)
    cfg = OptimizerConfig(max_iters=150)
    for n_white in range(4):
        latents = ("se",) + ("white",) * n_white
        model = fit_model(data, "dtcvar", latents=latents, smoothing="causal",
                          num_inducing=15, cfg=cfg, seed=seed)
        print(f"Q_s=1 Q_o={n_white}: bound {model.objective:9.2f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
