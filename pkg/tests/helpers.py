"""Shared instance generators for the gradient tests and the acceptance run."""

import numpy as np

from convgp.gradients import DTCVAR, PITC, ParamLayout, fd_check, make_objective
from convgp.instances import random_instance
from convgp.kernels import PER_POINT, SHARED

# the two objectives with the latents each one supports
OBJECTIVES = [(DTCVAR, ("white", "se")), (PITC, ("se", "se"))]


def gradient_case(engine, latents, slfm, i):
    """Instance ``i`` of the finite-difference suite."""
    rng = np.random.default_rng(i)
    data, params = random_instance(rng, D=int(rng.integers(1, 3)), latents=latents, slfm=slfm,
                                   sizes=(3, 6), noise=(0.1, 0.5), weights=None,
                                   mode=PER_POINT if i % 4 == 3 else SHARED)
    layout = ParamLayout(params, engine)
    f = make_objective(engine, data, layout)
    return fd_check(f, layout.pack(), labels=layout.labels), layout
