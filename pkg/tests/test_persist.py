import numpy as np
import pytest

from convgp.errors import DataError
from convgp.gradients import DTCVAR, EXACT, PITC
from convgp.instances import random_instance
from convgp.kernels import PER_POINT
from convgp.optimize import OptimizerConfig
from convgp.persist import dumps, load_model, loads, save_model
from convgp.pipeline import ICM, INDEPENDENT, fit_model, model_objective, predict

CASES = [
    (DTCVAR, dict(latents=("white", "se")), False),
    (DTCVAR, dict(latents=("white", "se"), vik_mode=PER_POINT), False),
    (DTCVAR, dict(latents=("white", "se"), smoothing="causal"), True),
    (PITC, dict(latents=("se",)), False),
    (EXACT, dict(latents=("white", "se")), False),
    (ICM, dict(latents=("se",)), False),
    (INDEPENDENT, dict(latents=("se",)), False),
]


@pytest.mark.parametrize("engine,kw,slfm", CASES, ids=lambda c: str(c))
def test_save_load_preserves_objective(tmp_path, engine, kw, slfm):
    rng = np.random.default_rng(11)
    data, _ = random_instance(rng, D=2, p=1, slfm=slfm, sizes=(8, 12))
    model = fit_model(data, engine, num_inducing=4, cfg=OptimizerConfig(max_iters=15), **kw)
    path = tmp_path / "m.txt"
    save_model(path, model)
    back = load_model(path)
    np.testing.assert_allclose(model_objective(back), model_objective(model), rtol=1e-12,
                               atol=1e-12)
    assert dumps(back) == path.read_text()
    Xs = [np.linspace(0.3, 1.5, 3)[:, None]] * 2
    a, b = predict(model, Xs), predict(back, Xs)
    for u, v in zip(a[0] + a[1], b[0] + b[1]):
        np.testing.assert_allclose(v, u, rtol=1e-12, atol=1e-12)


def test_rejects_foreign_files(tmp_path):
    with pytest.raises(DataError):
        loads("hello\n")
    with pytest.raises(DataError):
        loads("# convgp model\nschema_version = 99\n")
    with pytest.raises(DataError):
        loads("# convgp model\nschema_version = 1\nengine = {oops\n")
    with pytest.raises(DataError):
        load_model(tmp_path / "absent.txt")
