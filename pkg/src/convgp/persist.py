"""Human-readable model files.

A model file is a header line followed by ``key = <json>`` lines::

    # convgp model
    schema_version = 1
    engine = "dtcvar"
    part.0.kspec = {...}

Floats are written with ``repr`` precision, so loading reproduces every
parameter bit for bit.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .data import Standardizer
from .errors import DataError
from .exact import Dataset, NoiseModel
from .gradients import ModelParams
from .kernels import (
    CAUSAL,
    DIRAC,
    GAUSSIAN,
    SHARED,
    KernelMatrixSpec,
    LatentSpec,
    SmoothingKernel,
    VIKConfig,
    VIKEntry,
)

SCHEMA_VERSION = 1
HEADER = "# convgp model"


def schema_hash(input_names, levels, num_outputs):
    """Fingerprint of the data layout a model was trained on."""
    blob = json.dumps({"inputs": list(input_names), "levels": levels, "D": int(num_outputs)},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class FittedModel:
    """Everything needed to predict: one or more parameter sets plus transforms.

    ``parts`` pairs a list of output ids with the :class:`ModelParams`
    that model them jointly; the independent baseline has one part per
    output, every other engine a single part.  ``train`` holds the
    (standardised) training data, which every engine needs to predict.
    """

    engine: str
    parts: list
    input_names: list
    standardizer: Standardizer
    levels: dict = field(default_factory=dict)
    unknown_category: str = "error"
    metrics_standardized: bool = False
    objective: float = None
    data_schema: str = None
    train: Dataset = None

    def __post_init__(self):
        if self.data_schema is None:
            self.data_schema = schema_hash(self.input_names, self.levels, self.num_outputs)

    @property
    def num_outputs(self):
        return sum(len(outs) for outs, _ in self.parts)


def _arr(a):
    return None if a is None else np.asarray(a, dtype=float).tolist()


def params_to_dict(params):
    ks = params.kspec
    out = {
        "latents": [{"kind": l.kind, "lengthscale": _arr(l.lengthscale)} for l in ks.latents],
        "smoothing": [[{"form": g.form, "sensitivity": g.sensitivity, "widths": _arr(g.widths),
                        "decay": g.decay} for g in row] for row in ks.smoothing],
        "initial_conditions": _arr(ks.initial_conditions),
        "noise": _arr(params.noise.sigma2),
        "vik": None,
        "Z": _arr(params.Z),
    }
    if params.vik is not None:
        v = params.vik
        ent = (lambda e: {"sensitivity": e.sensitivity, "widths": _arr(e.widths)})
        entries = ([ent(e) for e in v.params] if v.mode == SHARED
                   else [[ent(e) for e in row] for row in v.params])
        out["vik"] = {"mode": v.mode, "Z": _arr(v.inducing_inputs), "params": entries}
    return out


def params_from_dict(d):
    lat = [LatentSpec.white() if l["kind"] == "white" else LatentSpec.squared_exp(l["lengthscale"])
           for l in d["latents"]]

    def kern(g):
        if g["form"] == GAUSSIAN:
            return SmoothingKernel.gaussian(g["sensitivity"], g["widths"])
        if g["form"] == DIRAC:
            return SmoothingKernel.dirac(g["sensitivity"])
        if g["form"] == CAUSAL:
            return SmoothingKernel.causal(g["sensitivity"], g["decay"])
        raise DataError(f"unknown smoothing form {g['form']!r}")

    rows = [[kern(g) for g in row] for row in d["smoothing"]]
    ic = d.get("initial_conditions")
    kspec = KernelMatrixSpec(lat, rows, None if ic is None else np.array(ic))
    vik = None
    if d.get("vik") is not None:
        v = d["vik"]
        ent = (lambda e: VIKEntry(e["sensitivity"], e["widths"]))
        entries = ([ent(e) for e in v["params"]] if v["mode"] == SHARED
                   else [[ent(e) for e in row] for row in v["params"]])
        vik = VIKConfig(np.array(v["Z"]), entries, v["mode"])
    Z = None if d.get("Z") is None else np.array(d["Z"])
    return ModelParams(kspec, NoiseModel(np.array(d["noise"])), vik, Z)


def dumps(model):
    lines = [HEADER, f"schema_version = {SCHEMA_VERSION}"]

    def put(key, value):
        lines.append(f"{key} = {json.dumps(value)}")

    put("engine", model.engine)
    put("data_schema", model.data_schema)
    put("input_names", list(model.input_names))
    put("levels", model.levels)
    put("unknown_category", model.unknown_category)
    put("metrics_standardized", bool(model.metrics_standardized))
    put("objective", None if model.objective is None else float(model.objective))
    put("standardizer.mean", _arr(model.standardizer.mean))
    put("standardizer.scale", _arr(model.standardizer.scale))
    if model.train is not None:
        t = model.train
        put("train.inputs", _arr(t.inputs))
        put("train.indices", [i.tolist() for i in t.indices])
        put("train.targets", [_arr(y) for y in t.targets])
        put("train.weights", [_arr(w) for w in t.weights])
    put("parts", len(model.parts))
    for i, (outs, params) in enumerate(model.parts):
        put(f"part.{i}.outputs", [int(o) for o in outs])
        for k, v in params_to_dict(params).items():
            put(f"part.{i}.{k}", v)
    return "\n".join(lines) + "\n"


def loads(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise DataError("not a convgp model file")
    kv = {}
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise DataError(f"line {n}: expected 'key = value'")
        try:
            kv[key.strip()] = json.loads(value)
        except json.JSONDecodeError as e:
            raise DataError(f"line {n}: bad value for {key.strip()!r}") from e
    if kv.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported model schema {kv.get('schema_version')!r}")
    parts = []
    train = None
    if "train.inputs" in kv:
        train = Dataset(np.array(kv["train.inputs"]), kv["train.indices"], kv["train.targets"],
                        kv["train.weights"])
    try:
        for i in range(kv["parts"]):
            prefix = f"part.{i}."
            d = {k[len(prefix):]: v for k, v in kv.items() if k.startswith(prefix)}
            parts.append((d.pop("outputs"), params_from_dict(d)))
        return FittedModel(
            engine=kv["engine"], parts=parts, input_names=kv["input_names"],
            standardizer=Standardizer(kv["standardizer.mean"], kv["standardizer.scale"]),
            levels=kv["levels"], unknown_category=kv["unknown_category"],
            metrics_standardized=kv["metrics_standardized"], objective=kv["objective"],
            data_schema=kv["data_schema"], train=train)
    except KeyError as e:
        raise DataError(f"model file lacks {e.args[0]!r}") from e


def save_model(path, model):
    with open(path, "w") as fh:
        fh.write(dumps(model))


def load_model(path):
    try:
        with open(path) as fh:
            return loads(fh.read())
    except OSError as e:
        raise DataError(f"cannot read model {path}: {e}") from e
