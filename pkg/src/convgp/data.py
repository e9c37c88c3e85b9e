"""Tables, preprocessing recipes, metrics and synthetic data.

A :class:`RawTable` mirrors the training CSV: one row per observation with
an output id, input columns (numeric or categorical), a target and
optional replicate weight and group key.
"""

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, EmptyTestSet, UnknownCategory, ZeroVariance
from .exact import Dataset, NoiseModel

OUTPUT = "output_id"
TARGET = "y"
WEIGHT = "weight"
GROUP = "group"


def _is_numeric(values):
    try:
        np.asarray(values, dtype=float)
    except ValueError:
        return False
    return True


@dataclass(eq=False)
class RawTable:
    """Column-oriented observation table.

    ``columns`` maps input column names to arrays, float for numeric
    columns and ``str`` for categorical ones.  ``target`` may be ``None``
    for prediction inputs.
    """

    output_id: np.ndarray
    columns: dict
    target: np.ndarray = None
    weight: np.ndarray = None
    group: np.ndarray = None

    def __post_init__(self):
        self.output_id = np.asarray(self.output_id, dtype=int).reshape(-1)
        n = len(self.output_id)
        cols = {}
        for name, v in self.columns.items():
            v = np.asarray(v)
            if v.dtype.kind not in "US":
                v = v.astype(float)
            if v.shape != (n,):
                raise DataError(f"column {name!r} has {v.size} values, expected {n}")
            cols[name] = v
        self.columns = cols
        if self.target is not None:
            self.target = np.asarray(self.target, dtype=float).reshape(-1)
            if len(self.target) != n:
                raise DataError("target column has the wrong length")
            if not np.all(np.isfinite(self.target)):
                raise DataError("missing or non-finite target")
        if self.weight is not None:
            self.weight = np.asarray(self.weight, dtype=float).reshape(-1)
            if len(self.weight) != n or np.any(~(self.weight > 0)):
                raise DataError("weights must be positive, one per row")
        if self.group is not None:
            self.group = np.asarray(self.group, dtype=str).reshape(-1)
            if len(self.group) != n:
                raise DataError("group column has the wrong length")
        if n and self.output_id.min() < 0:
            raise DataError("output ids must be non-negative")

    def __len__(self):
        return len(self.output_id)

    @property
    def input_names(self):
        return list(self.columns)

    def categorical(self):
        return [c for c, v in self.columns.items() if v.dtype.kind in "US"]

    def inputs(self):
        """Numeric input matrix; fails while categorical columns remain."""
        cat = self.categorical()
        if cat:
            raise DataError(f"encode categorical columns first: {cat}")
        if not self.columns:
            raise DataError("no input columns")
        return np.column_stack([self.columns[c] for c in self.columns])

    def select(self, mask):
        mask = np.asarray(mask)
        pick = (lambda a: None if a is None else a[mask])
        return RawTable(self.output_id[mask], {c: v[mask] for c, v in self.columns.items()},
                        pick(self.target), pick(self.weight), pick(self.group))


# ---------------------------------------------------------------------------
# CSV


def read_csv(path_or_buffer, require_target=True, categorical=()):
    """Read the training/prediction CSV schema.

    Required columns are ``output_id`` and at least one input column;
    ``y``, ``weight`` and ``group`` are recognised by name.  Every other
    column is an input, numeric when all its values parse as floats and
    it is not listed in ``categorical``.
    """
    if hasattr(path_or_buffer, "read"):
        rows = list(csv.reader(path_or_buffer))
    else:
        try:
            with open(path_or_buffer, newline="") as fh:
                rows = list(csv.reader(fh))
        except OSError as e:
            raise DataError(f"cannot read {path_or_buffer}: {e}") from e
    if not rows:
        raise DataError("empty CSV")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if any(len(r) != len(header) for r in body):
        raise DataError("rows have inconsistent column counts")
    if OUTPUT not in header:
        raise DataError(f"missing {OUTPUT!r} column")
    if len(set(header)) != len(header):
        raise DataError("duplicate column names")
    raw = {h: [r[i].strip() for r in body] for i, h in enumerate(header)}
    try:
        out_id = np.array([int(v) for v in raw[OUTPUT]], dtype=int)
    except ValueError as e:
        raise DataError("output_id must be an integer") from e
    special = {OUTPUT, TARGET, WEIGHT, GROUP}
    missing = set(categorical) - set(header)
    if missing:
        raise DataError(f"no columns named {sorted(missing)}")
    cols = {}
    for h in header:
        if h in special:
            continue
        v = raw[h]
        if any(s == "" for s in v):
            raise DataError(f"missing value in input column {h!r}")
        numeric = h not in categorical and _is_numeric(v)
        cols[h] = np.array(v, dtype=float) if numeric else np.array(v, dtype=str)

    def floats(name):
        try:
            return np.array([float(v) for v in raw[name]])
        except ValueError as e:
            raise DataError(f"column {name!r} must be numeric") from e

    target = floats(TARGET) if TARGET in raw else None
    if require_target and target is None:
        raise DataError("missing target column 'y'")
    weight = floats(WEIGHT) if WEIGHT in raw else None
    group = np.array(raw[GROUP], dtype=str) if GROUP in raw else None
    return RawTable(out_id, cols, target, weight, group)


def _fmt(v):
    return repr(float(v))


def write_csv(path_or_buffer, header, rows):
    """Write rows with shortest round-trip float formatting."""
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, (str, int, np.integer)) else _fmt(v) for v in r])

    if hasattr(path_or_buffer, "write"):
        emit(path_or_buffer)
    else:
        with open(path_or_buffer, "w", newline="") as fh:
            emit(fh)


def table_to_csv(table, path_or_buffer):
    header = [OUTPUT] + table.input_names
    cols = [table.columns[c] for c in table.input_names]
    extra = []
    if table.target is not None:
        header.append(TARGET)
        extra.append(table.target)
    if table.weight is not None:
        header.append(WEIGHT)
        extra.append(table.weight)
    if table.group is not None:
        header.append(GROUP)
        extra.append(table.group)
    rows = ([int(table.output_id[i])] + [c[i] for c in cols] + [e[i] for e in extra]
            for i in range(len(table)))
    write_csv(path_or_buffer, header, rows)


# ---------------------------------------------------------------------------
# Preprocessing


def encode_categorical(table, columns=None, levels=None, unknown="error"):
    """One-hot encode categorical input columns.

    Parameters
    ----------
    table : RawTable
    columns : list of str, optional
        Columns to encode; defaults to every non-numeric column.
    levels : dict, optional
        Known levels per column (from training).  When omitted they are
        learned from ``table`` in lexicographic order.
    unknown : {"error", "zeros"}
        Treatment of a value absent from ``levels``.

    Returns
    -------
    table : RawTable
        Encoded columns named ``"{column}={level}"`` in place of the originals.
    levels : dict

    Raises
    ------
    UnknownCategory
        For an unseen value when ``unknown="error"``.
    """
    if unknown not in ("error", "zeros"):
        raise ValueError("unknown must be 'error' or 'zeros'")
    columns = table.categorical() if columns is None else list(columns)
    learned = levels is None
    levels = {} if learned else dict(levels)
    new = {}
    for name, v in table.columns.items():
        if name not in columns:
            new[name] = v
            continue
        sv = np.asarray(v).astype(str) if np.asarray(v).dtype.kind in "US" else \
            np.array([_fmt(x) for x in v])
        if learned:
            levels[name] = sorted(set(sv.tolist()))
            if len(levels[name]) == 1:
                warnings.warn(f"column {name!r} has a single level; it encodes to a constant",
                              stacklevel=2)
        if name not in levels:
            raise UnknownCategory(f"no levels recorded for column {name!r}")
        known = set(levels[name])
        bad = sorted(set(sv.tolist()) - known)
        if bad and unknown == "error":
            raise UnknownCategory(f"column {name!r}: unseen values {bad}")
        for lev in levels[name]:
            new[f"{name}={lev}"] = (sv == lev).astype(float)
    for c in columns:
        if c not in table.columns:
            raise DataError(f"no column named {c!r}")
    out = RawTable(table.output_id, new, table.target, table.weight, table.group)
    return out, levels


def table_to_dataset(table, num_outputs=None):
    """One pool row per observation; outputs listed by id ``0..D-1``."""
    if table.target is None:
        raise DataError("table has no targets")
    X = table.inputs()
    D = num_outputs or int(table.output_id.max()) + 1
    idx = [np.flatnonzero(table.output_id == d) for d in range(D)]
    if any(len(i) == 0 for i in idx):
        raise DataError("every output id from 0 to D-1 needs observations")
    w = table.weight if table.weight is not None else np.ones(len(table))
    return Dataset(X, idx, [table.target[i] for i in idx], [w[i] for i in idx])


def aggregate_replicates(table, num_outputs=None):
    """Average replicated observations into one weighted observation.

    Rows are grouped by output and ``group`` key when present, otherwise by
    output and identical input vector.  Each group becomes one observation
    with the mean target and a weight equal to the replicate count, so the
    noise variance of the mean is ``sigma2 / count``.
    """
    if table.target is None:
        raise DataError("table has no targets")
    X = table.inputs()
    if table.group is not None:
        keys = [(int(o), g) for o, g in zip(table.output_id, table.group)]
    else:
        keys = [(int(o),) + tuple(x) for o, x in zip(table.output_id, X)]
    order = {}
    for i, k in enumerate(keys):
        order.setdefault(k, []).append(i)
    out_id, rows, y, w = [], [], [], []
    for k, members in order.items():
        xm = X[members]
        if np.any(xm != xm[0]):
            raise DataError(f"group {k[1]!r} has differing inputs")
        out_id.append(k[0])
        rows.append(xm[0])
        y.append(table.target[members].mean())
        w.append(float(len(members)))
    names = table.input_names
    agg = RawTable(np.array(out_id), {c: np.array(rows)[:, j] for j, c in enumerate(names)},
                   np.array(y), np.array(w))
    return table_to_dataset(agg, num_outputs)


@dataclass
class Standardizer:
    """Per-output affine transform ``(y - mean) / scale``."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)

    @classmethod
    def identity(cls, D):
        return cls(np.zeros(D), np.ones(D))

    def forward(self, y, d):
        return (np.asarray(y) - self.mean[d]) / self.scale[d]

    def inverse(self, y, d):
        return np.asarray(y) * self.scale[d] + self.mean[d]

    def inverse_var(self, var, d):
        return np.asarray(var) * self.scale[d] ** 2

    def apply(self, data):
        y = [self.forward(t, d) for d, t in enumerate(data.targets)]
        return Dataset(data.inputs, data.indices, y, data.weights)

    def invert(self, data):
        y = [self.inverse(t, d) for d, t in enumerate(data.targets)]
        return Dataset(data.inputs, data.indices, y, data.weights)


def standardize(data):
    """Give every output zero mean and unit variance.

    Returns
    -------
    data : Dataset
    transform : Standardizer

    Raises
    ------
    ZeroVariance
        If an output is constant or has fewer than two observations.
    """
    mean, scale = [], []
    for d, y in enumerate(data.targets):
        if len(y) < 2:
            raise ZeroVariance(f"output {d} has fewer than two observations")
        m = y.mean()
        s = np.sqrt(np.mean((y - m) ** 2))
        if not s > 1e-300 or s <= 1e-12 * max(abs(m), 1.0):
            raise ZeroVariance(f"output {d} is constant")
        mean.append(m)
        scale.append(s)
    tr = Standardizer(mean, scale)
    return tr.apply(data), tr


# ---------------------------------------------------------------------------
# Metrics


@dataclass
class MetricReport:
    """Explained variance (%), mean absolute error and standardised MSE.

    ``overall`` pools the squared and absolute errors of all outputs;
    explained variance and SMSE normalise by each output's own test
    variance before pooling.
    """

    ev_pct: float
    mae: float
    smse: float
    per_output: list = field(default_factory=list)

    def as_dict(self):
        return {"overall": {"ev_pct": self.ev_pct, "mae": self.mae, "smse": self.smse},
                "per_output": self.per_output}


def _scores(mu, y, ref_var):
    err = mu - y
    sse = float(err @ err)
    var = float(np.var(y)) if ref_var is None else float(ref_var)
    tot = var * len(y)
    return sse, tot, float(np.abs(err).sum())


def metrics(mean, targets, output_ids=None, ref_var=None):
    """Compare predictive means with held-out targets.

    Parameters
    ----------
    mean, targets : array_like
    output_ids : array_like of int, optional
        Output of every test point (all zero when omitted).
    ref_var : sequence of float, optional
        Per-output reference variance; defaults to the test-target variance.

    Raises
    ------
    EmptyTestSet
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if targets.size == 0:
        raise EmptyTestSet("no test points")
    if mean.shape != targets.shape:
        raise DataError("predictions and targets differ in length")
    ids = np.zeros(len(targets), dtype=int) if output_ids is None else np.asarray(output_ids)
    per, SSE, TOT, AE = [], 0.0, 0.0, 0.0
    for d in np.unique(ids):
        m = ids == d
        rv = None if ref_var is None else ref_var[int(d)]
        sse, tot, ae = _scores(mean[m], targets[m], rv)
        n = int(m.sum())
        smse = sse / tot if tot > 0 else (0.0 if sse == 0 else np.inf)
        per.append({"output_id": int(d), "n": n, "ev_pct": 100.0 * (1.0 - smse),
                    "mae": ae / n, "smse": smse})
        SSE, TOT, AE = SSE + sse, TOT + tot, AE + ae
    smse = SSE / TOT if TOT > 0 else (0.0 if SSE == 0 else np.inf)
    return MetricReport(100.0 * (1.0 - smse), AE / len(targets), smse, per)


def smse(mean, targets):
    """Mean squared error divided by the variance of the targets."""
    return metrics(mean, targets).smse


# ---------------------------------------------------------------------------
# Synthetic data


def synth_table(kspec, noise, sizes, rng, low=-1.0, high=1.0, input_names=None):
    """Draw noisy outputs of a convolution-process prior at uniform inputs.

    Inputs are uniform on ``[low, high]^p`` (``[low, high]`` times for
    latent force models).  The returned table is ordered by output.
    """
    from .instances import sample_prior

    p = kspec.input_dim
    X = [np.sort(rng.uniform(low, high, size=(n, p)), axis=0) if p == 1
         else rng.uniform(low, high, size=(n, p)) for n in sizes]
    y = sample_prior(rng, kspec, noise, X)
    names = input_names or [f"x_{j}" for j in range(p)]
    allX = np.vstack(X)
    ids = np.concatenate([np.full(n, d) for d, n in enumerate(sizes)])
    return RawTable(ids, {c: allX[:, j] for j, c in enumerate(names)}, np.concatenate(y))


def train_test_split(table, test_fraction, rng):
    """Random per-output hold-out split; returns ``(train, test)``."""
    test = np.zeros(len(table), dtype=bool)
    for d in np.unique(table.output_id):
        rows = np.flatnonzero(table.output_id == d)
        k = int(round(test_fraction * len(rows)))
        if k:
            test[rng.choice(rows, size=k, replace=False)] = True
    return table.select(~test), table.select(test)


def table_to_text(table):
    buf = io.StringIO()
    table_to_csv(table, buf)
    return buf.getvalue()


__all__ = [
    "RawTable", "read_csv", "write_csv", "table_to_csv", "table_to_text", "encode_categorical",
    "table_to_dataset", "aggregate_replicates", "Standardizer", "standardize", "MetricReport",
    "metrics", "smse", "synth_table", "train_test_split", "NoiseModel",
]
