import io
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from convgp.data import (
    RawTable,
    aggregate_replicates,
    encode_categorical,
    metrics,
    read_csv,
    smse,
    standardize,
    synth_table,
    table_to_csv,
    table_to_dataset,
    table_to_text,
    train_test_split,
)
from convgp.errors import DataError, EmptyTestSet, UnknownCategory, ZeroVariance
from convgp.exact import Dataset, NoiseModel
from convgp.instances import random_kernel_spec


def school_like(rng, n=400, D=3):
    """Students with the four categorical school features."""
    cols = {
        "year": rng.choice(["1985", "1986", "1987"], n),
        "gender": rng.choice(["F", "M"], n),
        "vr": rng.choice(["vr1", "vr2", "vr3", "vr4"], n),
        "ethnic": rng.choice([f"e{k:02d}" for k in range(11)], n),
    }
    return RawTable(rng.integers(0, D, n), cols, rng.normal(size=n))


def test_year_encodes_to_three_indicators():
    t = RawTable([0, 0, 1], {"year": np.array(["1986", "1985", "1987"])}, [1.0, 2.0, 3.0])
    enc, levels = encode_categorical(t)
    assert levels == {"year": ["1985", "1986", "1987"]}
    assert enc.input_names == ["year=1985", "year=1986", "year=1987"]
    X = enc.inputs()
    np.testing.assert_array_equal(X, [[0, 1, 0], [1, 0, 0], [0, 0, 1]])
    np.testing.assert_array_equal(X.sum(axis=1), 1.0)


def test_school_features_give_twenty_dims(rng):
    enc, levels = encode_categorical(school_like(rng))
    assert enc.inputs().shape[1] == 20
    assert [len(levels[c]) for c in ("year", "gender", "vr", "ethnic")] == [3, 2, 4, 11]
    data = aggregate_replicates(enc)
    for d in range(data.D):
        X = data.X(d)
        assert len(np.unique(X, axis=0)) == len(X)
        assert len(X) <= 3 * 2 * 4 * 11
    assert data.num_obs < len(enc)
    assert np.sum(data.w) == len(enc)


def test_single_level_column_warns():
    t = RawTable([0, 1], {"g": np.array(["a", "a"])}, [1.0, 2.0])
    with pytest.warns(UserWarning, match="single level"):
        enc, _ = encode_categorical(t)
    np.testing.assert_array_equal(enc.inputs(), [[1.0], [1.0]])


def test_unknown_category_handling():
    train = RawTable([0, 0], {"c": np.array(["x", "y"])}, [1.0, 2.0])
    _, levels = encode_categorical(train)
    test = RawTable([0], {"c": np.array(["z"])})
    with pytest.raises(UnknownCategory):
        encode_categorical(test, levels=levels)
    enc, _ = encode_categorical(test, levels=levels, unknown="zeros")
    np.testing.assert_array_equal(enc.inputs(), [[0.0, 0.0]])


def test_categorical_columns_block_numeric_inputs():
    t = RawTable([0], {"c": np.array(["x"])}, [1.0])
    with pytest.raises(DataError):
        t.inputs()


def test_replicates_average_with_count_weight():
    t = RawTable([0, 0, 0, 1, 1], {"x": [0.5, 0.5, 0.5, 0.5, 1.0]}, [1.0, 2.0, 3.0, 4.0, 5.0])
    data = aggregate_replicates(t)
    np.testing.assert_array_equal(data.targets[0], [2.0])
    np.testing.assert_array_equal(data.weights[0], [3.0])
    np.testing.assert_array_equal(data.targets[1], [4.0, 5.0])
    np.testing.assert_array_equal(data.weights[1], [1.0, 1.0])


def test_no_replicates_is_identity(rng):
    t = RawTable([0, 1, 1, 0], {"x": rng.normal(size=4), "z": rng.normal(size=4)},
                 rng.normal(size=4))
    a, b = aggregate_replicates(t), table_to_dataset(t)
    for d in range(2):
        np.testing.assert_array_equal(a.X(d), b.X(d))
        np.testing.assert_array_equal(a.targets[d], b.targets[d])
        np.testing.assert_array_equal(a.weights[d], 1.0)


def test_groups_must_share_inputs():
    t = RawTable([0, 0], {"x": [1.0, 2.0]}, [1.0, 2.0], group=["s", "s"])
    with pytest.raises(DataError):
        aggregate_replicates(t)
    t = RawTable([0, 0, 0], {"x": [1.0, 1.0, 2.0]}, [1.0, 3.0, 5.0], group=["s", "s", "u"])
    np.testing.assert_array_equal(aggregate_replicates(t).targets[0], [2.0, 5.0])


@pytest.mark.parametrize("seed", range(5))
def test_standardize_round_trip(seed):
    rng = np.random.default_rng(seed)
    data = Dataset.from_outputs([rng.normal(size=(6, 1))] * 2,
                                [rng.normal(3, 2, 6), rng.normal(-1, 0.1, 6)])
    z, tr = standardize(data)
    for y in z.targets:
        np.testing.assert_allclose([y.mean(), y.std()], [0.0, 1.0], atol=1e-12)
    back = tr.invert(z)
    for a, b in zip(back.targets, data.targets):
        np.testing.assert_allclose(a, b, rtol=1e-12)
    # a second pass is the identity
    _, tr2 = standardize(z)
    np.testing.assert_allclose(tr2.mean, 0.0, atol=1e-12)
    np.testing.assert_allclose(tr2.scale, 1.0, rtol=1e-12)


def test_constant_output_rejected():
    data = Dataset.from_outputs([np.zeros((3, 1))] * 2, [np.ones(3), [1.0, 2.0, 3.0]])
    with pytest.raises(ZeroVariance):
        standardize(data)


def test_perfect_predictions():
    y = np.array([1.0, 2.0, 4.0, 0.5])
    rep = metrics(y, y, [0, 0, 1, 1])
    assert (rep.ev_pct, rep.mae, rep.smse) == (100.0, 0.0, 0.0)


def test_mean_baseline_gives_unit_smse(rng):
    y = rng.normal(size=50)
    np.testing.assert_allclose(smse(np.full(50, y.mean()), y), 1.0, rtol=1e-12)


def test_metrics_by_hand():
    mu = np.array([1.0, 2.0, 3.0, 0.0, 0.0])
    y = np.array([1.5, 2.0, 2.0, 1.0, -1.0])
    ids = [0, 0, 0, 1, 1]
    rep = metrics(mu, y, ids)
    # output 0: errors -0.5, 0, 1; var of (1.5, 2, 2) is 1/18
    sse0, tot0 = 1.25, 3 * (1 / 18)
    sse1, tot1 = 2.0, 2 * 1.0
    assert rep.per_output[0]["n"] == 3
    np.testing.assert_allclose(rep.per_output[0]["smse"], sse0 / tot0, rtol=1e-14)
    np.testing.assert_allclose(rep.per_output[1]["mae"], 1.0, rtol=1e-14)
    np.testing.assert_allclose(rep.smse, (sse0 + sse1) / (tot0 + tot1), rtol=1e-14)
    np.testing.assert_allclose(rep.ev_pct, 100 * (1 - rep.smse), rtol=1e-14)
    np.testing.assert_allclose(rep.mae, 3.5 / 5, rtol=1e-14)
    ref = metrics(mu, y, ids, ref_var=[2.0, 4.0])
    np.testing.assert_allclose(ref.smse, (sse0 + sse1) / (6.0 + 8.0), rtol=1e-14)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=20))
def test_metrics_are_non_negative(y):
    y = np.array(y)
    mu = y[::-1].copy()
    rep = metrics(mu, y)
    assert rep.mae >= 0 and rep.smse >= 0


def test_empty_test_set():
    with pytest.raises(EmptyTestSet):
        metrics([], [])


def test_csv_round_trip(rng):
    t = RawTable([0, 1, 1], {"x_0": rng.normal(size=3), "kind": np.array(["a", "b", "a"])},
                 rng.normal(size=3), [1.0, 2.0, 1.0], ["g1", "g2", "g3"])
    text = table_to_text(t)
    back = read_csv(io.StringIO(text))
    np.testing.assert_array_equal(back.output_id, t.output_id)
    np.testing.assert_array_equal(back.columns["x_0"], t.columns["x_0"])
    np.testing.assert_array_equal(back.columns["kind"], t.columns["kind"])
    np.testing.assert_array_equal(back.target, t.target)
    np.testing.assert_array_equal(back.weight, t.weight)
    np.testing.assert_array_equal(back.group, t.group)
    assert table_to_text(back) == text


def test_csv_schema_errors(tmp_path):
    with pytest.raises(DataError):
        read_csv(io.StringIO("x_0,y\n1,2\n"))
    with pytest.raises(DataError):
        read_csv(io.StringIO("output_id,x_0\n0,1\n"))
    with pytest.raises(DataError):
        read_csv(io.StringIO("output_id,x_0,y\n0,1\n"))
    with pytest.raises(DataError):
        read_csv(io.StringIO("output_id,x_0,y\n0,1,nan\n"))
    with pytest.raises(DataError):
        read_csv(tmp_path / "missing.csv")
    # numeric-looking columns can be declared categorical
    t = read_csv(io.StringIO("output_id,year,y\n0,1985,1\n0,1986,2\n"), categorical=["year"])
    assert t.categorical() == ["year"]


def test_synth_is_deterministic():
    rng = np.random.default_rng(0)
    ks = random_kernel_spec(rng, 2, 1)
    noise = NoiseModel([0.1, 0.2])
    a = table_to_text(synth_table(ks, noise, [15, 10], np.random.default_rng(7)))
    b = table_to_text(synth_table(ks, noise, [15, 10], np.random.default_rng(7)))
    assert a == b
    c = table_to_text(synth_table(ks, noise, [15, 10], np.random.default_rng(8)))
    assert a != c


def test_split_is_per_output(rng):
    t = RawTable(np.repeat([0, 1], 10), {"x": rng.normal(size=20)}, rng.normal(size=20))
    train, test = train_test_split(t, 0.3, np.random.default_rng(1))
    assert len(train) == 14 and len(test) == 6
    assert np.sum(test.output_id == 0) == 3 == np.sum(test.output_id == 1)


def test_table_to_dataset_needs_every_output():
    t = RawTable([0, 2], {"x": [0.0, 1.0]}, [1.0, 2.0])
    with pytest.raises(DataError):
        table_to_dataset(t)


def test_writes_file(tmp_path, rng):
    t = RawTable([0, 0], {"x": [0.25, 0.5]}, [1.0, 2.0])
    path = tmp_path / "t.csv"
    table_to_csv(t, path)
    assert path.read_text() == "output_id,x,y\n0,0.25,1.0\n0,0.5,2.0\n"
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert len(read_csv(path)) == 2
