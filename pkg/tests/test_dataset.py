import numpy as np
import pytest

from rfzi.dataset import (BINARY, CONTINUOUS, ColumnMeta, CountDataset, DataError, Dataset,
                          derive_log, derive_moi, load_csv, log_transform, moi_from_indicators,
                          read_schema, write_csv, write_schema)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_small_csv(tmp_path):
    csv = write(tmp_path, "d.csv", "a,b,y\n1.5,0,2\n2.5,1,3\n-1,1,4\n")
    ds = load_csv(csv, {"a": "continuous", "b": "binary", "y": "continuous"}, response="y")
    assert ds.n_rows == 3 and ds.names == ["a", "b"]
    assert [c.kind for c in ds.columns] == [CONTINUOUS, BINARY]
    assert ds.response.tolist() == [2.0, 3.0, 4.0]


def test_foreign_binary_value(tmp_path):
    csv = write(tmp_path, "d.csv", "b\n0\n2\n")
    with pytest.raises(DataError, match="foreign value in binary column"):
        load_csv(csv, {"b": "binary"})


def test_missing_cells_rejected_or_dropped(tmp_path):
    csv = write(tmp_path, "d.csv", "a,b\n1,0\nNA,1\n3,\n4,1\n")
    schema = {"a": "continuous", "b": "binary"}
    with pytest.raises(DataError, match="missing"):
        load_csv(csv, schema)
    ds = load_csv(csv, schema, drop_incomplete_rows=True)
    assert ds.column("a").tolist() == [1.0, 4.0]


def test_undeclared_and_nonnumeric(tmp_path):
    csv = write(tmp_path, "d.csv", "a,zz\n1,2\n")
    with pytest.raises(DataError, match="declared"):
        load_csv(csv, {"a": "continuous"})
    csv = write(tmp_path, "e.csv", "a\nfoo\n")
    with pytest.raises(DataError, match="non-numeric"):
        load_csv(csv, {"a": "continuous"})


def test_categorical_onehot_with_multiple_levels(tmp_path):
    csv = write(tmp_path, "d.csv", "locus,g\n180;183,p1\n183,p2\n177,p3\n")
    ds = load_csv(csv, {"locus": "categorical", "g": "group"})
    assert ds.names == ["locus_177", "locus_180", "locus_183"]
    assert ds.values.tolist() == [[0, 1, 1], [0, 0, 1], [1, 0, 0]]
    assert all(c.source == "onehot" and c.parent == "locus" for c in ds.columns)
    assert ds.groups().tolist() == ["p1", "p2", "p3"]


def test_schema_roundtrip(tmp_path):
    p = write(tmp_path, "s.schema", "# comment\na:continuous\n\nb : binary\n")
    assert read_schema(p) == {"a": "continuous", "b": "binary"}
    with pytest.raises(DataError):
        read_schema(write(tmp_path, "bad.schema", "a:weird\n"))


def test_full_sized_roundtrip(tmp_path):
    # a stand-in for an isolate table: 110 rows, 88 covariates of mixed kinds
    gen = np.random.default_rng(0)
    cols = [ColumnMeta(f"v{j}", BINARY if j % 2 else CONTINUOUS) for j in range(88)]
    vals = gen.standard_normal((110, 88))
    vals[:, 1::2] = gen.integers(0, 2, (110, 44))
    ds = Dataset(cols, vals, gen.standard_normal(110), "y", np.array([f"p{i // 2}" for i in range(110)]))
    write_csv(ds, tmp_path / "t.csv")
    write_schema(ds, tmp_path / "t.schema")
    back = load_csv(tmp_path / "t.csv", tmp_path / "t.schema", response="y")
    assert (back.n_rows, back.n_cols) == (110, 88)
    assert np.array_equal(back.values, ds.values)
    assert np.array_equal(back.response, ds.response)
    assert np.array_equal(back.groups(), ds.groups())


def test_dataset_is_immutable():
    ds = Dataset([ColumnMeta("a")], np.zeros((2, 1)))
    with pytest.raises(ValueError):
        ds.values[0, 0] = 1.0


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset([ColumnMeta("a")], np.array([[np.nan]]))
    with pytest.raises(DataError):
        Dataset([ColumnMeta("a"), ColumnMeta("a")], np.zeros((1, 2)))
    with pytest.raises(KeyError):
        Dataset([ColumnMeta("a")], np.zeros((1, 1))).index("b")


def test_with_response_and_select():
    ds = Dataset([ColumnMeta("a"), ColumnMeta("b"), ColumnMeta("c")], np.arange(6.0).reshape(2, 3))
    r = ds.with_response("b")
    assert r.names == ["a", "c"] and r.response.tolist() == [1.0, 4.0]
    assert ds.select(["c", "a"]).values.tolist() == [[2.0, 0.0], [5.0, 3.0]]


def test_moi_examples():
    loci = ["Pfg377", "Pfg377", "Pfg377", "PfPK2", "PfPK2"]
    assert moi_from_indicators([[1, 1, 0, 1, 0]], loci).tolist() == [2.0]
    assert moi_from_indicators([[0, 1, 0, 0, 1]], loci).tolist() == [1.0]


def test_moi_matches_rowwise_recount():
    gen = np.random.default_rng(1)
    loci = [f"L{k}" for k in range(7) for _ in range(gen.integers(2, 6))]
    ind = gen.integers(0, 2, (50, len(loci)))
    expected = []
    for row in ind:
        per = {}
        for v, l in zip(row, loci):
            per[l] = per.get(l, 0) + v
        expected.append(max(per.values()))
    assert moi_from_indicators(ind, loci).tolist() == expected


def test_derive_moi_from_onehot(tmp_path):
    csv = write(tmp_path, "d.csv", "A,B\n1;2;3,7\n1,7;8\n")
    ds = derive_moi(load_csv(csv, {"A": "categorical", "B": "categorical"}))
    assert ds.column("MOI").tolist() == [3.0, 2.0]
    assert ds.columns[-1].source == "derived"


def test_log_transform():
    assert log_transform([np.e ** 2])[0] == pytest.approx(2.0)
    assert log_transform([0.0], offset=1.0)[0] == 0.0
    with pytest.raises(DataError):
        log_transform([0.0])
    ds = Dataset([ColumnMeta("g")], np.array([[1.0], [np.e - 1]]))
    assert derive_log(ds, "g", offset=1.0).column("log_g") == pytest.approx([np.log(2), 1.0])


def test_count_dataset_from_groups():
    ds = Dataset([ColumnMeta("x"), ColumnMeta("z")],
                 np.array([[1.0, 5.0], [1.0, 5.0], [2.0, 6.0]]),
                 np.array([0.0, 3.0, 1.0]), "y", np.array(["b", "b", "a"]))
    cd = CountDataset.from_dataset(ds, ["x"], ["z"])
    assert cd.n_groups == 2 and cd.group_labels == ["a", "b"]
    assert cd.group_x.ravel().tolist() == [2.0, 1.0]
    assert cd.X.tolist() == [[1, 1], [1, 1], [1, 2]]
    assert cd.group_sizes().tolist() == [1, 2]


def test_count_dataset_rejects_varying_group_covariate_and_bad_counts():
    ds = Dataset([ColumnMeta("x")], np.array([[1.0], [2.0]]), np.array([0.0, 1.0]), "y",
                 np.array(["g", "g"]))
    with pytest.raises(DataError, match="vary within a group"):
        CountDataset.from_dataset(ds, ["x"], [])
    with pytest.raises(DataError):
        CountDataset([0], [1.5], np.zeros((1, 0)), np.zeros((1, 0)))
