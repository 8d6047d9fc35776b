import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ddrp import io as dio
from ddrp import learn
from ddrp.errors import ParseError, SchemaError
from ddrp.fmm import TrialStats
from ddrp.preprocess import PhiReport


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_dense_basic(tmp_path):
    m = dio.read_dense_csv(write(tmp_path, "a.csv", "1,2\n3,4"))
    np.testing.assert_array_equal(m, [[1, 2], [3, 4]])
    m = dio.read_dense_csv(write(tmp_path, "b.csv", "a,b\n1,2\n"), has_header=True)
    np.testing.assert_array_equal(m, [[1, 2]])


def test_dense_label_column(tmp_path):
    ds = dio.read_dense_csv(write(tmp_path, "a.csv", "1,2,-1\n3,4,1\n"), label_column=-1)
    np.testing.assert_array_equal(ds.features, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(ds.labels, [-1, 1])
    ds = dio.read_dense_csv(write(tmp_path, "b.csv", "9,1,2\n"), label_column=0)
    assert ds.labels[0] == 9


@pytest.mark.parametrize("text,line", [("1,2\n3\n", 2), ("1,2\n3,x\n", 2),
                                       ("1,2\n\n4,nan\n", 3)])
def test_dense_errors(tmp_path, text, line):
    p = write(tmp_path, "bad.csv", text)
    with pytest.raises(ParseError) as exc:
        dio.read_dense_csv(p)
    assert exc.value.line == line
    assert f":{line}:" in str(exc.value)


def test_dense_round_trip_100(tmp_path):
    rng = np.random.default_rng(0)
    p = tmp_path / "m.csv"
    for i in range(100):
        m = rng.standard_normal((int(rng.integers(1, 8)), int(rng.integers(1, 6))))
        m *= 10.0 ** rng.integers(-300, 300)
        dio.write_dense_csv(p, m)
        back = dio.read_dense_csv(p)
        assert back.tobytes() == m.tobytes()
        text = p.read_text()
        dio.write_dense_csv(p, back)
        assert p.read_text() == text


def test_libsvm_basic(tmp_path):
    ds = dio.read_libsvm(write(tmp_path, "a.svm", "+1 1:0.5 3:2\n-1\n"))
    assert ds.labels.tolist() == [1.0, -1.0]
    np.testing.assert_array_equal(ds.features.toarray(), [[0.5, 0, 2], [0, 0, 0]])
    ds = dio.read_libsvm(write(tmp_path, "b.svm", "1 2:1\n"), n_features=5)
    assert ds.features.shape == (1, 5)


@pytest.mark.parametrize("text,line", [
    ("1 1:1\n1 3:1 2:1\n", 2), ("1 1:1 1:2\n", 1), ("1 0:1\n", 1), ("1 a:1\n", 1),
    ("1 1\n", 1), ("x 1:1\n", 1), ("1 1:1\n\n1 9:1\n", 3)])
def test_libsvm_errors(tmp_path, text, line):
    with pytest.raises(ParseError) as exc:
        dio.read_libsvm(write(tmp_path, "bad.svm", text), n_features=4)
    assert exc.value.line == line


def test_libsvm_round_trip_100(tmp_path):
    rng = np.random.default_rng(1)
    p = tmp_path / "d.svm"
    for i in range(100):
        n, d = int(rng.integers(1, 10)), int(rng.integers(1, 12))
        x = sp.random(n, d, density=0.3, random_state=i, format="csr")
        x.data = rng.standard_normal(x.data.size)
        y = rng.choice([-1.0, 1.0, 0.25], size=n)
        dio.write_libsvm(p, learn.LabeledDataset(x, y))
        back = dio.read_libsvm(p, n_features=d)
        a = sp.csr_matrix(x)
        a.sort_indices()
        np.testing.assert_array_equal(back.features.indptr, a.indptr)
        np.testing.assert_array_equal(back.features.indices, a.indices)
        assert back.features.data.tobytes() == a.data.tobytes()
        assert back.labels.tobytes() == y.tobytes()


def stats_list(rng, n):
    return [TrialStats("quick", int(k), 100, *rng.standard_normal(3) ** 2)
            for k in rng.integers(1, 100, n)]


def test_results_empty_round_trip(tmp_path):
    doc = dio.ResultsDocument("fmm-bench", {}, [])
    p = tmp_path / "r.json"
    dio.write_results(doc, p)
    back = dio.read_results(p)
    assert back == doc
    assert dio.dumps_results(back) == p.read_text()


def test_trial_stats_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    stats = stats_list(rng, 20)
    doc = dio.ResultsDocument("fmm-bench", {"seed": 0, "ks": [1, 2], "x": None}, stats)
    text = dio.write_results(doc)
    back = dio.loads_results(text)
    assert dio.typed_results(back) == stats
    assert dio.dumps_results(back) == text


def test_mixed_results_round_trip():
    cells = [learn.SweepCell(-0.25, 10, 50, 0.5, 0.1, "mse"),
             PhiReport(10.0, 9.0, 9.000000000000004, 9.0), {"type": "other", "ok": True}]
    text = dio.write_results(dio.ResultsDocument("x", {"a": 0.1}, cells))
    back = dio.loads_results(text)
    assert dio.typed_results(back) == cells
    assert dio.dumps_results(back) == text


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), max_size=8),
       st.dictionaries(st.text(max_size=5), st.one_of(st.integers(-2**63, 2**63),
                                                       st.floats(allow_nan=False,
                                                                 allow_infinity=False),
                                                       st.text(max_size=5), st.none()),
                       max_size=5))
def test_serialize_parse_serialize_identity(reals, config):
    doc = dio.ResultsDocument("cmd", config, [{"type": "v", "values": reals}])
    text = dio.dumps_results(doc)
    assert dio.dumps_results(dio.loads_results(text)) == text


def test_schema_mismatch(tmp_path):
    p = write(tmp_path, "r.json", '{"schema_version": "2", "command": "", "config": {}, '
                                  '"results": []}')
    with pytest.raises(SchemaError, match="schema_version"):
        dio.read_results(p)
    with pytest.raises(SchemaError):
        dio.loads_results('{"schema_version": "1"}')
    with pytest.raises(ParseError):
        dio.loads_results("{not json")
    with pytest.raises(SchemaError):
        dio.dumps_results(dio.ResultsDocument("c", {"x": float("nan")}))


def test_csv_emitters():
    doc = dio.ResultsDocument("c", {}, [TrialStats("oblivious", 5, 100, 2.0, 1.0, 0.1)])
    lines = dio.results_csv(doc).splitlines()
    assert lines[0] == "method,k,trials,mean,std"
    assert lines[1].split(",")[:3] == ["oblivious", "5", "100"]
    cells = [learn.SweepCell(lam, k, 3, 1.0, 0.5, "mse") for k in (10, 20) for lam in (-0.5, 0.0)]
    flat = dio.results_csv(dio.ResultsDocument("c", {}, cells)).splitlines()
    assert flat[0] == "lambda,k,trials,mean,std" and len(flat) == 5
    table = dio.sweep_table_csv(cells).splitlines()
    assert table[0] == "k,-0.5,0"
    assert table[1].startswith("10,1 +- 0.5")


def test_read_dataset_dispatch(tmp_path):
    p = write(tmp_path, "a.libsvm", "1 1:1\n")
    assert sp.issparse(dio.read_dataset(p).features)
    p = write(tmp_path, "a.csv", "1,2,3\n")
    assert dio.read_dataset(p).labels.tolist() == [3.0]
