import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from copula_forge.ac import AcModel
from copula_forge.data_io import (
    load_csv,
    load_model,
    rank_normalize,
    save_csv,
    save_model,
    synth_flat,
    synth_hac,
)
from copula_forge.errors import (
    ContractError,
    IngestionError,
    ModelFormatError,
)
from copula_forge.families import ParametricGenerator
from copula_forge.hac import HacModel, Subordinator
from copula_forge.laplace import EmpiricalGenerator
from copula_forge.mlp import GeneratorNet
from copula_forge.stats import kendall_tau, pairwise_kendall


def test_rank_normalize_hand_example():
    out = rank_normalize(np.array([[3.2], [1.1], [7.7]]))
    assert_allclose(out[:, 0], [0.5, 0.25, 0.75])


def test_rank_normalize_sorted_column():
    out = rank_normalize(np.arange(9.0)[:, None])
    assert_allclose(out[:, 0], np.arange(1, 10) / 10.0)


def test_rank_normalize_ties_broken_by_row_order():
    out = rank_normalize(np.array([[5.0], [5.0]]))
    assert_allclose(out[:, 0], [1.0 / 3.0, 2.0 / 3.0])


def test_rank_normalize_columns_independent():
    raw = np.array([[1.0, 9.0], [2.0, 3.0], [3.0, 6.0]])
    out = rank_normalize(raw)
    assert_allclose(out[:, 0], [0.25, 0.5, 0.75])
    assert_allclose(out[:, 1], [0.75, 0.25, 0.5])


@given(
    st.lists(
        st.floats(-1e6, 1e6).filter(lambda v: abs(v) > 1e-9),
        min_size=3,
        max_size=40,
        unique=True,
    )
)
@settings(max_examples=50, deadline=None)
def test_rank_normalize_monotone_invariance(xs):
    col = np.asarray(xs)[:, None]
    assert_allclose(
        rank_normalize(col), rank_normalize(np.exp(col / 1e6) * 3.0 + 1.0)
    )


def test_rank_normalize_reports_bad_cell():
    raw = np.ones((4, 3))
    raw[2, 1] = np.nan
    with pytest.raises(IngestionError, match="row 2, column 1"):
        rank_normalize(raw)


def test_rank_normalize_needs_rows():
    with pytest.raises(ContractError):
        rank_normalize(np.ones((1, 2)))


def test_synth_flat_tau_oracle():
    u = synth_flat("clayton", 5.0, 2, 8000, seed=0)
    assert kendall_tau(u[:, 0], u[:, 1]) == pytest.approx(5.0 / 7.0, abs=0.02)


def test_synth_flat_same_seed_identical():
    a = synth_flat("frank", 15.0, 3, 100, seed=1)
    b = synth_flat("frank", 15.0, 3, 100, seed=1)
    assert np.array_equal(a, b)


def test_synth_hac_tau_structure():
    """Within-block taus match theta/(theta+2); cross-block tau is weaker."""
    u = synth_hac(
        ("clayton", 1.0), [("clayton", 3.0, 2), ("clayton", 8.0, 2)],
        4000, seed=2,
    )
    k = pairwise_kendall(u)
    assert k[0, 1] == pytest.approx(3.0 / 5.0, abs=0.03)
    assert k[2, 3] == pytest.approx(8.0 / 10.0, abs=0.03)
    cross = [k[0, 2], k[0, 3], k[1, 2], k[1, 3]]
    assert_allclose(cross, 1.0 / 3.0, atol=0.04)


def test_synth_hac_singleton_child():
    u = synth_hac(("clayton", 2.0), [("clayton", 5.0, 2), ("clayton", 5.0, 1)],
                  3000, seed=3)
    assert u.shape == (3000, 3)
    # the singleton still couples to the others through the outer frailty
    assert kendall_tau(u[:, 0], u[:, 2]) == pytest.approx(0.5, abs=0.05)


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "u.csv"
    data = np.random.default_rng(4).uniform(size=(20, 3))
    save_csv(path, data, header=["a", "b", "c"])
    header, back = load_csv(path)
    assert header == ["a", "b", "c"]
    assert_allclose(back, data)


def test_csv_ragged_row_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1.0,2.0\n3.0\n")
    with pytest.raises(IngestionError, match="row 1"):
        load_csv(path)


def test_csv_non_numeric_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1.0,oops\n")
    with pytest.raises(IngestionError):
        load_csv(path)


def test_csv_nan_cell_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1.0,nan\n")
    with pytest.raises(IngestionError, match="'b'"):
        load_csv(path)


def test_csv_empty_rejected(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(IngestionError):
        load_csv(path)


def test_save_load_flat_model_roundtrip(tmp_path):
    path = tmp_path / "model.json"
    rng = np.random.default_rng(5)
    model = AcModel(EmpiricalGenerator(rng.gamma(0.5, 1.0, 80)), 3)
    save_model(path, model, l_eval=80)
    back, l_eval = load_model(path)
    assert l_eval == 80
    assert back.dim == 3
    assert_allclose(back.gen.m, model.gen.m)
    u = rng.uniform(0.05, 0.95, (30, 3))
    assert_allclose(back.log_density(u), model.log_density(u))


def test_save_load_keeps_network(tmp_path):
    path = tmp_path / "model.json"
    net = GeneratorNet.init(seed=6)
    eg = EmpiricalGenerator(net.sample_batch(50, np.random.default_rng(0)).m)
    eg.source_net = net
    save_model(path, AcModel(eg, 2))
    back, _ = load_model(path)
    for a, b in zip(back.gen.source_net.params(), net.params()):
        assert_allclose(a, b)


def test_save_load_hac_roundtrip(tmp_path):
    path = tmp_path / "hac.json"
    rng = np.random.default_rng(7)
    model = HacModel(
        ParametricGenerator("clayton", 1.5),
        [
            Subordinator(-0.1, 0.4, EmpiricalGenerator(rng.gamma(1, 1, 30))),
            Subordinator(0.2, 1.0, EmpiricalGenerator(rng.gamma(1, 1, 30))),
        ],
        [2, 2],
    )
    save_model(path, model)
    back, _ = load_model(path)
    assert back.dims == [2, 2]
    assert back.outer.theta == 1.5
    u = rng.uniform(0.05, 0.95, (20, 4))
    assert_allclose(back.cdf(u), model.cdf(u))


def test_load_truncated_file(tmp_path):
    path = tmp_path / "model.json"
    save_model(path, AcModel(EmpiricalGenerator([1.0, 2.0]), 2))
    path.write_text(path.read_text()[: -40])
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_load_wrong_format(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"hello": "world"}))
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_load_unknown_version(tmp_path):
    path = tmp_path / "model.json"
    save_model(path, AcModel(EmpiricalGenerator([1.0, 2.0]), 2))
    doc = json.loads(path.read_text())
    doc["version"] = 999
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="version"):
        load_model(path)
