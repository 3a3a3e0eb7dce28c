import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phononsim import readout
from phononsim.readout import ConfusionError, ConfusionMatrix, IllConditionedError


@pytest.mark.parametrize("text,val,unc", [("0.090(3)", 0.090, 0.003), ("0.00002(6)", 2e-5, 6e-5),
                                          ("0.10(3)", 0.10, 0.03), ("0.5", 0.5, 0.0)])
def test_parse_uncertain(text, val, unc):
    v, u = readout.parse_uncertain(text)
    assert v == pytest.approx(val) and u == pytest.approx(unc)


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        readout.parse_uncertain("abc")


def test_columns_are_prepared_states():
    c = readout.two_qubit_matrix()
    assert np.allclose(c.entries.sum(axis=0), 1, atol=1e-3)
    assert c.dims == (2, 2)


def test_tensor_of_qutrits_is_stochastic():
    c = readout.two_qutrit_matrix()
    assert c.dim == 9 and c.dims == (3, 3)
    assert c.violations() == []


def test_bad_matrices_are_named():
    c = ConfusionMatrix(np.array([[0.9, 0.2], [0.2, 0.8]]))
    assert any("column 0" in v for v in c.violations())
    with pytest.raises(ConfusionError):
        c.validate()
    with pytest.raises(ConfusionError):
        ConfusionMatrix(np.ones((2, 3)))


def test_ill_conditioned_inversion():
    c = ConfusionMatrix(np.array([[0.5, 0.5], [0.5, 0.5]]) + np.array([[1e-9, 0], [0, -1e-9]]))
    with pytest.raises(IllConditionedError):
        readout.correct(c, [0.5, 0.5])


def test_clip_projects_onto_simplex():
    c = readout.two_qubit_matrix()
    raw = readout.correct(c, [1.0, 0.0, 0.0, 0.0])
    assert raw.min() < 0
    clipped = readout.correct(c, [1.0, 0.0, 0.0, 0.0], clip=True)
    assert clipped.min() >= 0 and clipped.sum() == pytest.approx(1.0)


@settings(max_examples=30)
@given(p=st.floats(0, 0.05), a=st.floats(0, 1), b=st.floats(0, 1))
def test_floor_calibration_inverts_injection(p, a, b):
    P = np.zeros((3, 3))
    P[0, 0], P[1, 0], P[0, 1] = a * b, a * (1 - b), (1 - a)
    P /= P.sum()
    lifted = readout.inject_thermal_floor(P, p)
    assert lifted.sum() == pytest.approx(1.0)
    if lifted[1, 1] > 1e-12:
        assert readout.floor_p_th(P, lifted[1, 1]) == pytest.approx(p, abs=1e-9)


def test_vector_table_round_trip():
    P = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(readout.vector_to_table(readout.table_to_vector(P)), P)
    v2 = readout.table_to_vector(P, 2)
    assert v2.tolist() == [0, 1, 3, 4]


def test_visibilities():
    assert readout.v_hom([0.5, 0.0, 0.5]) == 1.0
    assert readout.v_mz([1.0, 0.0]) == 1.0
    assert readout.floor_limited_visibility(0.64, 0.0) == 1.0
    assert readout.n_mean(0.3, 0.2) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        readout.Metrics(v_hom=1.5)


def test_json_loading(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"entries": [["0.9(1)", "0.1(1)"], [0.2, 0.8]], "dims": [2]}')
    c = readout.load_json(path)
    assert c.entries[1, 0] == pytest.approx(0.1)
    assert c.sigma[0, 0] == pytest.approx(0.1)
