import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nnopls.dataset import (
    CovarianceSet,
    RawDataset,
    center,
    covariances,
    encode_targets,
    read_labels,
    read_matrix,
    write_labels,
    write_matrix,
)
from nnopls.exceptions import (
    DimensionMismatchError,
    InputError,
    InsufficientSamplesError,
    InvalidLabelError,
)


def test_encode_targets_indicator_columns():
    y = encode_targets([0, 2, 1], 3)
    assert np.array_equal(y, [[1, 0, 0], [0, 0, 1], [0, 1, 0]])


def test_encode_targets_single_class():
    assert np.array_equal(encode_targets([0, 0], 1), np.ones((1, 2)))


def test_encode_targets_out_of_range_names_index():
    with pytest.raises(InvalidLabelError) as ei:
        encode_targets([0, 3], 3)
    assert ei.value.index == 1
    assert "index 1" in str(ei.value)


def test_center_two_points():
    c = center(RawDataset([[1.0, 3.0], [2.0, 4.0]], [[0.0, 1.0]]))
    assert np.array_equal(c.mu_x, [2.0, 3.0])
    assert np.array_equal(c.x, [[-1.0, 1.0], [-1.0, 1.0]])


def test_center_constant_data():
    c = center(RawDataset(np.full((3, 5), 2.5), np.zeros((1, 5))))
    assert not np.any(c.x)
    assert np.all(c.mu_x == 2.5)


def test_center_is_idempotent():
    rng = np.random.default_rng(0)
    c = center(RawDataset(rng.random((4, 9)), rng.standard_normal((2, 9))))
    again = center(RawDataset(c.x - c.x.min(), c.y))
    assert np.allclose(again.x, c.x, atol=1e-14)


def test_center_needs_two_samples():
    with pytest.raises(InsufficientSamplesError):
        RawDataset(np.ones((2, 1)), np.ones((1, 1)))


def test_raw_dataset_rejects_negative_inputs():
    with pytest.raises(InputError, match="non-negative"):
        RawDataset([[1.0, -1.0]], [[0.0, 1.0]])


def test_raw_dataset_column_mismatch():
    with pytest.raises(DimensionMismatchError):
        RawDataset(np.ones((2, 3)), np.ones((1, 4)))


def test_raw_dataset_is_read_only():
    d = RawDataset(np.ones((2, 3)), np.ones((1, 3)))
    with pytest.raises(ValueError):
        d.inputs[0, 0] = 5.0


def test_covariances_one_dimensional():
    c = center(RawDataset([[0.0, 2.0]], [[0.0, 2.0]]))
    cov = covariances(c)
    assert cov.cxx.tolist() == [[2.0]]
    assert cov.cxy.tolist() == [[2.0]]
    assert cov.cyy.tolist() == [[2.0]]


def test_covariances_of_zero_data():
    c = center(RawDataset(np.ones((3, 4)), np.ones((2, 4))))
    cov = covariances(c)
    assert not np.any(cov.cxx) and not np.any(cov.cxy) and not np.any(cov.cyy)


def test_cxx_is_positive_semidefinite():
    rng = np.random.default_rng(3)
    c = center(RawDataset(rng.random((4, 20)), rng.standard_normal((2, 20))))
    lam = np.linalg.eigvalsh(covariances(c).cxx)
    assert lam.min() >= -1e-12


def test_covariance_set_rejects_asymmetry():
    with pytest.raises(InputError):
        CovarianceSet(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros((2, 1)), np.eye(1))


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (5, 12), elements=st.floats(0, 10)),
    arrays(np.float64, (5, 3), elements=st.floats(0, 1)),
)
def test_feature_offset_identity(x, u):
    # U^T raw - U^T centered is the same vector for every sample
    c = center(RawDataset(x, np.zeros((1, 12))))
    diff = u.T @ x - u.T @ c.x
    assert np.allclose(diff, diff[:, :1], atol=1e-10 * max(1.0, np.abs(x).max()))


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (4, 10), elements=st.floats(0, 5)),
    arrays(np.float64, (4,), elements=st.floats(0, 100)),
)
def test_cxx_invariant_to_constant_shift(x, shift):
    y = np.zeros((1, 10))
    a = covariances(center(RawDataset(x, y))).cxx
    b = covariances(center(RawDataset(x + shift[:, None], y))).cxx
    assert np.allclose(a, b, rtol=1e-8, atol=1e-8 * max(1.0, np.abs(a).max()))


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (3, 7), elements=st.floats(-1e6, 1e6)))
def test_centered_rows_sum_to_zero(y):
    x = np.abs(y)
    c = center(RawDataset(x, y))
    scale = 1e-9 * 7 * max(1.0, np.abs(x).max(), np.abs(y).max())
    assert np.all(np.abs(c.x.sum(axis=1)) <= scale)
    assert np.all(np.abs(c.y.sum(axis=1)) <= scale)


def test_matrix_round_trip_is_bit_exact(tmp_path):
    a = np.random.default_rng(1).standard_normal((3, 4)) * 1e-7
    p = tmp_path / "m.csv"
    write_matrix(p, a, role="inputs", sidecar=True)
    assert np.array_equal(read_matrix(p), a)
    assert json.loads((tmp_path / "m.csv.json").read_text())["role"] == "inputs"


def test_read_matrix_reports_ragged_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(InputError, match=":2:"):
        read_matrix(p)


def test_read_matrix_checks_sidecar(tmp_path):
    p = tmp_path / "m.csv"
    write_matrix(p, np.ones((2, 2)), sidecar=True)
    (tmp_path / "m.csv.json").write_text('{"rows": 3, "cols": 2}')
    with pytest.raises(InputError, match="descriptor"):
        read_matrix(p)


def test_labels_round_trip(tmp_path):
    p = tmp_path / "l.txt"
    write_labels(p, [0, 2, 1, 1])
    assert read_labels(p).tolist() == [0, 2, 1, 1]


def test_subset_keeps_metadata():
    d = RawDataset.from_labels(np.ones((2, 4)), [0, 1, 1, 0], groups=[5, 5, 6, 6])
    s = d.subset([1, 2])
    assert s.class_labels.tolist() == [1, 1]
    assert s.groups.tolist() == [5, 6]
