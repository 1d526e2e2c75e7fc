import numpy as np
import pytest
from hypothesis import given, strategies as st

from aggrbench.features import (
    ShapeError,
    as_features,
    identity_weights,
    matmul,
    random_features,
    read_features,
    write_binary,
    write_text,
)


def test_identity_weights():
    x = random_features(5, 4, 1)
    assert np.array_equal(matmul(x, identity_weights(4)), x)


def test_hand_product():
    assert matmul(np.array([[1, 2]]), np.array([[1], [1]])).tolist() == [[3.0]]


def test_inner_dimension_checked():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_non_finite_rejected():
    with pytest.raises(ShapeError):
        as_features([[1.0, np.nan]])


def test_random_features_seeded():
    a, b = random_features(20, 3, 5), random_features(20, 3, 5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, random_features(20, 3, 6))
    assert a.dtype == np.float32


def test_random_features_mean():
    x = random_features(1000, 1000, 0)
    assert abs(float(x.astype(np.float64).mean())) < 0.01
    assert x.min() >= -1.0 and x.max() < 1.0


def test_matmul_against_double_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        r, k, c = rng.integers(1, 40, 3)
        x = rng.uniform(0.1, 1.0, (r, k)).astype(np.float32)
        w = rng.uniform(0.1, 1.0, (k, c)).astype(np.float32)
        ref = x.astype(np.float64) @ w.astype(np.float64)
        np.testing.assert_allclose(matmul(x, w), ref, rtol=1e-5, atol=0)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32))
def test_matmul_identity_and_zero(r, c, seed):
    x = random_features(r, c, seed)
    assert np.array_equal(matmul(identity_weights(r), x), x)
    assert not matmul(x, np.zeros((c, 3))).any()


@pytest.mark.parametrize("writer", [write_binary, write_text])
def test_file_round_trip(tmp_path, writer):
    x = random_features(7, 3, 2)
    writer(x, tmp_path / "x")
    assert np.array_equal(read_features(tmp_path / "x"), x)


def test_binary_layout(tmp_path):
    write_binary(np.array([[1.0, 2.0]]), tmp_path / "x.bin")
    raw = (tmp_path / "x.bin").read_bytes()
    assert raw[:16] == (1).to_bytes(8, "little") + (2).to_bytes(8, "little")
    assert np.frombuffer(raw[16:], "<f4").tolist() == [1.0, 2.0]


def test_ragged_text_rejected(tmp_path):
    (tmp_path / "x.txt").write_text("1 2\n3\n")
    with pytest.raises(ShapeError):
        read_features(tmp_path / "x.txt")
