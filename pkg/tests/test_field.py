import numpy as np
import pytest
from scipy import sparse

from ridgecs.field import (
    apply_A,
    apply_A_transpose,
    causal_differences,
    causal_differences_adjoint,
    check_field,
    from_storage,
    inner,
    l1_norm,
    l2_norm,
    read_field,
    read_field_header,
    to_storage,
    tv_field,
    tv_image,
    write_field,
    write_field_csv,
)


def test_apply_A_zero_and_single_voxel():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((5, 9))
    assert np.all(apply_A(A, np.zeros((2, 3, 1, 9))) == 0)
    c = rng.standard_normal((1, 1, 1, 9))
    np.testing.assert_allclose(apply_A(A, c)[0, 0, 0], A @ c[0, 0, 0], rtol=1e-14)


def test_apply_A_dimension_mismatch():
    with pytest.raises(ValueError):
        apply_A(np.ones((4, 6)), np.ones((2, 2, 1, 5)))
    with pytest.raises(ValueError):
        apply_A_transpose(np.ones((4, 6)), np.ones((2, 2, 1, 5)))


def test_apply_A_transpose_trivial():
    assert np.all(apply_A_transpose(np.ones((3, 4)), np.zeros((2, 1, 1, 3))) == 0)
    s = np.random.default_rng(2).standard_normal((2, 2, 1, 4))
    np.testing.assert_array_equal(apply_A_transpose(np.eye(4), s), s)


def test_adjoint_identity():
    rng = np.random.default_rng(3)
    for _ in range(100):
        K, M = rng.integers(1, 12, size=2)
        dims = tuple(rng.integers(1, 4, size=3))
        A = rng.standard_normal((K, M))
        c = rng.standard_normal(dims + (M,))
        s = rng.standard_normal(dims + (K,))
        lhs, rhs = inner(apply_A(A, c), s), inner(c, apply_A_transpose(A, s))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_norms():
    f = np.zeros((2, 2, 1, 3))
    assert l2_norm(f) == 0 and l1_norm(f) == 0
    f[1, 0, 0, 2] = 3.0
    assert l2_norm(f) == 3.0 and l1_norm(f) == 3.0
    g = np.random.default_rng(4).standard_normal((3, 2, 2, 5))
    per_channel = sum(np.sum(g[..., k] ** 2) for k in range(5))
    assert l2_norm(g) ** 2 == pytest.approx(per_channel, rel=1e-13)


def test_tv_image_hand_values():
    assert tv_image(np.full((3, 3, 2), 4.2)) == 0.0
    assert tv_image(np.array([0.0, 1.0]).reshape(2, 1, 1)) == 1.0
    img = np.array([[0.0, 1.0], [0.0, 1.0]]).T.reshape(2, 2, 1)
    assert tv_image(img) == 2.0


def test_tv_image_isotropic_corner():
    img = np.zeros((2, 2, 1))
    img[1, 1, 0] = 1.0
    # voxel (1,1): both backward differences equal 1, so it contributes sqrt(2)
    assert tv_image(img) == pytest.approx(np.sqrt(2), rel=1e-14)


def test_tv_field():
    assert tv_field(np.zeros((3, 3, 1, 4))) == 0.0
    rng = np.random.default_rng(5)
    s = np.zeros((4, 3, 2, 5))
    s[..., 2] = rng.standard_normal((4, 3, 2))
    assert tv_field(s) == pytest.approx(tv_image(s[..., 2]), rel=1e-14)


def test_tv_field_triangle_inequality():
    rng = np.random.default_rng(6)
    for _ in range(20):
        a, b = rng.standard_normal((2, 4, 4, 2, 3))
        assert tv_field(a + b) <= tv_field(a) + tv_field(b) + 1e-12


def test_difference_operator_adjoint():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((4, 3, 2, 5))
    p = rng.standard_normal((4, 3, 2, 5, 3))
    assert inner(causal_differences(x), p) == pytest.approx(
        inner(x, causal_differences_adjoint(p)), rel=1e-12)


def test_check_field():
    with pytest.raises(ValueError):
        check_field(np.zeros((2, 2, 3)))
    bad = np.zeros((1, 1, 1, 2))
    bad[0, 0, 0, 1] = np.nan
    with pytest.raises(ValueError):
        check_field(bad)


def test_sparse_storage_roundtrip():
    c = np.zeros((3, 3, 1, 50))
    c[1, 1, 0, 4] = 2.5
    stored = to_storage(c)
    assert sparse.issparse(stored)
    np.testing.assert_array_equal(from_storage(stored, (3, 3, 1)), c)
    dense = np.ones((2, 2, 1, 3))
    assert to_storage(dense) is not None and not sparse.issparse(to_storage(dense))


def test_field_file_roundtrip(tmp_path):
    f = np.random.default_rng(8).standard_normal((16, 16, 1, 7))
    write_field(tmp_path / "f.fld", f)
    assert read_field_header(tmp_path / "f.fld") == (16, 16, 1, 7)
    np.testing.assert_array_equal(read_field(tmp_path / "f.fld"), f)


def test_field_file_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.fld"):
        read_field(tmp_path / "nope.fld")
    (tmp_path / "junk.fld").write_bytes(b"x" * 40)
    with pytest.raises(ValueError):
        read_field(tmp_path / "junk.fld")


def test_field_csv(tmp_path):
    f = np.arange(2 * 1 * 1 * 3, dtype=float).reshape(2, 1, 1, 3) / 3
    write_field_csv(tmp_path / "f.csv", f)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "ix,iy,iz,c0,c1,c2"
    assert float(lines[2].split(",")[4]) == f[1, 0, 0, 1]
