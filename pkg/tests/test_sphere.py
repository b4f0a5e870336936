import numpy as np
import pytest

from ridgecs.sphere import (
    greedy_subset,
    icosphere,
    legendre,
    legendre_series,
    legendre_table,
    read_directions_csv,
    spiral_hemisphere,
    write_directions_csv,
)


def min_axial_angle(d):
    g = np.abs(d @ d.T)
    np.fill_diagonal(g, 0.0)
    return np.degrees(np.arccos(np.clip(g.max(), -1, 1)))


def test_spiral_single_direction():
    d = spiral_hemisphere(1)
    assert d.shape == (1, 3)
    assert d[0, 2] >= 0
    assert np.linalg.norm(d[0]) == pytest.approx(1.0, abs=1e-12)


def test_spiral_16_separation():
    d = spiral_hemisphere(16)
    assert d.shape == (16, 3)
    assert np.all(d[:, 2] >= 0)
    # frozen from a brute-force pairwise scan of this construction
    assert min_axial_angle(d) == pytest.approx(20.69, abs=0.01)
    assert min_axial_angle(d) > 20.0


def test_spiral_64_distinct_and_unit():
    d = spiral_hemisphere(64)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
    g = d @ d.T
    np.fill_diagonal(g, 0.0)
    assert np.all(g < 1 - 1e-9)


def test_spiral_rejects_zero():
    with pytest.raises(ValueError):
        spiral_hemisphere(0)


def test_greedy_subset_is_spread():
    base = spiral_hemisphere(64)
    idx = greedy_subset(base, 16)
    assert len(set(idx.tolist())) == 16
    # greedy max-min selection beats a naive prefix of the spiral
    assert min_axial_angle(base[idx]) > min_axial_angle(base[:16])


@pytest.mark.parametrize("order,n_vertices", [(0, 12), (1, 42), (2, 162), (3, 642)])
def test_icosphere_counts(order, n_vertices):
    tess = icosphere(order)
    assert len(tess) == n_vertices
    # Euler: V - E + F = 2 with E = 3F/2
    assert len(tess.faces) == 2 * n_vertices - 4
    np.testing.assert_allclose(np.linalg.norm(tess.vertices, axis=1), 1.0, atol=1e-12)


def test_icosphere_order1_neighbour_counts():
    tess = icosphere(1)
    assert {len(n) for n in tess.neighbors} <= {5, 6}
    assert sum(len(n) == 5 for n in tess.neighbors) == 12


def test_icosphere_no_duplicate_vertices():
    v = icosphere(3).vertices
    d = np.linalg.norm(v[:, None] - v[None], axis=-1)
    np.fill_diagonal(d, 1.0)
    assert d.min() > 1e-3


def test_icosphere_contains_axes():
    v = icosphere(3).vertices
    for axis in np.vstack([np.eye(3), -np.eye(3)]):
        assert np.max(v @ axis) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n,t,expected", [(0, 0.3, 1.0), (2, 0.0, -0.5), (10, 1.0, 1.0),
                                          (3, 0.5, -0.4375), (4, 0.0, 0.375)])
def test_legendre_values(n, t, expected):
    assert legendre(n, t) == pytest.approx(expected, abs=1e-14)


def test_legendre_rejects_outside_interval():
    with pytest.raises(ValueError):
        legendre(2, 1.2)


def test_legendre_table_matches_numpy():
    t = np.linspace(-1, 1, 41)
    tab = legendre_table(12, t)
    for n in range(13):
        np.testing.assert_allclose(tab[n], np.polynomial.legendre.Legendre.basis(n)(t),
                                   atol=1e-12)


def test_legendre_series_matches_numpy():
    coefs = np.array([0.5, 0.0, -1.2, 0.0, 0.3, 0.0, 0.07])
    t = np.linspace(-1, 1, 17)
    np.testing.assert_allclose(legendre_series(coefs, t),
                               np.polynomial.legendre.legval(t, coefs), atol=1e-12)


def test_directions_csv_roundtrip(tmp_path):
    d = spiral_hemisphere(24)
    path = tmp_path / "dirs.csv"
    write_directions_csv(path, d)
    np.testing.assert_array_equal(read_directions_csv(path), d)


def test_directions_csv_missing(tmp_path):
    path = tmp_path / "absent.csv"
    with pytest.raises(FileNotFoundError, match="absent.csv"):
        read_directions_csv(path)


def test_spiral_is_deterministic():
    for K in (5, 16, 33):
        np.testing.assert_array_equal(spiral_hemisphere(K), spiral_hemisphere(K))
