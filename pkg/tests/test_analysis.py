import logging
import math

import numpy as np
import pytest

from ridgecs.analysis import (
    Mode,
    angular_error,
    false_detection_rate,
    find_modes,
    match_and_average_error,
    match_errors,
    modes_from_json,
    modes_to_json,
    nmse,
    odf_from_coefficients,
    odf_from_signal,
)
from ridgecs.dictionary import build_dictionary, frt_kernel_matrix
from ridgecs.phantom import VoxelModel, synth_signal
from ridgecs.sphere import icosphere

EX, EY, EZ = np.eye(3)
TESS = icosphere(3)


def voxel_odf(directions, b=3000.0, eigenvalues=(1700e-6, 300e-6, 300e-6)):
    vox = VoxelModel.from_directions(directions, eigenvalues)
    sig = synth_signal(vox, b, TESS.vertices)
    return odf_from_signal(sig[None], TESS).values[0]


def test_isotropic_odf_is_uniform():
    odf = voxel_odf([EX], eigenvalues=(1e-3, 1e-3, 1e-3))
    assert (odf.max() - odf.min()) / odf.mean() < 1e-3


def test_single_tensor_odf_peak():
    d = np.array([0.6, 0.3, 0.742])
    d /= np.linalg.norm(d)
    odf = voxel_odf([d])
    assert angular_error(TESS.vertices[np.argmax(odf)], d) < 5.0


def test_odf_is_normalized():
    odf = voxel_odf([EX, EZ])
    assert odf.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(odf >= 0)


def test_all_zero_odf_is_flagged(caplog):
    Q = np.ones((len(TESS), 3))
    with caplog.at_level(logging.WARNING):
        out = odf_from_coefficients(-np.ones((1, 1, 1, 3)), Q, TESS)
    assert out.degenerate[0, 0, 0]
    np.testing.assert_allclose(out.values, 1 / len(TESS))
    assert "all-zero" in caplog.text


def test_odf_from_coefficients_matches_signal_route():
    # an SH8 representation carries the same Funk-Radon transform either way
    dic = build_dictionary("sh8", normalize=False)
    vox = VoxelModel.from_directions([EX, EY])
    sig = synth_signal(vox, 1000.0, TESS.vertices)
    B = dic.evaluate(TESS.vertices)
    c, *_ = np.linalg.lstsq(B, sig, rcond=None)
    a = odf_from_coefficients(c[None], frt_kernel_matrix(dic, TESS), TESS).values[0]
    b = odf_from_signal((B @ c)[None], TESS).values[0]
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_modes_uniform():
    assert find_modes(np.full(len(TESS), 1 / len(TESS)), TESS) == []


def test_modes_single_tensor():
    modes = find_modes(voxel_odf([EY]), TESS)
    assert len(modes) == 1
    assert angular_error(modes[0].direction, EY) < 5.0


def test_modes_two_orthogonal():
    modes = find_modes(voxel_odf([EX, EY]), TESS)
    assert len(modes) == 2
    assert abs(angular_error(modes[0].direction, modes[1].direction) - 90.0) <= 10.0


def test_modes_three_orthogonal():
    modes = find_modes(voxel_odf([EX, EY, EZ]), TESS)
    assert len(modes) == 3


def test_mode_count_affine_invariant():
    odf = voxel_odf([EX, EY])
    assert len(find_modes(3.0 * odf + 2.0, TESS)) == len(find_modes(odf, TESS))


def test_modes_canonical_hemisphere():
    for m in find_modes(voxel_odf([EX, EY, np.array([0.0, 0.6, -0.8])]), TESS):
        assert m.direction[2] >= 0


@pytest.mark.parametrize("a,b,expected", [(EX, EX, 0.0), (EX, EY, 90.0),
                                          (EX, np.array([0.5, math.sqrt(0.75), 0.0]), 60.0),
                                          (EX, -EX, 0.0)])
def test_angular_error(a, b, expected):
    assert angular_error(a, b) == pytest.approx(expected, abs=1e-6)
    assert angular_error(b, a) == pytest.approx(expected, abs=1e-6)


def test_matching():
    truth = {(0, 0, 0): [EX], (1, 0, 0): [EY, EZ]}
    assert match_and_average_error(truth, {(0, 0, 0): [EX], (1, 0, 0): [EZ, EY]}) == 0.0
    assert match_and_average_error(truth, {}) == 90.0
    five = np.array([math.cos(math.radians(5)), math.sin(math.radians(5)), 0])
    forty = np.array([math.cos(math.radians(40)), 0, math.sin(math.radians(40))])
    assert match_errors([EX], [forty, five]) == pytest.approx([5.0])


def test_matching_accepts_mode_objects():
    truth = {(0, 0, 0): [EX]}
    assert match_and_average_error(truth, {(0, 0, 0): [Mode(EX, 1.0)]}) == 0.0


def test_nmse_values(caplog):
    rng = np.random.default_rng(0)
    ref = rng.standard_normal((3, 3, 1, 5))
    assert nmse(ref, ref) == 0.0
    assert nmse(ref, np.zeros_like(ref)) == pytest.approx(1.0)
    assert nmse(ref, 2 * ref) == pytest.approx(1.0)
    ref[0, 0, 0] = 0.0
    est = ref.copy()
    est[0, 0, 0] = 5.0
    with caplog.at_level(logging.WARNING):
        assert nmse(ref, est) == 0.0
    assert "excluding 1" in caplog.text


def test_nmse_zero_only_for_equal():
    ref = np.ones((1, 1, 1, 3))
    est = ref.copy()
    est[0, 0, 0, 1] = np.nextafter(1.0, 2.0)
    assert nmse(ref, est) > 0


def test_false_detection_rate():
    assert false_detection_rate(np.full((2, 2), 2), np.full((2, 2), 2)) == 0.0
    assert false_detection_rate(np.full((2, 2), 2), np.full((2, 2), 1)) == 50.0
    assert false_detection_rate(np.array([1]), np.array([3])) == 200.0


def test_modes_json_roundtrip():
    modes = {(0, 0, 0): [Mode(EX, 0.1)], (1, 0, 0): []}
    back = modes_from_json(modes_to_json(modes))
    assert back.keys() == modes.keys()
    np.testing.assert_array_equal(back[(0, 0, 0)][0].direction, EX)
