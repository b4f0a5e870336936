import math

import numpy as np
import pytest

from oracles import brute_force_mixture
from ridgecs.dictionary import DEFAULT_D0
from ridgecs.phantom import (
    Component,
    Phantom,
    VoxelModel,
    add_rician_noise,
    make_phantom,
    make_phantom1,
    make_phantom2,
    measure_snr,
    sample_field,
    synth_signal,
    tensor_along,
)
from ridgecs.sphere import spiral_hemisphere

EX, EY, EZ = np.eye(3)


def single(direction=EX):
    return VoxelModel([Component(1.0, tensor_along(direction), np.asarray(direction))])


def test_b_zero_gives_s0():
    vox = VoxelModel.from_directions([EX, EY], s0=2.5)
    assert synth_signal(vox, 0.0, EZ) == 2.5


def test_single_tensor_values():
    np.testing.assert_allclose(tensor_along(EX), DEFAULT_D0, atol=1e-18)
    assert synth_signal(single(), 1000.0, EX) == pytest.approx(math.exp(-1.7), rel=1e-12)
    assert synth_signal(single(), 1000.0, EY) == pytest.approx(math.exp(-0.3), rel=1e-12)


def test_two_orthogonal_tensors():
    vox = VoxelModel.from_directions([EX, EY])
    expected = 0.5 * (math.exp(-1.7) + math.exp(-0.3))
    assert synth_signal(vox, 1000.0, EX) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.4617, abs=1e-4)


def test_signal_matches_brute_force():
    dirs = spiral_hemisphere(20)
    fib = [EX, np.array([1.0, 1.0, 0.0]) / math.sqrt(2), EZ]
    vox = VoxelModel.from_directions(fib)
    got = synth_signal(vox, 3000.0, dirs)
    ref = [brute_force_mixture([1 / 3] * 3, [tensor_along(f) for f in fib], 3000.0, u)
           for u in dirs]
    np.testing.assert_allclose(got, ref, rtol=1e-13)


def test_signal_antipodal():
    vox = VoxelModel.from_directions([EX, np.array([0.3, 0.8, 0.52])])
    d = spiral_hemisphere(12)
    np.testing.assert_allclose(synth_signal(vox, 3000.0, d), synth_signal(vox, 3000.0, -d),
                               rtol=1e-14)


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        VoxelModel([Component(0.7, tensor_along(EX), EX)])


def test_phantom1_layout():
    ph = make_phantom1()
    assert ph.dims == (12, 12, 1)
    counts = ph.counts()
    assert set(np.unique(counts)) == {1, 2, 3}
    crossing = next(idx for idx, v in ph.voxels.items() if v.count == 3)
    dirs = np.array([c.direction for c in ph.voxels[crossing].components])
    np.testing.assert_allclose(np.abs(dirs @ dirs.T), np.eye(3), atol=1e-12)
    for vox in ph.voxels.values():
        for comp in vox.components:
            np.testing.assert_allclose(np.linalg.eigvalsh(comp.tensor),
                                       [300e-6, 300e-6, 1700e-6], atol=1e-15)


def test_phantom1_frozen_counts():
    counts = make_phantom1().counts()
    # two crossing bands of width 2 on a 12x12 grid
    assert int((counts == 3).sum()) == 4
    assert int((counts == 2).sum()) == 2 * (2 * 12 - 4)
    assert int((counts == 1).sum()) == 144 - 4 - 40


def test_phantom2_layout():
    ph = make_phantom2()
    assert ph.dims == (16, 16, 1)
    assert ph.counts().max() <= 4
    centre = np.array(ph.metadata["circle_center"])
    n_circle = 0
    for (ix, iy, _), vox in ph.voxels.items():
        radial = np.array([ix, iy]) - centre
        if abs(np.linalg.norm(radial) - 6.0) < 0.5:
            n_circle += 1
            tangent = vox.components[-1].direction
            assert abs(tangent[:2] @ radial) < 1e-9
    assert n_circle > 20


def test_unknown_phantom():
    with pytest.raises(ValueError):
        make_phantom("phantom3")


def test_phantom_json_roundtrip():
    ph = make_phantom2()
    back = Phantom.from_json(ph.to_json())
    d = spiral_hemisphere(16)
    np.testing.assert_array_equal(sample_field(back, d, 3000.0), sample_field(ph, d, 3000.0))


def test_sample_field_shape():
    assert sample_field(make_phantom1(), spiral_hemisphere(16), 3000.0).shape == (12, 12, 1, 16)


@pytest.mark.parametrize("ratio,expected", [(0.1, 20.0), (1.0, 0.0)])
def test_measure_snr_arithmetic(ratio, expected):
    s = np.random.default_rng(0).standard_normal((3, 3, 1, 4))
    e = np.random.default_rng(1).standard_normal(s.shape)
    e *= ratio * np.linalg.norm(s) / np.linalg.norm(e)
    assert measure_snr(s, s + e) == pytest.approx(expected, abs=1e-10)


def test_measure_snr_identical():
    s = np.ones((2, 2, 1, 3))
    assert measure_snr(s, s) == math.inf


@pytest.mark.parametrize("target", [24.0, 18.0, 12.0])
def test_rician_calibration(target):
    clean = sample_field(make_phantom1(), spiral_hemisphere(16), 3000.0)
    noisy, achieved = add_rician_noise(clean, target, seed=4)
    assert abs(achieved - target) <= 0.5
    assert measure_snr(clean, noisy) == achieved
    assert np.all(noisy >= 0)


def test_rician_infinite_snr():
    clean = sample_field(make_phantom1(), spiral_hemisphere(16), 3000.0)
    noisy, achieved = add_rician_noise(clean, math.inf)
    np.testing.assert_array_equal(noisy, clean)
    assert achieved == math.inf


def test_rician_seeded():
    clean = sample_field(make_phantom1(), spiral_hemisphere(16), 3000.0)
    a, _ = add_rician_noise(clean, 18.0, seed=3)
    b, _ = add_rician_noise(clean, 18.0, seed=3)
    c, _ = add_rician_noise(clean, 18.0, seed=4)
    np.testing.assert_array_equal(a, b)
    r1, r2 = (a - clean).ravel(), (c - clean).ravel()
    assert abs(np.corrcoef(r1, r2)[0, 1]) < 0.15
