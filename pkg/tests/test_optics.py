import math

import numpy as np
import pytest

from ghostforge.imaging import Image
from ghostforge.optics import (
    DEFAULT_SPLIT_RATIO,
    DatasetManifest,
    SimConfig,
    TurbulenceParams,
    builtin_shapes,
    circular_pupil,
    degrade,
    generate_dataset,
    kolmogorov_structure,
    make_patterns,
    make_phase_screen,
    measure,
    structure_function,
    turbulence_r0,
)

NONE = TurbulenceParams(mode="none")


# ---------------------------------------------------------------- patterns

def test_patterns_deterministic():
    cfg = SimConfig(image_size=8, n_measurements=50, seed=4)
    assert np.array_equal(make_patterns(cfg).patterns, make_patterns(cfg).patterns)


def test_patterns_differ_by_seed():
    a = make_patterns(SimConfig(image_size=8, n_measurements=5, seed=1)).patterns
    b = make_patterns(SimConfig(image_size=8, n_measurements=5, seed=2)).patterns
    assert not np.array_equal(a, b)


def test_pattern_prefix_is_stable():
    # the i-th plane depends only on (seed, i)
    short = make_patterns(SimConfig(image_size=8, n_measurements=10, seed=3)).patterns
    long = make_patterns(SimConfig(image_size=8, n_measurements=40, seed=3)).patterns
    assert np.array_equal(short, long[:10])


@pytest.mark.parametrize("size", [8, 16, 32])
def test_binary_plane_means_within_three_sigma(size):
    planes = make_patterns(SimConfig(image_size=size, n_measurements=200, seed=size)).patterns
    n = size * size
    means = planes.reshape(200, -1).mean(axis=1)
    assert set(np.unique(planes)) <= {0.0, 1.0}
    # three binomial standard deviations of the plane mean
    assert np.all(np.abs(means - 0.5) <= 3 / (2 * math.sqrt(n)))


def test_hadamard_orthogonal():
    planes = make_patterns(SimConfig(image_size=8, n_measurements=64, pattern_kind="hadamard")).patterns
    signed = 2 * planes.reshape(64, -1) - 1
    gram = signed @ signed.T
    np.testing.assert_array_equal(gram, 64 * np.eye(64))


def test_hadamard_too_many():
    with pytest.raises(ValueError):
        SimConfig(image_size=8, n_measurements=65, pattern_kind="hadamard")


# ---------------------------------------------------------------- screens

def test_r0_labels():
    assert [turbulence_r0(64, s) for s in ("weak", "medium", "strong")] == [16, 8, 4]


def test_screen_vanishes_for_huge_r0():
    screen = make_phase_screen(TurbulenceParams(mode="phase-screen", r0=1e9), 64, seed=0)
    assert np.max(np.abs(screen.phase)) < 1e-3


def test_screen_deterministic():
    p = TurbulenceParams(mode="phase-screen", r0=4.0)
    a = make_phase_screen(p, 32, seed=9).phase
    assert np.array_equal(a, make_phase_screen(p, 32, seed=9).phase)
    assert not np.array_equal(a, make_phase_screen(p, 32, seed=10).phase)


def test_screen_amplitude_scaling():
    # phase scales as r0^(-5/6) for fixed noise
    p1 = TurbulenceParams(mode="phase-screen", r0=4.0, L0=math.inf)
    p2 = TurbulenceParams(mode="phase-screen", r0=8.0, L0=math.inf)
    a, b = make_phase_screen(p1, 32, 1).phase, make_phase_screen(p2, 32, 1).phase
    np.testing.assert_allclose(b, a * 2 ** (-5 / 6), rtol=1e-10, atol=1e-12)


def test_structure_function_statistics():
    size = 64
    r0 = size / 8
    params = TurbulenceParams(mode="phase-screen", r0=r0, L0=math.inf)
    d = np.mean([structure_function(make_phase_screen(params, size, s).phase, int(r0))
                 for s in range(30)], axis=0)
    r = np.arange(2, int(r0) + 1)
    ratio = d[r - 1] / kolmogorov_structure(r, r0)
    assert np.all(np.abs(ratio - 1) < 0.3), ratio


def test_structure_function_of_ramp():
    phase = np.add.outer(np.zeros(10), np.arange(10.0))
    # x lags give r^2, y lags give 0
    np.testing.assert_allclose(structure_function(phase, 3), 0.5 * np.array([1, 4, 9]))


def test_l0_validation():
    with pytest.raises(ValueError):
        TurbulenceParams(mode="phase-screen", L0=0.0)
    assert TurbulenceParams(L0=math.inf).outer_scale(32) == math.inf
    assert TurbulenceParams().outer_scale(32) == 512


# ------------------------------------------------------------- degradation

def test_degrade_none_is_identity(rng):
    img = Image(rng.uniform(size=(16, 16)))
    assert degrade(img, NONE, 0) is img


def test_blur_keeps_constant():
    img = np.full((16, 16), 0.37)
    out = degrade(img, TurbulenceParams(mode="gaussian-blur", blur_sigma=1.5), 0).data
    np.testing.assert_allclose(out, 0.37, atol=1e-15)


def test_blur_with_tilt_keeps_constant():
    img = np.full((16, 16), 0.6)
    params = TurbulenceParams(mode="gaussian-blur", blur_sigma=1.0, tilt_sigma=2.0)
    np.testing.assert_allclose(degrade(img, params, 3).data, 0.6, atol=1e-12)


def roll_convolve(img, psf):
    out = np.zeros_like(img)
    for u in range(psf.shape[0]):
        for v in range(psf.shape[1]):
            out += psf[u, v] * np.roll(img, (u, v), axis=(0, 1))
    return out


def test_phase_screen_limit_is_diffraction_blur(rng):
    size = 32
    img = rng.uniform(size=(size, size))
    pupil = circular_pupil(size)
    psf = np.abs(np.fft.ifft2(pupil)) ** 2
    psf /= psf.sum()
    expected = np.clip(roll_convolve(img, psf), 0, 1)
    out = degrade(img, TurbulenceParams(mode="phase-screen", r0=1e12), 5).data
    assert np.max(np.abs(out - expected)) < 1e-6


def test_phase_screen_conserves_energy(rng):
    img = rng.uniform(0.2, 0.8, size=(32, 32))
    params = TurbulenceParams(mode="phase-screen", r0=4.0)
    out = degrade(img, params, 1).data
    # unit-sum PSF: mean preserved unless clamping bites
    assert out.mean() == pytest.approx(img.mean(), abs=1e-9)
    assert out.min() >= img.min() - 1e-9 and out.max() <= img.max() + 1e-9


def test_phase_screen_needs_square():
    with pytest.raises(ValueError, match="square"):
        degrade(np.zeros((16, 8)), TurbulenceParams(mode="phase-screen"), 0)


# ---------------------------------------------------------------- measure

def test_zero_object_gives_zero_buckets():
    pats = make_patterns(SimConfig(image_size=8, n_measurements=20))
    assert np.all(measure(np.zeros((8, 8)), pats, NONE, 0.0, 0).values == 0.0)


def test_delta_object_sifts():
    pats = make_patterns(SimConfig(image_size=8, n_measurements=30, seed=2))
    obj = np.zeros((8, 8))
    obj[3, 5] = 1.0
    np.testing.assert_array_equal(measure(obj, pats, NONE, 0.0, 0).values, pats.patterns[:, 3, 5])


def test_measure_matches_pixel_loop(rng):
    # dyadic samples keep every partial sum exact, so order cannot matter
    obj = rng.integers(0, 257, size=(8, 8)) / 256.0
    pats = make_patterns(SimConfig(image_size=8, n_measurements=40, seed=6))
    expected = []
    for plane in pats.patterns:
        acc = 0.0
        for y in range(8):
            for x in range(8):
                acc += plane[y, x] * obj[y, x]
        expected.append(acc)
    np.testing.assert_array_equal(measure(obj, pats, NONE, 0.0, 0).values, expected)


def test_measure_is_linear(rng):
    pats = make_patterns(SimConfig(image_size=8, n_measurements=25, seed=1))
    a, b = rng.uniform(0, 0.5, size=(2, 8, 8))
    ma = measure(a, pats, NONE, 0.0, 0).values
    mb = measure(b, pats, NONE, 0.0, 0).values
    np.testing.assert_allclose(measure(a + b, pats, NONE, 0.0, 0).values, ma + mb, rtol=1e-13)


@pytest.mark.parametrize("refresh", ["static", "per-measurement"])
def test_measure_turbulent_deterministic(refresh, rng):
    pats = make_patterns(SimConfig(image_size=16, n_measurements=12))
    obj = rng.uniform(size=(16, 16))
    params = TurbulenceParams(mode="phase-screen", r0=4.0, refresh=refresh)
    a = measure(obj, pats, params, 0.01, 3).values
    assert np.array_equal(a, measure(obj, pats, params, 0.01, 3).values)
    assert np.all(a >= 0)


def test_static_refresh_uses_one_scene(rng):
    from ghostforge.optics import _key, degrade_field

    pats = make_patterns(SimConfig(image_size=16, n_measurements=10))
    obj = rng.uniform(size=(16, 16))
    params = TurbulenceParams(mode="phase-screen", r0=4.0, refresh="static")
    scene = np.clip(degrade_field(obj, params, _key(7, "static")), 0, 1)
    np.testing.assert_allclose(measure(obj, pats, params, 0.0, 7).values,
                               measure(scene, pats, NONE, 0.0, 0).values, rtol=1e-13)


def test_measure_shape_mismatch():
    pats = make_patterns(SimConfig(image_size=8, n_measurements=4))
    with pytest.raises(ValueError, match="differ"):
        measure(np.zeros((9, 9)), pats, NONE, 0.0, 0)


# ---------------------------------------------------------------- dataset

def test_builtin_shapes():
    shapes = builtin_shapes(6, 32, 1)
    assert len(shapes) == 6
    for img in shapes:
        assert img.shape == (32, 32)
        assert set(np.unique(img.data)) <= {0.0, 1.0}
        assert img.data.sum() > 0
    assert all(a == b for a, b in zip(shapes, builtin_shapes(6, 32, 1)))


def test_dataset_split_and_files(tmp_path):
    cfg = SimConfig(image_size=16, n_measurements=64,
                    turbulence=TurbulenceParams(mode="gaussian-blur"), seed=2)
    manifest = generate_dataset(cfg, builtin_shapes(10, 16, 2), tmp_path, 0.8)
    assert len(manifest.split("train")) == 8 and len(manifest.split("test")) == 2
    for e in manifest.entries:
        for rel in (e.clean_path, e.degraded_path, e.bucket_path, e.recon_path):
            assert (tmp_path / rel).is_file()
    loaded = DatasetManifest.load(tmp_path / "manifest.json")
    assert loaded.entries == manifest.entries and loaded.config == cfg


def test_dataset_byte_identical(tmp_path):
    cfg = SimConfig(image_size=16, n_measurements=32,
                    turbulence=TurbulenceParams(mode="phase-screen", r0=4.0, refresh="static"), seed=5)
    objs = builtin_shapes(4, 16, 5)
    generate_dataset(cfg, objs, tmp_path / "a", 0.5)
    generate_dataset(cfg, objs, tmp_path / "b", 0.5)
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_default_split_ratio():
    assert DEFAULT_SPLIT_RATIO == pytest.approx(0.832, abs=5e-4)


def test_dataset_rejects_wrong_size(tmp_path):
    with pytest.raises(ValueError, match="shape"):
        generate_dataset(SimConfig(image_size=16, n_measurements=4), [np.zeros((8, 8))], tmp_path)
