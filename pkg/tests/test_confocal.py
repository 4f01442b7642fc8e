"""Confocal maps, Gaussian slice fits, density estimation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvkit.confocal import (
    ConfocalError,
    DensityMethod,
    MapFormatError,
    PLMap,
    PsfModel,
    enhancement_ratio,
    estimate_density,
    fit_gaussian_slice,
    gaussian_profile,
    gaussian_uniform_ratio,
    load_map,
    number_density_to_ppb,
    ppb_to_number_density,
    save_map,
)

PSF = PsfModel(0.45, 0.45, 2.0)


def gaussian_map(fwhm_x=4.53, fwhm_y=2.0, amplitude=1000.0, baseline=50.0,
                 noise=0.0, seed=0):
    x = np.linspace(-8.0, 8.0, 81)
    y = np.linspace(-6.0, 6.0, 61)
    gx, gy = np.meshgrid(x, y, indexing="ij")
    counts = baseline + amplitude * np.exp(
        -4.0 * np.log(2.0) * (gx ** 2 / fwhm_x ** 2 + gy ** 2 / fwhm_y ** 2))
    if noise:
        counts = counts + np.random.default_rng(seed).normal(0, noise, counts.shape)
        counts = np.clip(counts, 0.0, None)
    return PLMap(axes=(x, y), counts=counts, power=0.3)


# ---------------------------------------------------------------------------
# density estimation

def test_density_reproduces_published_range():
    low = estimate_density(9.28e6, 7.7e3, PSF, DensityMethod.GAUSSIAN)
    high = estimate_density(14.46e6, 7.7e3, PSF, DensityMethod.GAUSSIAN)
    assert low.ppb == pytest.approx(14.0, rel=0.03)
    assert high.ppb == pytest.approx(21.9, rel=0.03)


def test_density_pristine_region():
    est = estimate_density(16.1e3, 7.7e3, PSF, DensityMethod.GAUSSIAN)
    assert est.ppb == pytest.approx(0.024, rel=0.05)


def test_density_unit_case():
    # PSF chosen so the Gaussian integral volume is exactly 1 um^3
    side = 1.0 / np.sqrt(np.pi / (4.0 * np.log(2.0)))
    psf = PsfModel(side, side, side)
    est = estimate_density(100.0, 100.0, psf, DensityMethod.GAUSSIAN)
    assert est.number_density == pytest.approx(1.0, abs=1e-12)


def test_gaussian_uniform_constant_ratio():
    expected = (4.0 * np.pi / 3.0) / (np.pi / (4.0 * np.log(2.0))) ** 1.5
    assert gaussian_uniform_ratio() == pytest.approx(expected, abs=1e-12)
    for psf in (PSF, PsfModel(1.0, 2.0, 3.0), PsfModel(0.1, 0.1, 0.1)):
        gauss = estimate_density(5e5, 1e3, psf, DensityMethod.GAUSSIAN)
        unif = estimate_density(5e5, 1e3, psf, DensityMethod.UNIFORM)
        assert gauss.number_density / unif.number_density == \
            pytest.approx(expected, abs=1e-9)


def test_density_linearity_scalings():
    base = estimate_density(1e6, 1e4, PSF)
    assert estimate_density(2e6, 1e4, PSF).number_density == \
        pytest.approx(2.0 * base.number_density)
    assert estimate_density(1e6, 2e4, PSF).number_density == \
        pytest.approx(0.5 * base.number_density)
    wide = PsfModel(2 * PSF.w_x, PSF.w_y, PSF.w_z)
    assert estimate_density(1e6, 1e4, wide).number_density == \
        pytest.approx(0.5 * base.number_density)


def test_density_rejects_bad_rates():
    with pytest.raises(ConfocalError):
        estimate_density(1e6, 0.0, PSF)
    with pytest.raises(ConfocalError):
        estimate_density(-1.0, 1e3, PSF)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1e6))
def test_ppb_number_density_bijection(per_um3):
    assert ppb_to_number_density(number_density_to_ppb(per_um3)) == \
        pytest.approx(per_um3, rel=1e-12)


def test_enhancement_ratio():
    assert enhancement_ratio(900.0, 1.0) == 900.0
    assert enhancement_ratio(5.0, 5.0) == 1.0
    with pytest.raises(ConfocalError):
        enhancement_ratio(1.0, 0.0)


def test_enhancement_consistent_with_density_linearity():
    # density scales linearly with the ensemble rate, so the PL ratio is
    # also the concentration ratio
    in_wg = estimate_density(9.28e6, 7.7e3, PSF)
    pristine = estimate_density(16.1e3, 7.7e3, PSF)
    assert in_wg.ppb / pristine.ppb == \
        pytest.approx(enhancement_ratio(9.28e6, 16.1e3), rel=1e-9)


# ---------------------------------------------------------------------------
# slice fits

def test_slice_fit_recovers_waveguide_width():
    plmap = gaussian_map(noise=10.0, seed=3)
    fit = fit_gaussian_slice(plmap, 0, (30,))
    assert fit.fwhm == pytest.approx(4.53, rel=0.05)


def test_slice_fit_noiseless_exact():
    plmap = gaussian_map()
    fit = fit_gaussian_slice(plmap, 0, (30,))
    assert fit.fwhm == pytest.approx(4.53, rel=1e-6)
    assert fit.baseline == pytest.approx(50.0, rel=1e-3)


def test_slice_fit_psf_aspect_ratio():
    x = np.linspace(-1.5, 1.5, 61)
    z = np.linspace(-5.0, 5.0, 81)
    gx, gz = np.meshgrid(x, z, indexing="ij")
    counts = 500.0 * np.exp(-4 * np.log(2) * (gx ** 2 / 0.45 ** 2 + gz ** 2 / 2.0 ** 2))
    plmap = PLMap(axes=(x, z), counts=counts, power=0.1)
    fx = fit_gaussian_slice(plmap, 0, (40,))
    fz = fit_gaussian_slice(plmap, 1, (30,))
    assert fx.fwhm == pytest.approx(0.45, rel=0.05)
    assert fz.fwhm == pytest.approx(2.0, rel=0.05)
    assert fz.fwhm / fx.fwhm == pytest.approx(4.44, rel=0.05)


def test_slice_fit_baseline_shift_invariance():
    a = gaussian_map(baseline=50.0, noise=5.0, seed=7)
    b = PLMap(axes=a.axes, counts=a.counts + 300.0, power=a.power)
    fit_a = fit_gaussian_slice(a, 0, (30,))
    fit_b = fit_gaussian_slice(b, 0, (30,))
    assert fit_b.fwhm == pytest.approx(fit_a.fwhm, rel=1e-3)
    assert fit_b.baseline - fit_a.baseline == pytest.approx(300.0, rel=1e-3)


def test_slice_fit_flat_slice_rejected():
    x = np.linspace(0.0, 1.0, 10)
    plmap = PLMap(axes=(x, x), counts=np.ones((10, 10)), power=1.0)
    with pytest.raises(ValueError):
        fit_gaussian_slice(plmap, 0, (5,))


def test_gaussian_profile_fwhm_definition():
    prof = gaussian_profile(np.array([0.0, 2.265]), 100.0, 0.0, 4.53, 0.0)
    assert prof[1] == pytest.approx(prof[0] / 2.0)


# ---------------------------------------------------------------------------
# file format

def test_map_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    axes = (np.linspace(0, 6.3, 64), np.linspace(0, 6.3, 64),
            np.linspace(0, 3.1, 32))
    counts = rng.random((64, 64, 32)) * 1e5
    plmap = PLMap(axes=axes, counts=counts, power=0.3)
    path = tmp_path / "map3d.txt"
    save_map(path, plmap)
    back = load_map(path)
    assert back.power == plmap.power
    assert all(np.array_equal(a, b) for a, b in zip(back.axes, plmap.axes))
    assert np.array_equal(back.counts, plmap.counts)


def test_map_small_2x2(tmp_path):
    path = tmp_path / "tiny.txt"
    path.write_text("# plmap v1 dims=2 power_mW=0.3\n"
                    "# axis x: 2 0.0 1.0\n"
                    "# axis y: 2 0.0 1.0\n"
                    "1.0 2.0\n3.0 4.0\n")
    plmap = load_map(path)
    assert plmap.counts.shape == (2, 2)
    assert plmap.counts[1, 0] == 3.0


def test_map_header_errors(tmp_path):
    bad = tmp_path / "h.txt"
    bad.write_text("# plmop v1 dims=2 power_mW=0.3\n")
    with pytest.raises(MapFormatError, match=":1:"):
        load_map(bad)


def test_map_descending_axis_error(tmp_path):
    bad = tmp_path / "axis.txt"
    bad.write_text("# plmap v1 dims=2 power_mW=0.3\n"
                    "# axis x: 2 1.0 0.0\n"
                    "# axis y: 2 0.0 1.0\n"
                    "1.0 2.0\n3.0 4.0\n")
    with pytest.raises(MapFormatError, match=":2:"):
        load_map(bad)


def test_map_ragged_row_error(tmp_path):
    bad = tmp_path / "ragged.txt"
    bad.write_text("# plmap v1 dims=2 power_mW=0.3\n"
                    "# axis x: 2 0.0 1.0\n"
                    "# axis y: 2 0.0 1.0\n"
                    "1.0 2.0\n3.0\n")
    with pytest.raises(MapFormatError, match=":5:"):
        load_map(bad)
