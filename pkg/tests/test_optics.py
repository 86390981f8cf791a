import re
import warnings

import numpy as np
import pytest
from scipy.signal import find_peaks

import whichway as ww
from whichway.optics import GridSpec, check_wraparound


def test_geometry_defaults():
    g = ww.Geometry()
    assert g.wavelength == 650e-9
    assert g.slit_width == 89e-6
    assert g.slit_sep == 248e-6
    expected_defect = abs(1 / 0.58 + 1 / 0.63 - 1 / 0.30) * 0.30
    assert g.lens_defect == pytest.approx(expected_defect, rel=1e-12)


def test_geometry_validation():
    with pytest.raises(ww.ConfigurationError):
        ww.Geometry(wavelength=0.0)
    with pytest.raises(ww.ConfigurationError):
        ww.Geometry(slit_sep=50e-6)  # slits would overlap


def test_geometry_dict_roundtrip():
    g = ww.Geometry(focal_length=0.25)
    assert ww.Geometry.from_dict(g.to_dict()) == g
    with pytest.raises(ww.ConfigurationError):
        ww.Geometry.from_dict({"banana_m": 1.0})


def test_fringe_scale_value():
    # lambda L_S / d with the default layout
    assert ww.fringe_scale(ww.Geometry()) == pytest.approx(1.520e-3, rel=1e-3)


def test_fresnel_number_is_small_at_the_lens():
    n = ww.fresnel_number(ww.Geometry(), 0.58)
    assert n == pytest.approx(((248e-6 + 89e-6) / 2) ** 2 / (650e-9 * 0.58))
    assert n < 0.1


def test_grid_positions_cell_centered():
    grid = GridSpec(8, 4e-3)
    x = grid.positions()
    assert x.size == 8
    assert abs(x.mean()) < 1e-18
    assert np.allclose(np.diff(x), grid.pitch)


def test_double_slit_field_power():
    geom = ww.Geometry()
    grid = GridSpec(2**14, 5e-3)
    tilt = 0.1
    f = ww.double_slit_field(geom, grid, tilt)
    expected = geom.slit_width * ((1 + tilt / 2) ** 2 + (1 - tilt / 2) ** 2)
    # slit edges are quantized to whole cells
    assert f.power == pytest.approx(expected, rel=4 * grid.pitch / geom.slit_width)


def test_double_slit_field_tilt_ratio():
    f = ww.double_slit_field(ww.Geometry(), GridSpec(2**14, 5e-3), 0.1)
    amp = f.amplitudes.real
    assert amp.max() == pytest.approx(1.05)
    assert amp[amp > 0].min() == pytest.approx(0.95)


def test_double_slit_field_grid_preconditions():
    geom = ww.Geometry()
    with pytest.raises(ww.ConfigurationError):
        ww.double_slit_field(geom, GridSpec(64, 5e-3))  # too coarse
    with pytest.raises(ww.ConfigurationError):
        ww.double_slit_field(geom, GridSpec(2**12, 100e-6))  # misses the slits


def test_propagation_conserves_power():
    grid = GridSpec(2**12, 2e-3)
    x = grid.positions()
    rng = np.random.default_rng(7)
    amps = np.exp(-((x / 3e-4) ** 2)) * (rng.normal(size=x.size) + 1j)
    f = ww.SampledField(grid.origin, grid.pitch, amps)
    out = ww.propagate_fresnel(f, 0.01, 650e-9)
    assert out.power == pytest.approx(f.power, rel=1e-12)


def test_propagation_zero_distance_is_identity():
    grid = GridSpec(256, 1e-3)
    f = ww.SampledField(grid.origin, grid.pitch, np.ones(256))
    out = ww.propagate_fresnel(f, 0.0, 650e-9)
    assert np.array_equal(out.amplitudes, f.amplitudes)
    assert out.amplitudes is not f.amplitudes


def test_wraparound_guard_names_a_sufficient_grid_size():
    geom = ww.Geometry()
    pitch = 5e-3 / 4096
    small = ww.double_slit_field(geom, GridSpec(4096, 4096 * pitch / 2))
    with pytest.raises(ww.ConfigurationError) as err:
        ww.propagate_fresnel(small, geom.dist_slits_lens, geom.wavelength)
    match = re.search(r"at least (\d+) samples", str(err.value))
    assert match is not None
    n_min = int(match.group(1))
    # the suggested size (rounded up to a power of two) must actually pass
    n_ok = 2 ** int(np.ceil(np.log2(n_min)))
    big = ww.double_slit_field(geom, GridSpec(n_ok, n_ok * pitch / 2))
    ww.propagate_fresnel(big, geom.dist_slits_lens, geom.wavelength)


def test_check_wraparound_ignores_empty_spectrum():
    check_wraparound(np.zeros(64, dtype=complex), 1e-6, 1.0, 650e-9)


def test_pupil_fringe_peaks_match_the_analytic_pattern(quiet_cfg, pupil):
    geom = quiet_cfg.geometry
    w_scale = ww.fringe_scale(geom)
    x = pupil.positions
    sel = np.abs(x) <= 3.2e-3  # central fringes, away from the envelope null
    intensity = np.abs(pupil.amplitudes[sel]) ** 2
    min_dist = int(0.5 * w_scale / pupil.pitch)
    peaks, _ = find_peaks(
        intensity, prominence=0.05 * intensity.max(), distance=min_dist
    )
    analytic = ww.fraunhofer_intensity(geom, geom.dist_slits_lens, x[sel])
    expected, _ = find_peaks(
        analytic, prominence=0.05 * analytic.max(), distance=min_dist
    )
    assert peaks.size == expected.size >= 5
    # the envelope pulls the side peaks slightly inside multiples of W;
    # the propagated field must reproduce the analytic positions
    assert np.allclose(x[sel][peaks], x[sel][expected], atol=0.05e-3)
    spacing = np.median(np.diff(x[sel][peaks]))
    assert spacing == pytest.approx(w_scale, rel=0.1)


def test_fraunhofer_on_axis_and_first_null():
    geom = ww.Geometry()
    vals = ww.fraunhofer_intensity(geom, 0.58, np.array([0.0]))
    assert vals[0] == pytest.approx(1.0)
    half_period = ww.fringe_scale(geom) / 2
    null = ww.fraunhofer_intensity(geom, 0.58, np.array([half_period]))
    assert null[0] < 1e-3


def test_fraunhofer_warns_in_the_near_field():
    geom = ww.Geometry()
    with pytest.warns(UserWarning, match="far-field"):
        ww.fraunhofer_intensity(geom, 0.02, np.array([0.0]))


def test_constraint_report_verdicts():
    geom = ww.Geometry()
    assert ww.constraint_report(geom, 0.4e-3).verdict == "resolves-fringes"
    assert ww.constraint_report(geom, 3e-3).verdict == "conflict zone"
    assert ww.constraint_report(geom, 5e-3).verdict == "separates-slits"
    with pytest.raises(ww.ConfigurationError):
        ww.constraint_report(geom, 0.0)


def test_intensity_profile_csv_roundtrip(tmp_path):
    prof = ww.IntensityProfile(-1e-3, 1e-4, np.arange(21, dtype=float))
    path = tmp_path / "prof.csv"
    prof.to_csv(path)
    back = ww.IntensityProfile.from_csv(path)
    assert back.origin == pytest.approx(prof.origin)
    assert back.pitch == pytest.approx(prof.pitch)
    assert np.allclose(back.values, prof.values)


def test_sampled_field_csv_kinds(tmp_path):
    grid = GridSpec(16, 1e-3)
    f = ww.SampledField(grid.origin, grid.pitch, np.ones(16) * (1 + 1j))
    for kind in ("intensity", "real", "abs"):
        f.to_csv(tmp_path / f"{kind}.csv", kind=kind)
    with pytest.raises(ww.ConfigurationError):
        f.to_csv(tmp_path / "bad.csv", kind="imaginary")
