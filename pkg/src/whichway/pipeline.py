"""End-to-end glue: source -> pupil -> scans -> reconstruction -> report."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .config import RunConfig
from .errors import ConfigurationError
from .instrument import (
    ScanSeries,
    _bin_intensity,
    flux_vector_from_table,
    run_scan,
)
from .metrics import duality_check, match_profiles, visibility
from .optics import (
    Geometry,
    GridSpec,
    IntensityProfile,
    SampledField,
    double_slit_field,
    propagate_fresnel,
)
from .reconstruct import (
    ReconstructionResult,
    build_aperture_matrix,
    gaussian_smooth,
    solve_stacked,
)


def make_source(cfg: RunConfig) -> SampledField:
    return double_slit_field(cfg.geometry, cfg.grid, cfg.illumination_tilt)


def pupil_field(cfg: RunConfig, source: SampledField | None = None) -> SampledField:
    if source is None:
        source = make_source(cfg)
    return propagate_fresnel(
        source, cfg.geometry.dist_slits_lens, cfg.geometry.wavelength
    )


def pupil_truth(
    geom: Geometry,
    source: SampledField,
    positions: np.ndarray,
    step: float,
) -> np.ndarray:
    """Directly computed pupil intensity, integrated per scan-step bin.

    This is the ground truth the reconstruction should recover: the pupil
    illumination pattern binned at the scan resolution.
    """
    pupil = propagate_fresnel(source, geom.dist_slits_lens, geom.wavelength)
    edges = np.concatenate((positions - step / 2, [positions[-1] + step / 2]))
    return _bin_intensity(
        np.abs(pupil.amplitudes) ** 2, pupil.origin, pupil.pitch, edges
    )


def run_all_scans(cfg: RunConfig, source: SampledField | None = None) -> list[ScanSeries]:
    if source is None:
        source = make_source(cfg)
    return [run_scan(source, cfg.geometry, scan, cfg.detector) for scan in cfg.scans]


def matrices_for(series_list: list[ScanSeries]):
    """Aperture matrices matching a set of scans (shared step grid)."""
    n = series_list[0].config.n_steps
    step = series_list[0].config.step
    for series in series_list[1:]:
        if series.config.n_steps != n or series.config.step != step:
            raise ConfigurationError("scans must share n_steps and step to be stacked")
    return [
        build_aperture_matrix(
            n,
            series.config.width_elems(),
            series.config.opening,
            series.config.anchor_elems,
        )
        for series in series_list
    ]


def reconstruct_series(
    series_list: list[ScanSeries],
    signal: str = "total",
    cutoff: float = 1e-10,
    smoothing_rms: float = 0.0,
) -> ReconstructionResult:
    """Stacked least-squares reconstruction from in-memory scan series."""
    mats = matrices_for(series_list)
    offsets = None
    fluxes = []
    for series in series_list:
        off, flux = series.flux_vector(signal)
        if offsets is None:
            offsets = off
        fluxes.append(flux)
    exposures = [series.config.exposure for series in series_list]
    result = solve_stacked(mats, fluxes, exposures, grid=offsets, cutoff=cutoff)
    if smoothing_rms > 0:
        result = gaussian_smooth(result, smoothing_rms)
    return result


def reconstruct_tables(
    tables: list[dict],
    widths_elems: list[int],
    exposures: list[float],
    signal: str = "F",
    opening: str = "rightward",
    anchor: int = 20,
    cutoff: float = 1e-10,
    smoothing_rms: float = 0.0,
) -> ReconstructionResult:
    """Reconstruction from scan CSV tables (the file-based route)."""
    n = tables[0]["F"].size
    for t in tables[1:]:
        if t["F"].size != n:
            raise ConfigurationError("flux series must all have the same length")
    mats = [build_aperture_matrix(n, w, opening, anchor) for w in widths_elems]
    offsets = None
    fluxes = []
    for t in tables:
        off, flux = flux_vector_from_table(t, signal)
        if offsets is None:
            offsets = off
        fluxes.append(flux)
    result = solve_stacked(mats, fluxes, exposures, grid=offsets, cutoff=cutoff)
    if smoothing_rms > 0:
        result = gaussian_smooth(result, smoothing_rms)
    return result


def result_profile(result: ReconstructionResult) -> IntensityProfile:
    """Reconstruction as an intensity profile (negatives clipped to zero)."""
    return IntensityProfile(
        float(result.grid[0]), result.pitch, np.clip(result.p_hat, 0.0, None)
    )


def direct_fringe_profile(cfg: RunConfig, source: SampledField | None = None) -> IntensityProfile:
    """Fringe profile imaged directly at the near plane D (no lens)."""
    if source is None:
        source = make_source(cfg)
    at_screen = propagate_fresnel(
        source, cfg.geometry.dist_slits_direct, cfg.geometry.wavelength
    )
    return at_screen.intensity()


def curve_width_at_half_max(x: np.ndarray, y: np.ndarray) -> float:
    """Full width at half maximum with linear interpolation at the crossings."""
    y = np.asarray(y, dtype=float)
    half = y.max() / 2
    above = y >= half
    if not above.any():
        return 0.0
    first = int(np.argmax(above))
    last = len(y) - 1 - int(np.argmax(above[::-1]))
    left = x[first]
    if first > 0:
        left = np.interp(half, [y[first - 1], y[first]], [x[first - 1], x[first]])
    right = x[last]
    if last < len(y) - 1:
        right = np.interp(half, [y[last + 1], y[last]], [x[last + 1], x[last]])
    return float(right - left)
