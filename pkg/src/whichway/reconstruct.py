"""Banded aperture matrices and least-squares recovery of the pupil pattern.

Each scan step sums the unknown pattern over the aperture window, so the
forward model is a 0/1 banded matrix per aperture width.  A single width
is rank deficient at most sizes; stacking two widths lifts the degeneracy
and the minimum-norm least-squares solution recovers the pattern.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import lstsq, svdvals

from .errors import ConfigurationError, NumericalError

DEFAULT_RANK_CUTOFF = 1e-10


@dataclass(frozen=True)
class ApertureMatrix:
    """Implicit n x n 0/1 band: A_ij = 1 iff i - band_left < j <= i + band_right.

    Indices are 1-based in that defining condition, matching the usual
    written form; rows near the edges are clipped to [1, n].
    """

    n: int
    band_left: int
    band_right: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("matrix dimension must be >= 1")
        if self.band_left < 0 or self.band_right < 0:
            raise ConfigurationError("band extents must be >= 0")
        if self.band_left + self.band_right > self.n:
            raise ConfigurationError(
                f"band width {self.band_left + self.band_right} exceeds dimension {self.n}"
            )

    @property
    def width_elems(self) -> int:
        return self.band_left + self.band_right

    def row_columns(self, i: int) -> range:
        """1-based columns with a 1 in 1-based row i."""
        return range(max(1, i - self.band_left + 1), min(self.n, i + self.band_right) + 1)

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i in range(1, self.n + 1):
            cols = self.row_columns(i)
            a[i - 1, cols.start - 1 : cols.stop - 1] = 1.0
        return a

    def dot(self, pattern: np.ndarray) -> np.ndarray:
        pattern = np.asarray(pattern, dtype=float)
        if pattern.size != self.n:
            raise ConfigurationError(
                f"pattern length {pattern.size} does not match matrix dimension {self.n}"
            )
        cum = np.concatenate(([0.0], np.cumsum(pattern)))
        i = np.arange(1, self.n + 1)
        lo = np.clip(i - self.band_left, 0, self.n)
        hi = np.clip(i + self.band_right, 0, self.n)
        return cum[hi] - cum[lo]


def build_aperture_matrix(
    n: int, width_elems: int, opening: str = "rightward", anchor: int = 20
) -> ApertureMatrix:
    """Banded summation matrix for an aperture of `width_elems` elements.

    "rightward" fixes the left edge at the reference half-width `anchor`
    (clipped for very narrow apertures), so different widths share the
    same "i - anchor < j" condition; "centered" splits the band evenly.
    """
    if width_elems < 1 or width_elems > n:
        raise ConfigurationError(
            f"width_elems must be in [1, n]; got {width_elems} with n = {n}"
        )
    if opening == "rightward":
        band_left = min(anchor, width_elems)
    elif opening == "leftward":
        band_left = width_elems - min(anchor, width_elems)
    elif opening == "centered":
        band_left = width_elems // 2
    else:
        raise ConfigurationError(f"unknown opening {opening!r}")
    return ApertureMatrix(n, band_left, width_elems - band_left)


def rank_of(matrix: ApertureMatrix, cutoff: float = DEFAULT_RANK_CUTOFF) -> int:
    """Numerical rank via singular values with a relative threshold."""
    s = svdvals(matrix.to_dense())
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > cutoff * s[0]))


def full_rank_dims(
    width_elems: int,
    n_max: int,
    opening: str = "rightward",
    anchor: int = 20,
) -> list[int]:
    """All dimensions n in [width_elems, n_max] where the matrix is full rank."""
    if n_max < width_elems:
        raise ConfigurationError("n_max must be >= width_elems")
    dims = []
    for n in range(width_elems, n_max + 1):
        if rank_of(build_aperture_matrix(n, width_elems, opening, anchor)) == n:
            dims.append(n)
    return dims


@dataclass(frozen=True)
class ReconstructionResult:
    """Recovered pupil pattern with solver provenance."""

    grid: np.ndarray  # element positions (m, or element index when unitless)
    p_hat: np.ndarray
    residual_norm: float
    effective_rank: int
    cutoff: float
    smoothing_rms: float = 0.0

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        p = np.asarray(self.p_hat, dtype=float)
        if grid.size != p.size:
            raise ConfigurationError("grid and p_hat must have the same length")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "p_hat", p)

    @property
    def pitch(self) -> float:
        return float(self.grid[1] - self.grid[0]) if self.grid.size > 1 else 1.0

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["position_mm", "P_hat"])
            for x, v in zip(self.grid, self.p_hat):
                writer.writerow([f"{x * 1e3:.9e}", f"{v:.9e}"])

    def sidecar_dict(self) -> dict:
        return {
            "residual_norm": self.residual_norm,
            "effective_rank": self.effective_rank,
            "cutoff": self.cutoff,
            "smoothing_rms_m": self.smoothing_rms,
        }

    def write_sidecar(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.sidecar_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def solve_stacked(
    matrices,
    fluxes,
    exposures=None,
    grid: np.ndarray | None = None,
    cutoff: float = DEFAULT_RANK_CUTOFF,
) -> ReconstructionResult:
    """Minimum-norm least-squares solve of the stacked flux equations.

    Each flux vector is divided by its exposure, the banded systems are
    stacked, and the SVD-based solver discards singular values below
    cutoff * sigma_max.  Effective rank and residual norm are reported.
    """
    matrices = list(matrices)
    fluxes = [np.asarray(f, dtype=float) for f in fluxes]
    if not matrices or len(matrices) != len(fluxes):
        raise ConfigurationError("need one flux vector per aperture matrix")
    n = matrices[0].n
    if any(m.n != n for m in matrices):
        raise ConfigurationError("all aperture matrices must share the dimension n")
    for m, f in zip(matrices, fluxes):
        if f.size != m.n:
            raise ConfigurationError(
                f"flux vector length {f.size} does not match matrix rows {m.n}"
            )
    if exposures is None:
        exposures = [1.0] * len(matrices)
    exposures = [float(e) for e in exposures]
    if len(exposures) != len(matrices):
        raise ConfigurationError("need one exposure per flux vector")
    if any(not e > 0 for e in exposures):
        raise ConfigurationError("exposures must be > 0")
    b = np.concatenate([f / e for f, e in zip(fluxes, exposures)])
    if not np.any(b):
        raise NumericalError("all fluxes are zero; reconstruction is degenerate")
    a = np.vstack([m.to_dense() for m in matrices])
    x, _, rank, _ = lstsq(a, b, cond=cutoff, lapack_driver="gelsd")
    residual = float(np.linalg.norm(a @ x - b))
    if grid is None:
        grid = np.arange(n, dtype=float)
    return ReconstructionResult(
        grid=grid,
        p_hat=x,
        residual_norm=residual,
        effective_rank=int(rank),
        cutoff=cutoff,
    )


def gaussian_smooth(result: ReconstructionResult, rms: float) -> ReconstructionResult:
    """Convolve the recovered pattern with a unit-sum Gaussian of rms width.

    rms is in the grid's physical units; the kernel is truncated at 5 sigma
    and renormalized.  rms = 0 returns the result unchanged.
    """
    if rms < 0:
        raise ConfigurationError("smoothing rms must be >= 0")
    if rms == 0:
        return result
    sigma = rms / result.pitch
    radius = int(math.ceil(5 * sigma))
    k = np.arange(-radius, radius + 1)
    kernel = np.exp(-0.5 * (k / sigma) ** 2)
    kernel /= kernel.sum()
    smoothed = np.convolve(result.p_hat, kernel, mode="same")
    return replace(
        result,
        p_hat=smoothed,
        smoothing_rms=math.hypot(result.smoothing_rms, rms),
    )
