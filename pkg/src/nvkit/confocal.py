"""Confocal PL maps, Gaussian slice fits, and NV-density estimation.

Density estimation compares the ensemble PL rate against a single emitter at
the same sub-saturation power. The Gaussian method divides by the product of
the PSF Gaussian integrals A_i = w_i*sqrt(pi/(4 ln 2)); the uniform-spheroid
alternative divides by (4 pi/3) w_x w_y w_z. Their ratio is the constant
(4 pi/3) / (pi/(4 ln 2))^(3/2) = 3.4729 for any PSF.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .constants import CARBON_DENSITY_PER_CM3
from .fitting import FitError, levenberg_marquardt

GAUSS_INTEGRAL_PER_FWHM = float(np.sqrt(np.pi / (4.0 * np.log(2.0))))


class ConfocalError(ValueError):
    """Invalid map, slice, or density input."""


class MapFormatError(ConfocalError):
    """Map file violates the plmap v1 format; message carries the line."""


@dataclass(frozen=True)
class PLMap:
    """PL rate grid over 2 or 3 spatial axes (um), with excitation power."""

    axes: tuple
    counts: np.ndarray
    power: float

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        counts = np.asarray(self.counts, dtype=float)
        if len(axes) not in (2, 3):
            raise ConfocalError("PLMap supports 2 or 3 axes")
        if counts.shape != tuple(len(a) for a in axes):
            raise ConfocalError("counts shape does not match axis lengths")
        for a in axes:
            if not np.all(np.diff(a) > 0):
                raise ConfocalError("axis coordinates must be strictly increasing")
        if np.any(counts < 0):
            raise ConfocalError("counts must be nonnegative")
        if self.power <= 0:
            raise ConfocalError("excitation power must be positive")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "counts", counts)

    @property
    def ndim(self) -> int:
        return len(self.axes)


@dataclass
class GaussianSliceFit:
    """1D Gaussian profile: baseline + amplitude*exp(-4 ln2 (x-center)^2/fwhm^2)."""

    amplitude: float
    center: float
    fwhm: float
    baseline: float
    errors: np.ndarray | None = None
    converged: bool = True

    def __post_init__(self):
        if self.fwhm <= 0:
            raise ConfocalError("fwhm must be positive")
        if self.amplitude < 0:
            raise ConfocalError("amplitude must be nonnegative")


@dataclass(frozen=True)
class PsfModel:
    """Confocal point-spread function FWHMs (um)."""

    w_x: float
    w_y: float
    w_z: float

    def __post_init__(self):
        if min(self.w_x, self.w_y, self.w_z) <= 0:
            raise ConfocalError("PSF widths must be positive")


class DensityMethod(Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class DensityEstimate:
    """NV concentration as number density (um^-3) and ppb of carbon sites."""

    number_density: float
    ppb: float
    method: DensityMethod

    def __post_init__(self):
        if self.number_density < 0 or self.ppb < 0:
            raise ConfocalError("density must be nonnegative")


def number_density_to_ppb(per_um3: float) -> float:
    """um^-3 -> parts-per-billion of the diamond carbon density."""
    per_cm3 = per_um3 * 1e12
    return per_cm3 / CARBON_DENSITY_PER_CM3 * 1e9


def ppb_to_number_density(ppb: float) -> float:
    """Inverse of :func:`number_density_to_ppb`."""
    per_cm3 = ppb / 1e9 * CARBON_DENSITY_PER_CM3
    return per_cm3 / 1e12


def gaussian_profile(x, amplitude, center, fwhm, baseline):
    x = np.asarray(x, dtype=float)
    return baseline + amplitude * np.exp(-4.0 * np.log(2.0) * (x - center) ** 2 / fwhm ** 2)


def extract_slice(plmap: PLMap, axis: int, index):
    """1D slice along ``axis`` at fixed indices of the remaining axes."""
    if not 0 <= axis < plmap.ndim:
        raise ConfocalError(f"axis {axis} out of range for a {plmap.ndim}D map")
    index = tuple(np.atleast_1d(index).astype(int))
    if len(index) != plmap.ndim - 1:
        raise ConfocalError("index must fix all axes except the sliced one")
    slicer = list(index)
    slicer.insert(axis, slice(None))
    return plmap.axes[axis], plmap.counts[tuple(slicer)]


def fit_gaussian_slice(plmap: PLMap, axis: int, index,
                       init: GaussianSliceFit | None = None) -> GaussianSliceFit:
    """Fit a Gaussian profile to one map slice (at least 6 points)."""
    coords, values = extract_slice(plmap, axis, index)
    if len(coords) < 6:
        raise ConfocalError("slice needs at least 6 points")
    if np.ptp(values) <= 0:
        raise FitError("slice is flat; nothing to fit")

    if init is not None:
        x0 = [init.amplitude, init.center, init.fwhm, init.baseline]
    else:
        baseline0 = float(values.min())
        amp0 = float(values.max() - baseline0)
        center0 = float(coords[np.argmax(values)])
        half = baseline0 + 0.5 * amp0
        above = coords[values >= half]
        width0 = float(above.max() - above.min()) if above.size > 1 else \
            float(coords[1] - coords[0])
        x0 = [amp0, center0, max(width0, float(coords[1] - coords[0])), baseline0]

    span = float(coords[-1] - coords[0])

    def residuals(p):
        return gaussian_profile(coords, *p) - values

    bounds = [(0.0, np.inf), (coords[0] - span, coords[-1] + span),
              (1e-6 * span, 10.0 * span), (-np.inf, np.inf)]
    fit = levenberg_marquardt(residuals, x0, bounds=bounds)
    amp, center, fwhm, baseline = fit.params
    return GaussianSliceFit(amplitude=float(amp), center=float(center),
                            fwhm=float(fwhm), baseline=float(baseline),
                            errors=fit.stderr, converged=fit.converged)


def estimate_density(c_ensemble: float, c_single: float, psf: PsfModel,
                     method: DensityMethod = DensityMethod.GAUSSIAN) -> DensityEstimate:
    """NV density from ensemble vs single-emitter PL rates at equal power.

    Both rates must be taken below saturation (caller's responsibility).
    """
    if c_ensemble < 0 or c_single <= 0:
        raise ConfocalError("count rates must be positive")
    ratio = c_ensemble / c_single
    if method is DensityMethod.GAUSSIAN:
        volume = (psf.w_x * psf.w_y * psf.w_z) * GAUSS_INTEGRAL_PER_FWHM ** 3
    elif method is DensityMethod.UNIFORM:
        volume = (4.0 * np.pi / 3.0) * psf.w_x * psf.w_y * psf.w_z
    else:
        raise ConfocalError(f"unknown density method {method!r}")
    per_um3 = ratio / volume
    return DensityEstimate(number_density=per_um3,
                           ppb=number_density_to_ppb(per_um3), method=method)


def gaussian_uniform_ratio() -> float:
    """PSF-independent ratio of the Gaussian to uniform-spheroid estimates."""
    return float((4.0 * np.pi / 3.0) / GAUSS_INTEGRAL_PER_FWHM ** 3)


def enhancement_ratio(region_a: float, region_b: float) -> float:
    """PL (or density) enhancement of region A over region B."""
    if region_b <= 0:
        raise ConfocalError("reference region rate must be positive")
    return region_a / region_b


# ---------------------------------------------------------------------------
# plmap v1 file format

_AXIS_NAMES = ("x", "y", "z")


def save_map(path, plmap: PLMap) -> None:
    """Write the plmap v1 format; the loader round-trips it bit-identically."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# plmap v1 dims={plmap.ndim} power_mW={float(plmap.power)!r}\n")
        for name, axis in zip(_AXIS_NAMES, plmap.axes):
            values = " ".join(repr(float(v)) for v in axis)
            fh.write(f"# axis {name}: {len(axis)} {values}\n")
        flat = plmap.counts.ravel(order="C")
        per_row = len(plmap.axes[-1])
        for start in range(0, flat.size, per_row):
            fh.write(" ".join(repr(float(v)) for v in flat[start:start + per_row]) + "\n")


def load_map(path) -> PLMap:
    """Parse the plmap v1 format, reporting offending line numbers."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines:
        raise MapFormatError(f"{path}:1: empty file")

    header = lines[0].split()
    if header[:3] != ["#", "plmap", "v1"] or len(header) != 5:
        raise MapFormatError(f"{path}:1: malformed plmap header: {lines[0].strip()!r}")
    try:
        dims = int(header[3].split("=", 1)[1])
        power = float(header[4].split("=", 1)[1])
    except (IndexError, ValueError):
        raise MapFormatError(f"{path}:1: malformed dims/power fields") from None
    if dims not in (2, 3):
        raise MapFormatError(f"{path}:1: dims must be 2 or 3, got {dims}")

    axes = []
    for k in range(dims):
        lineno = 2 + k
        if lineno - 1 >= len(lines):
            raise MapFormatError(f"{path}:{lineno}: missing axis line")
        parts = lines[lineno - 1].split()
        expect = ["#", "axis", f"{_AXIS_NAMES[k]}:"]
        if parts[:3] != expect:
            raise MapFormatError(
                f"{path}:{lineno}: expected axis {_AXIS_NAMES[k]} header, got "
                f"{lines[lineno - 1].strip()!r}")
        try:
            n = int(parts[3])
            values = np.array([float(v) for v in parts[4:]])
        except (IndexError, ValueError):
            raise MapFormatError(f"{path}:{lineno}: bad axis values") from None
        if len(values) != n:
            raise MapFormatError(
                f"{path}:{lineno}: axis declares {n} values but has {len(values)}")
        if not np.all(np.diff(values) > 0):
            raise MapFormatError(
                f"{path}:{lineno}: axis {_AXIS_NAMES[k]} is not strictly increasing")
        axes.append(values)

    per_row = len(axes[-1])
    rows = []
    for lineno in range(dims + 2, len(lines) + 1):
        line = lines[lineno - 1]
        if not line.strip():
            continue
        cols = line.split()
        if len(cols) != per_row:
            raise MapFormatError(
                f"{path}:{lineno}: ragged row, expected {per_row} values, got {len(cols)}")
        try:
            rows.append([float(c) for c in cols])
        except ValueError:
            raise MapFormatError(f"{path}:{lineno}: non-numeric count value") from None

    flat = np.array(rows).ravel()
    shape = tuple(len(a) for a in axes)
    if flat.size != int(np.prod(shape)):
        raise MapFormatError(
            f"{path}: expected {int(np.prod(shape))} count values, got {flat.size}")
    counts = flat.reshape(shape, order="C")
    return PLMap(axes=tuple(axes), counts=counts, power=power)
