"""Fiber-spectroscopy calibration and spectral mode counting.

A dispersive fiber maps wavelength onto the arrival-time difference of a
photon pair.  Anchor points pair known delays with known wavelengths
(filter cut-ons, their energy-conservation conjugates, and the degenerate
point); a least-squares quadratic then converts delay to wavelength.  The
number of frequency modes is the ratio of the full spectral width to the
correlation width set by the pump linewidth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FileFormatError, NonPhysicalError, RankDeficientError

__all__ = [
    "C_NM_THZ",
    "CalibrationPoint",
    "CalibrationFit",
    "SpectralSummary",
    "conjugate_wavelength",
    "fit_calibration",
    "band_to_thz",
    "fedorov_modes",
    "read_calibration_csv",
    "write_calibration_csv",
]

# speed of light as wavelength(nm) * frequency(THz)
C_NM_THZ = 299_792.458


@dataclass(frozen=True)
class CalibrationPoint:
    delay_ps: float
    wavelength_nm: float

    def __post_init__(self):
        if self.wavelength_nm <= 0:
            raise ValueError("wavelength must be positive")


@dataclass(frozen=True)
class CalibrationFit:
    """Quadratic delay -> wavelength map with fit diagnostics."""

    coefficients: tuple          # (a2, a1, a0): wl = a2 t^2 + a1 t + a0
    residuals_nm: tuple
    rms_residual_nm: float

    def wavelength(self, delay_ps):
        a2, a1, a0 = self.coefficients
        t = np.asarray(delay_ps, dtype=float)
        out = a2 * t * t + a1 * t + a0
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SpectralSummary:
    """Spectral band and Fedorov-ratio mode count."""

    band_nm: tuple               # (lambda_min, lambda_max)
    delta_nu_thz: float          # full spectral width
    delta_nu_corr_thz: float     # correlation (pump) width
    mode_count_raw: float
    mode_count: int

    @classmethod
    def from_band(cls, band_nm, delta_nu_corr_thz: float) -> "SpectralSummary":
        lo, hi = sorted(band_nm)
        if lo <= 0:
            raise NonPhysicalError("wavelengths must be positive")
        width = band_to_thz((lo, hi))
        raw, rounded = fedorov_modes(width, delta_nu_corr_thz)
        if raw < 1.0:
            raise NonPhysicalError("spectral width below the correlation width")
        return cls((lo, hi), width, delta_nu_corr_thz, raw, rounded)


def conjugate_wavelength(lambda_nm: float, pump_nm: float) -> float:
    """Energy-conservation partner wavelength: 1/l_c = 1/l_pump - 1/l."""
    if pump_nm <= 0:
        raise NonPhysicalError("pump wavelength must be positive")
    if lambda_nm <= pump_nm:
        raise NonPhysicalError(
            f"wavelength {lambda_nm} nm must exceed the pump ({pump_nm} nm)")
    inv = 1.0 / pump_nm - 1.0 / lambda_nm
    return 1.0 / inv


def fit_calibration(points) -> CalibrationFit:
    """Least-squares quadratic through >= 3 calibration points.

    Raises RankDeficientError when fewer than three distinct delays are
    supplied (the quadratic would be underdetermined).
    """
    pts = list(points)
    if len(pts) < 3:
        raise RankDeficientError("need at least 3 calibration points")
    delays = np.array([p.delay_ps for p in pts], dtype=float)
    wls = np.array([p.wavelength_nm for p in pts], dtype=float)
    if np.unique(delays).size < 3:
        raise RankDeficientError("need at least 3 distinct delays")
    coeffs = np.polyfit(delays, wls, deg=2)
    fitted = np.polyval(coeffs, delays)
    residuals = wls - fitted
    rms = float(np.sqrt(np.mean(residuals**2)))
    return CalibrationFit(tuple(float(c) for c in coeffs),
                          tuple(float(r) for r in residuals), rms)


def band_to_thz(band_nm) -> float:
    """Spectral width in THz of a wavelength band: c * |1/l_min - 1/l_max|."""
    lo, hi = band_nm
    if lo <= 0 or hi <= 0:
        raise NonPhysicalError("wavelengths must be positive")
    return abs(C_NM_THZ / lo - C_NM_THZ / hi)


def fedorov_modes(delta_nu_thz: float, delta_nu_corr_thz: float):
    """Mode count as the width ratio R = delta_nu / delta_nu_corr.

    Returns (raw ratio, nearest integer for reporting).
    """
    if delta_nu_thz <= 0 or delta_nu_corr_thz <= 0:
        raise NonPhysicalError("spectral widths must be positive")
    raw = delta_nu_thz / delta_nu_corr_thz
    return raw, round(raw)


# ---------------------------------------------------------------------------
# CSV I/O for calibration points
# ---------------------------------------------------------------------------

def read_calibration_csv(path):
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().lower()
        if header.replace(" ", "") not in ("delay_ps,wavelength_nm",):
            raise FileFormatError(
                f"{path}: expected header 'delay_ps,wavelength_nm', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FileFormatError(f"{path}:{lineno}: malformed row {line!r}")
            try:
                points.append(CalibrationPoint(float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
    return points


def write_calibration_csv(points, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("delay_ps,wavelength_nm\n")
        for p in points:
            fh.write(f"{p.delay_ps:g},{p.wavelength_nm:g}\n")
