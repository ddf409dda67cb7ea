"""Relative pair-generation efficiency of an X-cut lithium-niobate film
across its four pump/photon polarization configurations.

efficiency = chi_eff^2 * L^2 * sinc^2(pi*L / (2*L_coh))

with the unnormalized sinc(x) = sin(x)/x, so the efficiency vanishes
exactly at L = 2*L_coh (and every even multiple).  Coherence lengths are
tabulated inputs for the degenerate point; they are not recomputed from
dispersion data, but coherence_length_um provides a hook to derive one
from user-supplied refractive indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NonlinearTensor",
    "PolarizationConfig",
    "default_configs",
    "efficiency",
    "efficiency_table",
    "thickness_sweep",
    "coherence_length_um",
]


@dataclass(frozen=True)
class NonlinearTensor:
    """Independent nonzero elements of the LiNbO3 second-order tensor, pm/V."""

    d22: float = 2.1
    d31: float = -4.3
    d33: float = -34.0

    def __post_init__(self):
        for name in ("d22", "d31", "d33"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class PolarizationConfig:
    """One pump -> signal/idler polarization configuration."""

    label: str                  # "o->oo" | "o->oe" | "e->oo" | "e->ee"
    chi_eff: float              # pm/V
    l_coh_um: float
    phase_matching_type: str    # "type-0" | "type-I" | "type-II"

    def __post_init__(self):
        if self.l_coh_um <= 0:
            raise ValueError("coherence length must be positive")


def default_configs(tensor: NonlinearTensor = NonlinearTensor()):
    """The four configurations of an X-cut film with tabulated coherence
    lengths at the degenerate point."""
    return (
        PolarizationConfig("o->oo", tensor.d22, 2.92, "type-0"),
        PolarizationConfig("o->oe", tensor.d31, 2.05, "type-II"),
        PolarizationConfig("e->oo", tensor.d31, 185.0, "type-I"),
        PolarizationConfig("e->ee", tensor.d33, 3.41, "type-0"),
    )


def _sinc(x):
    """Unnormalized sinc(x) = sin(x)/x with sinc(0) = 1."""
    return np.sinc(np.asarray(x) / np.pi)


def efficiency(config: PolarizationConfig, thickness_um: float) -> float:
    """Relative pair-generation efficiency at the given film thickness,
    in (pm/V)^2 um^2."""
    if thickness_um <= 0:
        raise ValueError("thickness must be positive")
    x = math.pi * thickness_um / (2.0 * config.l_coh_um)
    s = float(_sinc(x))
    return config.chi_eff**2 * thickness_um**2 * s * s


def efficiency_table(configs, thickness_um: float):
    """All efficiencies normalized to the largest, sorted descending.

    Returns a list of (config, efficiency, normalized) tuples.
    """
    rows = [(cfg, efficiency(cfg, thickness_um)) for cfg in configs]
    top = max(eff for _, eff in rows)
    if top <= 0:
        scale = 0.0
    else:
        scale = 1.0 / top
    out = [(cfg, eff, eff * scale) for cfg, eff in rows]
    out.sort(key=lambda row: row[1], reverse=True)
    return out


def thickness_sweep(configs, l_min_um: float, l_max_um: float, steps: int):
    """Sample efficiency(L) for every configuration on a uniform grid.

    Returns (thickness array, {label: efficiency array}).
    """
    if steps < 2:
        raise ValueError("need at least 2 sweep points")
    if not 0 <= l_min_um < l_max_um:
        raise ValueError("need 0 <= l_min < l_max")
    grid = np.linspace(l_min_um, l_max_um, steps)
    curves = {}
    for cfg in configs:
        x = np.pi * grid / (2.0 * cfg.l_coh_um)
        s = _sinc(x)
        curves[cfg.label] = cfg.chi_eff**2 * grid**2 * s * s
    return grid, curves


def coherence_length_um(lambda_pump_um: float, n_pump: float,
                        n_signal: float, n_idler: float) -> float:
    """Coherence length pi/|delta_k| for collinear degenerate down-conversion
    (signal and idler at twice the pump wavelength)."""
    if lambda_pump_um <= 0:
        raise ValueError("pump wavelength must be positive")
    delta_k = (2.0 * math.pi / lambda_pump_um) * (n_pump - 0.5 * (n_signal + n_idler))
    if delta_k == 0:
        return math.inf
    return math.pi / abs(delta_k)
