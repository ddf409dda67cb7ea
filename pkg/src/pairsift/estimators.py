"""Correlation and heralding estimators for CW and pulsed tag streams.

CW convention: rates per second and a coincidence window T,
    g2 = Rc / (R1 R2 T),     eta_1 = (Rc - R1 R2 T) / R2.

Pulsed convention: per-pulse click probabilities from trigger-synchronous
counting (a channel either clicks or not within the window of one pulse;
multiplicities collapse to one, as for click detectors),
    g2 = <Nc> / (<N1><N2>),  eta_1 = (<Nc> - <N1><N2>) / <N2>.

Uncertainties are first-order propagation of Poisson/binomial counting
errors.  Negative heralding estimates are reported as-is, never clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyStreamError, NoTriggerError
from .histograms import (
    DEFAULT_THRESHOLD_FRACTION,
    GateWindow,
    find_gate,
    pulse_view,
    sync_histogram,
)
from .stats import MixtureParams, ModePopulation, p_rigorous, p_simple, purity_from_p
from .stream import Channel, TagStream

__all__ = [
    "Measurement",
    "AlphaEstimate",
    "CwCountingSummary",
    "PulsedCountingSummary",
    "AnalysisReport",
    "summarize_cw",
    "summarize_pulsed",
    "g2_cw",
    "g2_pulsed",
    "eta_cw",
    "eta_pulsed",
    "alpha_from_eta",
    "full_report",
]


@dataclass(frozen=True)
class Measurement:
    """A value with a one-sigma statistical uncertainty."""

    value: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def __str__(self):
        return f"{self.value:.6g} +- {self.sigma:.2g}"

    def to_dict(self) -> dict:
        return {"value": self.value, "sigma": self.sigma}


@dataclass(frozen=True)
class AlphaEstimate:
    value: float
    sigma: float
    clipped: bool = False

    def to_dict(self) -> dict:
        return {"value": self.value, "sigma": self.sigma, "clipped": self.clipped}


@dataclass(frozen=True)
class CwCountingSummary:
    """Singles and windowed coincidence rates of a CW stream."""

    r1: float           # singles rate det1, 1/s
    r2: float           # singles rate det2, 1/s
    rc: float           # multi-stop coincidence rate within the window, 1/s
    window_t: float     # coincidence window width, seconds
    duration: float     # acquisition time, seconds
    counts: tuple = (0, 0, 0)   # raw (C1, C2, Cc)


@dataclass(frozen=True)
class PulsedCountingSummary:
    """Per-pulse click statistics within a per-trigger window.

    n1, n2, nc are click probabilities per pulse (at-least-one counting);
    mean_counts holds the plain per-pulse mean tag numbers for each channel.
    """

    n1: float
    n2: float
    nc: float
    pulses: int
    mean_counts: tuple = (0.0, 0.0)
    gate: Optional[GateWindow] = None

    @property
    def counts(self) -> tuple:
        return (round(self.n1 * self.pulses), round(self.n2 * self.pulses),
                round(self.nc * self.pulses))


def summarize_cw(stream: TagStream, window_t_ps: int) -> CwCountingSummary:
    """Count singles and multi-stop coincidences with |t2 - t1| in a window
    of total width window_t_ps centred on zero delay."""
    if window_t_ps <= 0:
        raise ValueError("window_t_ps must be positive")
    t1 = stream.channel_times(Channel.DET1)
    t2 = stream.channel_times(Channel.DET2)
    if t1.size == 0 and t2.size == 0:
        raise EmptyStreamError("CW summary needs detector events")
    half_lo = window_t_ps // 2
    half_hi = window_t_ps - half_lo
    lo = np.searchsorted(t2, t1 - half_lo, side="left")
    hi = np.searchsorted(t2, t1 + half_hi, side="left")
    cc = int((hi - lo).sum())
    meta = stream.meta
    if meta is not None and getattr(meta, "duration_ps", None):
        duration_s = meta.duration_ps * 1e-12
    else:
        duration_s = max(stream.span_ps(), 1) * 1e-12
    return CwCountingSummary(
        r1=t1.size / duration_s,
        r2=t2.size / duration_s,
        rc=cc / duration_s,
        window_t=window_t_ps * 1e-12,
        duration=duration_s,
        counts=(int(t1.size), int(t2.size), cc),
    )


def summarize_pulsed(stream: TagStream, gate: Optional[GateWindow] = None
                     ) -> PulsedCountingSummary:
    """Per-pulse singles and coincidence click probabilities.

    With a gate, only tags inside the per-trigger window count; without,
    the whole pulse period is the window.
    """
    view = pulse_view(stream)
    if gate is not None:
        in_window = gate.contains(view.rel_time)
    else:
        in_window = np.ones(view.rel_time.size, dtype=bool)
    pulses = view.n_pulses
    sel1 = in_window & (view.channels == int(Channel.DET1))
    sel2 = in_window & (view.channels == int(Channel.DET2))
    p1 = view.pulse_index[sel1]
    p2 = view.pulse_index[sel2]
    u1 = np.unique(p1)
    u2 = np.unique(p2)
    both = np.intersect1d(u1, u2, assume_unique=True)
    return PulsedCountingSummary(
        n1=u1.size / pulses,
        n2=u2.size / pulses,
        nc=both.size / pulses,
        pulses=pulses,
        mean_counts=(p1.size / pulses, p2.size / pulses),
        gate=gate,
    )


def _ratio_sigma(value: float, counts) -> float:
    """Relative Poisson error of a product/ratio of counted quantities."""
    rel2 = sum(1.0 / c for c in counts if c > 0)
    return abs(value) * math.sqrt(rel2) if rel2 else 0.0


def g2_cw(summary: CwCountingSummary) -> Measurement:
    """Zero-delay second-order correlation, CW convention."""
    if summary.r1 <= 0 or summary.r2 <= 0 or summary.window_t <= 0:
        raise ZeroDivisionError("g2 needs nonzero singles rates and window")
    value = summary.rc / (summary.r1 * summary.r2 * summary.window_t)
    return Measurement(value, _ratio_sigma(value, summary.counts))


def g2_pulsed(summary: PulsedCountingSummary) -> Measurement:
    """Zero-delay second-order correlation, pulsed convention."""
    if summary.n1 <= 0 or summary.n2 <= 0:
        raise ZeroDivisionError("g2 needs nonzero singles probabilities")
    value = summary.nc / (summary.n1 * summary.n2)
    return Measurement(value, _ratio_sigma(value, summary.counts))


def eta_cw(summary: CwCountingSummary):
    """Heralding efficiencies (accidentals subtracted), CW convention."""
    if summary.r1 <= 0 or summary.r2 <= 0:
        raise ZeroDivisionError("heralding needs nonzero singles rates")
    racc = summary.r1 * summary.r2 * summary.window_t
    c1, c2, cc = summary.counts
    dur = summary.duration
    var_rc = cc / dur**2
    var_r1 = c1 / dur**2
    var_r2 = c2 / dur**2

    def one(r_other, var_other, var_self):
        # eta = rc/r_other - r_self*T
        value = (summary.rc - racc) / r_other
        var = (var_rc / r_other**2
               + summary.window_t**2 * var_self
               + (summary.rc / r_other**2) ** 2 * var_other)
        return Measurement(value, math.sqrt(var))

    return one(summary.r2, var_r2, var_r1), one(summary.r1, var_r1, var_r2)


def eta_pulsed(summary: PulsedCountingSummary):
    """Heralding efficiencies (accidentals subtracted), pulsed convention."""
    if summary.n1 <= 0 or summary.n2 <= 0:
        raise ZeroDivisionError("heralding needs nonzero singles probabilities")
    pulses = summary.pulses
    var_n1 = summary.n1 * (1 - summary.n1) / pulses
    var_n2 = summary.n2 * (1 - summary.n2) / pulses
    var_nc = summary.nc * (1 - summary.nc) / pulses
    out = []
    for n_other, var_other, var_self in ((summary.n2, var_n2, var_n1),
                                         (summary.n1, var_n1, var_n2)):
        value = (summary.nc - summary.n1 * summary.n2) / n_other
        var = (var_nc / n_other**2
               + var_self
               + (summary.nc / n_other**2) ** 2 * var_other)
        out.append(Measurement(value, math.sqrt(var)))
    return tuple(out)


def alpha_from_eta(eta, eta_det: float) -> AlphaEstimate:
    """Pair fraction alpha = eta / eta_det; values above 1 are clipped and
    flagged."""
    if not 0.0 < eta_det <= 1.0:
        raise ValueError("eta_det must lie in (0, 1]")
    if isinstance(eta, Measurement):
        value, sigma = eta.value, eta.sigma
    else:
        value, sigma = float(eta), 0.0
    alpha = value / eta_det
    clipped = alpha > 1.0
    return AlphaEstimate(min(alpha, 1.0), sigma / eta_det, clipped)


# ---------------------------------------------------------------------------
# full analysis pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisReport:
    """Complete analysis of one tag stream."""

    regime: str
    g2: Measurement
    eta1: Measurement
    eta2: Measurement
    alpha_est: AlphaEstimate
    n0_est: Optional[Measurement]
    purity_simple: Optional[float]
    purity_rigorous: Optional[float]
    eta_det: tuple
    modes: Optional[int]
    gate: Optional[GateWindow] = None
    ungated: dict = field(default_factory=dict)
    notes: tuple = ()

    def to_dict(self) -> dict:
        out = {
            "regime": self.regime,
            "g2": self.g2.to_dict(),
            "eta1": self.eta1.to_dict(),
            "eta2": self.eta2.to_dict(),
            "alpha_est": self.alpha_est.to_dict(),
            "n0_est": None if self.n0_est is None else self.n0_est.to_dict(),
            "purity_simple": self.purity_simple,
            "purity_rigorous": self.purity_rigorous,
            "eta_det": list(self.eta_det),
            "modes": self.modes,
            "gate": None if self.gate is None else self.gate.to_dict(),
            "ungated": {k: v.to_dict() for k, v in self.ungated.items()},
            "notes": list(self.notes),
        }
        return out

    def to_text(self) -> str:
        lines = [f"regime            : {self.regime}"]
        if self.gate is not None:
            lines.append(f"gate              : offset {self.gate.offset_ps} ps, "
                         f"width {self.gate.width_ps} ps")
        lines += [
            f"g2                : {self.g2}",
            f"heralding eta1    : {self.eta1}",
            f"heralding eta2    : {self.eta2}",
        ]
        for key, meas in self.ungated.items():
            lines.append(f"{('ungated ' + key):<18}: {meas}")
        alpha_note = " (clipped)" if self.alpha_est.clipped else ""
        lines.append(f"alpha estimate    : {self.alpha_est.value:.6g} "
                     f"+- {self.alpha_est.sigma:.2g}{alpha_note}")
        if self.n0_est is not None:
            lines.append(f"N0 estimate       : {self.n0_est}")
        if self.purity_simple is not None:
            lines.append(f"purity (simple)   : {self.purity_simple:.6g}")
        if self.purity_rigorous is not None:
            lines.append(f"purity (rigorous) : {self.purity_rigorous:.6g}")
        for note in self.notes:
            lines.append(f"note              : {note}")
        return "\n".join(lines)


def _normalize_eta_det(eta_det) -> tuple:
    if np.isscalar(eta_det):
        return (float(eta_det), float(eta_det))
    return (float(eta_det[0]), float(eta_det[1]))


def _purities(alpha: AlphaEstimate, n0: Optional[Measurement], d: Optional[int]):
    if n0 is None or d is None or n0.value <= 0:
        return None, None
    params = MixtureParams(alpha=alpha.value, n0=n0.value, d=d)
    simple = purity_from_p(p_simple(params), d)
    rigorous = purity_from_p(p_rigorous(params.to_population()), d)
    return simple, rigorous


def full_report(stream: TagStream, eta_det, d: Optional[int] = None, *,
                gate: Optional[GateWindow] = None,
                use_gate: bool = True,
                window_t_ps: Optional[int] = None,
                cell_ps: Optional[int] = None,
                threshold_fraction: float = DEFAULT_THRESHOLD_FRACTION,
                sync_bin_ps: int = 10,
                sync_range_ps: tuple = (-2000, 8000)) -> AnalysisReport:
    """Run the complete estimator chain on a stream.

    Pulsed streams are gated (the gate is searched on the summed
    trigger-synchronous histogram unless one is supplied) and the report
    carries ungated heralding/g2 alongside for comparison.  CW streams are
    windowed with the configured coincidence window.  alpha and N0 are
    recovered with the supplied detection efficiency, then converted to
    the two purity models.
    """
    eta_det = _normalize_eta_det(eta_det)
    meta = stream.meta
    if d is None and meta is not None:
        d = meta.population.d
    regime = getattr(meta, "regime", None)
    if regime is None:
        regime = "pulsed" if stream.trigger_times.size else "cw"
    notes = []

    if regime == "pulsed":
        if stream.trigger_times.size == 0:
            raise NoTriggerError("pulsed analysis needs trigger events")
        if gate is None and use_gate:
            combined = (sync_histogram(stream, Channel.DET1, sync_bin_ps, sync_range_ps)
                        + sync_histogram(stream, Channel.DET2, sync_bin_ps, sync_range_ps))
            gate = find_gate(combined, threshold_fraction)
        gated = summarize_pulsed(stream, gate)
        ungated = summarize_pulsed(stream, None)
        main = gated if use_gate else ungated
        e1, e2 = eta_pulsed(main)
        g2 = g2_pulsed(main)
        ue1, ue2 = eta_pulsed(ungated)
        extra = {"eta1": ue1, "eta2": ue2, "g2": g2_pulsed(ungated)} if use_gate else {}
        alpha = alpha_from_eta(
            Measurement(0.5 * (e1.value + e2.value),
                        0.5 * math.hypot(e1.sigma, e2.sigma)),
            0.5 * (eta_det[0] + eta_det[1]))
        c1, c2 = main.mean_counts
        n0_val = 0.5 * (c1 / eta_det[0] + c2 / eta_det[1])
        n0_sig = 0.5 * math.hypot(
            math.sqrt(max(c1 * main.pulses, 1)) / main.pulses / eta_det[0],
            math.sqrt(max(c2 * main.pulses, 1)) / main.pulses / eta_det[1])
        n0 = Measurement(n0_val, n0_sig)
        purity_s, purity_r = _purities(alpha, n0, d)
        return AnalysisReport(regime="pulsed", g2=g2, eta1=e1, eta2=e2,
                              alpha_est=alpha, n0_est=n0,
                              purity_simple=purity_s, purity_rigorous=purity_r,
                              eta_det=eta_det, modes=d,
                              gate=main.gate, ungated=extra, notes=tuple(notes))

    # CW
    if window_t_ps is None:
        window_t_ps = getattr(meta, "coincidence_window_ps", None)
        if window_t_ps is None:
            raise ValueError("CW analysis needs window_t_ps (no config echo present)")
    if cell_ps is None:
        cell_ps = getattr(meta, "coherence_cell_ps", None)
    summary = summarize_cw(stream, window_t_ps)
    e1, e2 = eta_cw(summary)
    g2 = g2_cw(summary)
    alpha = alpha_from_eta(
        Measurement(0.5 * (e1.value + e2.value),
                    0.5 * math.hypot(e1.sigma, e2.sigma)),
        0.5 * (eta_det[0] + eta_det[1]))
    n0 = None
    if cell_ps:
        c1, c2, _ = summary.counts
        rate_mean = 0.5 * (summary.r1 / eta_det[0] + summary.r2 / eta_det[1])
        n0_val = rate_mean * cell_ps * 1e-12
        rel = 1.0 / math.sqrt(max(c1 + c2, 1))
        n0 = Measurement(n0_val, n0_val * rel)
    else:
        notes.append("no coherence-cell duration available; N0 and purity omitted")
    purity_s, purity_r = _purities(alpha, n0, d) if n0 else (None, None)
    return AnalysisReport(regime="cw", g2=g2, eta1=e1, eta2=e2,
                          alpha_est=alpha, n0_est=n0,
                          purity_simple=purity_s, purity_rigorous=purity_r,
                          eta_det=eta_det, modes=d, notes=tuple(notes))
