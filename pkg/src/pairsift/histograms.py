"""Histogramming kernel and the time-gate distillation mechanism.

All binning uses half-open bins [t, t+width) on the integer picosecond
axis, so results are exact integer identities and bit-stable across runs
and worker counts.

Detector tags are referenced to the nearest trigger: a tag is first
assigned to the last trigger at or before it, and relative times larger
than half the pulse period wrap to the following trigger as negative
offsets.  This keeps a jitter-broadened emission peak in one contiguous
window around zero delay.  Tags arriving before the first trigger are
dropped and counted.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyStreamError, FileFormatError, NoPeakError, NoTriggerError
from .stream import Channel, TagStream

__all__ = [
    "Histogram1D",
    "Histogram2D",
    "GateWindow",
    "PulseView",
    "pulse_view",
    "coincidence_histogram",
    "sync_histogram",
    "threefold_histogram",
    "find_gate",
    "apply_gate",
]

DEFAULT_BIN_PS = 50
DEFAULT_COINC_RANGE_PS = 5000
DEFAULT_THRESHOLD_FRACTION = 0.05
CHUNK = 262_144


@dataclass(frozen=True)
class Histogram1D:
    """Binned counts over a time-delay axis.

    counts[k] covers [origin_ps + k*bin_width_ps, origin_ps + (k+1)*bin_width_ps).
    n_contributing is the number of pairs/events offered to the histogram,
    including any falling outside the binned range.
    """

    bin_width_ps: int
    origin_ps: int
    counts: np.ndarray
    axis: str  # "detector_delay" | "trigger_delay"
    n_contributing: int = 0

    def __eq__(self, other):
        if not isinstance(other, Histogram1D):
            return NotImplemented
        return (self.bin_width_ps == other.bin_width_ps
                and self.origin_ps == other.origin_ps
                and self.axis == other.axis
                and self.n_contributing == other.n_contributing
                and np.array_equal(self.counts, other.counts))

    @property
    def bin_starts(self) -> np.ndarray:
        return self.origin_ps + self.bin_width_ps * np.arange(self.counts.size,
                                                              dtype=np.int64)

    @property
    def bin_centers(self) -> np.ndarray:
        return self.bin_starts + 0.5 * self.bin_width_ps

    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "Histogram1D") -> "Histogram1D":
        if (self.bin_width_ps, self.origin_ps, self.counts.size, self.axis) != (
                other.bin_width_ps, other.origin_ps, other.counts.size, other.axis):
            raise ValueError("histograms have incompatible binning")
        return Histogram1D(self.bin_width_ps, self.origin_ps,
                           self.counts + other.counts, self.axis,
                           self.n_contributing + other.n_contributing)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("bin_start_ps,count\n")
            for start, count in zip(self.bin_starts, self.counts):
                fh.write(f"{int(start)},{int(count)}\n")

    def to_json(self, path) -> None:
        payload = {
            "bin_width_ps": int(self.bin_width_ps),
            "origin_ps": int(self.origin_ps),
            "axis": self.axis,
            "n_contributing": int(self.n_contributing),
            "counts": [int(c) for c in self.counts],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "Histogram1D":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FileFormatError(f"{path}: {exc}") from exc
        return cls(payload["bin_width_ps"], payload["origin_ps"],
                   np.array(payload["counts"], dtype=np.int64),
                   payload["axis"], payload["n_contributing"])


@dataclass(frozen=True)
class Histogram2D:
    """Two-dimensional trigger-referenced coincidence histogram.

    counts[i, j] covers the product bin of (t1 - trigger, t2 - trigger).
    """

    bin_width_ps: tuple
    origin_ps: tuple
    counts: np.ndarray
    n_contributing: int = 0

    def __eq__(self, other):
        if not isinstance(other, Histogram2D):
            return NotImplemented
        return (tuple(self.bin_width_ps) == tuple(other.bin_width_ps)
                and tuple(self.origin_ps) == tuple(other.origin_ps)
                and self.n_contributing == other.n_contributing
                and np.array_equal(self.counts, other.counts))

    def total(self) -> int:
        return int(self.counts.sum())

    def marginal(self, axis: int) -> np.ndarray:
        return self.counts.sum(axis=1 - axis)

    def region_sum(self, t1_lo, t1_hi, t2_lo, t2_hi) -> int:
        """Sum counts over bins fully inside [t1_lo, t1_hi) x [t2_lo, t2_hi)."""
        w1, w2 = self.bin_width_ps
        o1, o2 = self.origin_ps
        i_lo = max(0, -(-(t1_lo - o1) // w1))
        i_hi = min(self.counts.shape[0], (t1_hi - o1) // w1)
        j_lo = max(0, -(-(t2_lo - o2) // w2))
        j_hi = min(self.counts.shape[1], (t2_hi - o2) // w2)
        return int(self.counts[i_lo:i_hi, j_lo:j_hi].sum())

    def to_csv(self, path) -> None:
        w1, w2 = self.bin_width_ps
        o1, o2 = self.origin_ps
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t1_bin_start_ps,t2_bin_start_ps,count\n")
            nz = np.argwhere(self.counts > 0)
            for i, j in nz:
                fh.write(f"{int(o1 + i * w1)},{int(o2 + j * w2)},"
                         f"{int(self.counts[i, j])}\n")

    def to_json(self, path) -> None:
        payload = {
            "bin_width_ps": [int(w) for w in self.bin_width_ps],
            "origin_ps": [int(o) for o in self.origin_ps],
            "n_contributing": int(self.n_contributing),
            "shape": list(self.counts.shape),
            "counts": [int(c) for c in self.counts.ravel()],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class GateWindow:
    """Per-trigger acceptance window for distillation: [offset, offset+width)."""

    offset_ps: int
    width_ps: int

    def __post_init__(self):
        if self.width_ps <= 0:
            raise ValueError("gate width must be positive")

    def contains(self, rel_times: np.ndarray) -> np.ndarray:
        return (rel_times >= self.offset_ps) & (rel_times < self.offset_ps + self.width_ps)

    def to_dict(self) -> dict:
        return {"offset_ps": int(self.offset_ps), "width_ps": int(self.width_ps)}


# ---------------------------------------------------------------------------
# trigger-relative view
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PulseView:
    """Detector tags referenced to their nearest trigger."""

    pulse_index: np.ndarray     # int64, per detector tag
    rel_time: np.ndarray        # int64, signed offset to that trigger
    channels: np.ndarray        # uint8
    truth: Optional[np.ndarray]
    n_pulses: int
    period_ps: int
    dropped_before_first: int


def pulse_view(stream: TagStream) -> PulseView:
    """Assign every detector tag to a trigger (nearest, wrapped)."""
    triggers = stream.trigger_times
    if triggers.size == 0:
        raise NoTriggerError("stream has no trigger events")
    det = stream.detector_mask
    times = stream.times[det]
    channels = stream.channels[det]
    truth = stream.truth[det] if stream.truth is not None else None

    idx = np.searchsorted(triggers, times, side="right") - 1
    keep = idx >= 0
    dropped = int(np.count_nonzero(~keep))
    idx = idx[keep]
    times = times[keep]
    channels = channels[keep]
    if truth is not None:
        truth = truth[keep]

    rel = times - triggers[idx]
    if triggers.size > 1:
        period = int(triggers[1] - triggers[0])
        # wrap offsets in the second half of a period onto the next trigger
        wrap = (rel > period // 2) & (idx < triggers.size - 1)
        rel = np.where(wrap, rel - period, rel)
        idx = np.where(wrap, idx + 1, idx)
    else:
        period = 0
    return PulseView(idx, rel, channels, truth, int(triggers.size), period, dropped)


# ---------------------------------------------------------------------------
# 1D histograms
# ---------------------------------------------------------------------------

def _bin_counts(values: np.ndarray, origin: int, width: int, nbins: int,
                threads: int = 1) -> np.ndarray:
    """Histogram integers into half-open bins; chunked associative merge."""
    def one(chunk):
        shifted = chunk - origin
        ok = (shifted >= 0) & (shifted < width * nbins)
        return np.bincount(shifted[ok] // width, minlength=nbins)

    chunks = [values[i:i + CHUNK] for i in range(0, max(values.size, 1), CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, chunks))
    else:
        parts = [one(c) for c in chunks]
    out = np.zeros(nbins, dtype=np.int64)
    for part in parts:
        out += part
    return out


def _check_binning(range_lo: int, range_hi: int, bin_width: int) -> int:
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    span = range_hi - range_lo
    if span <= 0 or span % bin_width:
        raise ValueError("histogram range must be a positive multiple of bin width")
    return span // bin_width


def _delay_pairs(t1: np.ndarray, t2: np.ndarray, range_ps: int):
    """All (i, j) delays t2[j] - t1[i] in [-range, +range), multi-stop."""
    lo = np.searchsorted(t2, t1 - range_ps, side="left")
    hi = np.searchsorted(t2, t1 + range_ps, side="left")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), 0
    starts = np.repeat(lo, counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    delays = t2[starts + offsets] - np.repeat(t1, counts)
    return delays, total


def coincidence_histogram(stream: TagStream, bin_width_ps: int = DEFAULT_BIN_PS,
                          range_ps: int = DEFAULT_COINC_RANGE_PS,
                          mode: str = "multistop",
                          threads: int = 1) -> Histogram1D:
    """Histogram of detector-1 to detector-2 delays (t2 - t1) within +-range.

    multistop counts every tag pair inside the range (so a flat stream
    reproduces the accidental floor R1*R2*T); startstop pairs each det1 tag
    with only its first following det2 tag.
    """
    t1 = stream.channel_times(Channel.DET1)
    t2 = stream.channel_times(Channel.DET2)
    if t1.size == 0 or t2.size == 0:
        raise EmptyStreamError("coincidence histogram needs events on both detectors")
    nbins = _check_binning(-range_ps, range_ps, bin_width_ps)
    if mode == "multistop":
        total = 0
        counts = np.zeros(nbins, dtype=np.int64)
        for i in range(0, t1.size, CHUNK):
            delays, n = _delay_pairs(t1[i:i + CHUNK], t2, range_ps)
            counts += _bin_counts(delays, -range_ps, bin_width_ps, nbins, threads)
            total += n
    elif mode == "startstop":
        nxt = np.searchsorted(t2, t1, side="left")
        ok = nxt < t2.size
        delays = t2[nxt[ok]] - t1[ok]
        delays = delays[delays < range_ps]
        total = int(delays.size)
        counts = _bin_counts(delays, -range_ps, bin_width_ps, nbins, threads)
    else:
        raise ValueError(f"unknown pairing mode {mode!r}")
    return Histogram1D(bin_width_ps, -range_ps, counts, "detector_delay", total)


def sync_histogram(stream: TagStream, channel: Channel,
                   bin_width_ps: int = DEFAULT_BIN_PS,
                   range_ps=None, threads: int = 1) -> Histogram1D:
    """Histogram of trigger-relative arrival times for one detector channel.

    range_ps is (lo, hi) in signed picoseconds around the trigger; the
    default covers one full period centred on the trigger.
    """
    view = pulse_view(stream)
    if range_ps is None:
        if view.period_ps <= 0:
            raise ValueError("cannot infer a range from a single trigger; "
                             "pass range_ps explicitly")
        lo = -((view.period_ps // 2) // bin_width_ps) * bin_width_ps
        hi = lo + (view.period_ps // bin_width_ps) * bin_width_ps
    else:
        lo, hi = range_ps
    nbins = _check_binning(lo, hi, bin_width_ps)
    sel = view.channels == int(channel)
    rel = view.rel_time[sel]
    in_range = int(np.count_nonzero((rel >= lo) & (rel < hi)))
    counts = _bin_counts(rel, lo, bin_width_ps, nbins, threads)
    return Histogram1D(bin_width_ps, lo, counts, "trigger_delay", in_range)


def threefold_histogram(stream: TagStream, bin_width_ps: int = DEFAULT_BIN_PS,
                        range_ps: int = DEFAULT_COINC_RANGE_PS) -> Histogram2D:
    """Per-pulse 2D histogram of (t1 - trigger, t2 - trigger) tag pairs.

    Every (det1, det2) tag combination assigned to the same pulse and with
    both offsets inside [-range, +range) populates one bin.
    """
    view = pulse_view(stream)
    nbins = _check_binning(-range_ps, range_ps, bin_width_ps)
    in_range = (view.rel_time >= -range_ps) & (view.rel_time < range_ps)
    sel1 = in_range & (view.channels == int(Channel.DET1))
    sel2 = in_range & (view.channels == int(Channel.DET2))
    p1, r1 = view.pulse_index[sel1], view.rel_time[sel1]
    p2, r2 = view.pulse_index[sel2], view.rel_time[sel2]
    order1 = np.argsort(p1, kind="stable")
    order2 = np.argsort(p2, kind="stable")
    p1, r1 = p1[order1], r1[order1]
    p2, r2 = p2[order2], r2[order2]

    lo = np.searchsorted(p2, p1, side="left")
    hi = np.searchsorted(p2, p1, side="right")
    counts_per = hi - lo
    total = int(counts_per.sum())
    grid = np.zeros((nbins, nbins), dtype=np.int64)
    if total:
        starts = np.repeat(lo, counts_per)
        offsets = np.arange(total) - np.repeat(np.cumsum(counts_per) - counts_per,
                                               counts_per)
        i1 = (np.repeat(r1, counts_per) + range_ps) // bin_width_ps
        i2 = (r2[starts + offsets] + range_ps) // bin_width_ps
        np.add.at(grid, (i1, i2), 1)
    return Histogram2D((bin_width_ps, bin_width_ps), (-range_ps, -range_ps),
                       grid, total)


# ---------------------------------------------------------------------------
# gate search and application
# ---------------------------------------------------------------------------

def find_gate(sync_hist: Histogram1D,
              threshold_fraction: float = DEFAULT_THRESHOLD_FRACTION) -> GateWindow:
    """Locate the distillation gate around the dominant emission peak.

    The gate is the contiguous run of bins around the global maximum whose
    counts stay at or above floor + threshold_fraction * (peak - floor),
    symmetrized to equal half-widths about the peak bin.  The floor is the
    median of the bins outside the central 20% of the histogram range.
    """
    if not 0.0 < threshold_fraction < 1.0:
        raise ValueError("threshold_fraction must lie in (0, 1)")
    counts = sync_hist.counts.astype(np.float64)
    n = counts.size
    if n < 5 or counts.max() <= 0:
        raise NoPeakError("histogram is empty or too coarse for gate search")
    central = slice(int(n * 0.4), int(n * 0.6) + 1)
    outside = np.ones(n, dtype=bool)
    outside[central] = False
    floor = float(np.median(counts[outside]))
    peak_idx = int(np.argmax(counts))
    peak = counts[peak_idx]
    if peak < floor + 5.0 * np.sqrt(max(floor, 1.0)):
        raise NoPeakError(
            f"no significant peak: max {peak:.1f} vs floor {floor:.1f}")
    threshold = floor + threshold_fraction * (peak - floor)
    left = peak_idx
    while left > 0 and counts[left - 1] >= threshold:
        left -= 1
    right = peak_idx
    while right < n - 1 and counts[right + 1] >= threshold:
        right += 1
    half_bins = max(peak_idx - left, right - peak_idx)
    width = sync_hist.bin_width_ps
    offset = sync_hist.origin_ps + (peak_idx - half_bins) * width
    return GateWindow(int(offset), int((2 * half_bins + 1) * width))


def apply_gate(stream: TagStream, gate: GateWindow) -> TagStream:
    """Keep only detector tags inside the per-trigger gate; triggers remain."""
    view = pulse_view(stream)
    keep_det = gate.contains(view.rel_time)
    det_mask = stream.detector_mask
    keep = np.ones(len(stream), dtype=bool)
    det_indices = np.flatnonzero(det_mask)
    # pulse_view dropped tags before the first trigger; re-derive their mask
    triggers = stream.trigger_times
    before_first = stream.times[det_mask] < triggers[0]
    full_keep = np.zeros(det_indices.size, dtype=bool)
    full_keep[~before_first] = keep_det
    keep[det_indices] = full_keep
    return stream.select(keep)
