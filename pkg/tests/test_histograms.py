"""Histogramming kernel, gate search and gate application."""

import math

import numpy as np
import pytest

from pairsift import (
    Channel,
    GateWindow,
    Histogram1D,
    apply_gate,
    coincidence_histogram,
    find_gate,
    simulate,
    split_truth,
    sync_histogram,
    threefold_histogram,
)
from pairsift.errors import EmptyStreamError, NoPeakError, NoTriggerError
from pairsift.histograms import pulse_view
from pairsift.stream import Origin, TagStream

from conftest import cw_config, pulsed_config


def toy_stream(times1, times2, triggers=(), truth=None):
    times = list(times1) + list(times2) + list(triggers)
    channels = ([int(Channel.DET1)] * len(times1)
                + [int(Channel.DET2)] * len(times2)
                + [int(Channel.TRIGGER)] * len(triggers))
    return TagStream.build(np.array(times, dtype=np.int64),
                           np.array(channels, dtype=np.uint8), truth)


# ---------------------------------------------------------------------------
# coincidence histogram
# ---------------------------------------------------------------------------

def test_coincidence_requires_both_channels():
    s = toy_stream([1, 2, 3], [])
    with pytest.raises(EmptyStreamError):
        coincidence_histogram(s)


def test_coincidence_zero_delay_pairs():
    s = toy_stream([100, 200, 300], [100, 200, 300])
    hist = coincidence_histogram(s, bin_width_ps=10, range_ps=100)
    zero_bin = (0 - hist.origin_ps) // hist.bin_width_ps
    assert hist.counts[zero_bin] == 3
    # multi-stop also pairs (200,100) and (300,200) at -100 ps; +100 ps is
    # outside the half-open window
    assert hist.counts[0] == 2
    assert hist.total() == hist.n_contributing == 5


def test_coincidence_multistop_counts_every_pair():
    # two det1 and two det2 tags all within range: 4 pairs
    s = toy_stream([0, 10], [5, 15])
    hist = coincidence_histogram(s, bin_width_ps=5, range_ps=50)
    assert hist.total() == 4
    delays = {5, 15, -5}
    starts = set(hist.bin_starts[hist.counts > 0].tolist())
    assert starts == delays  # +5 occurs twice, binned at 5 and 15 and -5


def test_coincidence_total_conservation_on_simulation():
    cfg = cw_config(1e-7, 2e-6, 100, duration_ps=500_000_000_000, seed=31)
    stream = simulate(cfg)
    hist = coincidence_histogram(stream, bin_width_ps=100, range_ps=5000)
    assert hist.total() == hist.n_contributing


def test_coincidence_half_open_edges():
    s = toy_stream([0], [100])
    hist = coincidence_histogram(s, bin_width_ps=50, range_ps=100)
    # delay +100 is outside the half-open [-100, 100) window
    assert hist.total() == 0


def test_coincidence_startstop_mode():
    s = toy_stream([0, 10], [5, 15])
    hist = coincidence_histogram(s, bin_width_ps=5, range_ps=50, mode="startstop")
    # each det1 tag pairs only with its first following det2 tag
    assert hist.total() == 2
    starts = sorted(hist.bin_starts[hist.counts > 0].tolist())
    assert starts == [5]


def test_coincidence_bit_stable_across_threads():
    cfg = cw_config(1e-7, 2e-6, 100, duration_ps=500_000_000_000, seed=32)
    stream = simulate(cfg)
    h1 = coincidence_histogram(stream, 100, 5000, threads=1)
    h4 = coincidence_histogram(stream, 100, 5000, threads=4)
    assert np.array_equal(h1.counts, h4.counts)


def test_coincidence_peak_width_is_jitter_convolution():
    cfg = cw_config(2e-7, 0.0, 100, duration_ps=1_000_000_000_000, cell_ps=100,
                    jitter=100.0, seed=33)
    stream = simulate(cfg)
    hist = coincidence_histogram(stream, bin_width_ps=10, range_ps=2000)
    centers = hist.bin_centers
    weights = hist.counts.astype(float)
    mean = np.average(centers, weights=weights)
    std = math.sqrt(np.average((centers - mean) ** 2, weights=weights))
    assert abs(std - 100.0 * math.sqrt(2)) < 6.0


# ---------------------------------------------------------------------------
# synchronous histogram
# ---------------------------------------------------------------------------

def test_sync_requires_triggers():
    s = toy_stream([1, 2], [3])
    with pytest.raises(NoTriggerError):
        sync_histogram(s, Channel.DET1, 10, (-100, 100))


def test_sync_histogram_peak_at_zero():
    cfg = pulsed_config(0.3, 0.0, 1, pulses=20_000, jitter=100.0, seed=34)
    stream = simulate(cfg)
    hist = sync_histogram(stream, Channel.DET1, 10, (-1000, 1000))
    centers = hist.bin_centers
    weights = hist.counts.astype(float)
    mean = np.average(centers, weights=weights)
    std = math.sqrt(np.average((centers - mean) ** 2, weights=weights))
    assert abs(mean) < 5.0
    assert abs(std - 100.0) < 4.0
    assert hist.total() == hist.n_contributing


def test_sync_histogram_mixed_peak_plus_tail():
    cfg = pulsed_config(0.01, 0.01, 20, pulses=20_000, lifetime=5000.0, seed=35)
    stream = simulate(cfg)
    hist = sync_histogram(stream, Channel.DET2, 50, (-1000, 20_000))
    peak_bin = int(np.argmax(hist.counts))
    assert abs(hist.bin_starts[peak_bin]) <= 100
    # tail: counts at several lifetimes out are nonzero but far below peak
    tail = hist.counts[(hist.bin_starts > 5000) & (hist.bin_starts < 15_000)]
    assert tail.sum() > 0
    assert tail.max() < hist.counts[peak_bin] / 3


def test_sync_wraps_negative_offsets():
    # tag 30 ps before the second trigger belongs to it, not to the first
    s = toy_stream([1_000_000 - 30], [], triggers=[0, 1_000_000])
    view = pulse_view(s)
    assert view.pulse_index[0] == 1
    assert view.rel_time[0] == -30


def test_tags_before_first_trigger_dropped_and_counted():
    s = toy_stream([-5, 10], [], triggers=[0, 1000])
    view = pulse_view(s)
    assert view.dropped_before_first == 1
    assert view.rel_time.tolist() == [10]


# ---------------------------------------------------------------------------
# threefold histogram
# ---------------------------------------------------------------------------

def test_threefold_single_bin_for_perfect_pairs():
    cfg = pulsed_config(0.2, 0.0, 1, pulses=5000, jitter=0.0, seed=36)
    stream = simulate(cfg)
    hist = threefold_histogram(stream, bin_width_ps=50, range_ps=1000)
    nz = np.argwhere(hist.counts > 0)
    assert nz.shape[0] == 1
    i, j = nz[0]
    assert hist.origin_ps[0] + i * 50 == 0
    assert hist.origin_ps[1] + j * 50 == 0


def test_threefold_marginal_matches_restricted_sync():
    # for a click stream (at most one tag per channel per pulse) the
    # marginal over the det2 axis equals the det1 sync histogram restricted
    # to coincident pulses; reduce the simulation to such a stream first
    cfg = pulsed_config(0.02, 0.0, 1, pulses=50_000, jitter=100.0,
                        eta=(0.8, 0.8), seed=37)
    stream = simulate(cfg)
    full = pulse_view(stream)
    multi = set()
    for channel in (Channel.DET1, Channel.DET2):
        pulses = full.pulse_index[full.channels == int(channel)]
        uniq, counts = np.unique(pulses, return_counts=True)
        multi.update(uniq[counts > 1].tolist())
    det_pulses = np.full(len(stream), -1, dtype=np.int64)
    det_idx = np.flatnonzero(stream.detector_mask)
    keep_det = stream.times[stream.detector_mask] >= stream.trigger_times[0]
    det_pulses[det_idx[keep_det]] = full.pulse_index
    keep = ~np.isin(det_pulses, list(multi)) | ~stream.detector_mask
    clicks = stream.select(keep)

    hist = threefold_histogram(clicks, bin_width_ps=50, range_ps=1000)
    view = pulse_view(clicks)
    in_range = (view.rel_time >= -1000) & (view.rel_time < 1000)
    is1 = in_range & (view.channels == int(Channel.DET1))
    is2 = in_range & (view.channels == int(Channel.DET2))
    coincident = np.intersect1d(view.pulse_index[is1], view.pulse_index[is2])
    sel = is1 & np.isin(view.pulse_index, coincident)
    expected = np.bincount((view.rel_time[sel] + 1000) // 50, minlength=40)
    assert hist.total() > 300
    assert np.array_equal(hist.marginal(0), expected)


def test_threefold_counts_all_pairs_brute_force():
    cfg = pulsed_config(0.005, 0.01, 30, pulses=5000, lifetime=2000.0, seed=38)
    stream = simulate(cfg)
    hist = threefold_histogram(stream, bin_width_ps=100, range_ps=2000)
    view = pulse_view(stream)
    in_range = (view.rel_time >= -2000) & (view.rel_time < 2000)
    total = 0
    for pulse in np.unique(view.pulse_index[in_range]):
        sel = in_range & (view.pulse_index == pulse)
        n1 = np.count_nonzero(view.channels[sel] == int(Channel.DET1))
        n2 = np.count_nonzero(view.channels[sel] == int(Channel.DET2))
        total += n1 * n2
    assert hist.total() == total == hist.n_contributing


def test_threefold_region_sum_equals_gated_pair_count():
    cfg = pulsed_config(0.02, 0.02, 30, pulses=20_000, lifetime=2000.0, seed=39)
    stream = simulate(cfg)
    gate = GateWindow(offset_ps=-200, width_ps=400)  # aligned with 100 ps bins
    hist = threefold_histogram(stream, bin_width_ps=100, range_ps=2000)
    region = hist.region_sum(-200, 200, -200, 200)
    gated = apply_gate(stream, gate)
    view = pulse_view(gated)
    c1 = np.bincount(view.pulse_index[view.channels == int(Channel.DET1)],
                     minlength=view.n_pulses)
    c2 = np.bincount(view.pulse_index[view.channels == int(Channel.DET2)],
                     minlength=view.n_pulses)
    assert region == int((c1 * c2).sum())


# ---------------------------------------------------------------------------
# gate search
# ---------------------------------------------------------------------------

def synthetic_gaussian_hist(sigma_ps=100.0, bin_ps=10, half_range=2000,
                            amplitude=200_000, floor=0.0):
    edges = np.arange(-half_range, half_range + bin_ps, bin_ps)
    centers = 0.5 * (edges[:-1] + edges[1:])
    counts = amplitude * np.exp(-0.5 * (centers / sigma_ps) ** 2) + floor
    return Histogram1D(bin_ps, -half_range, np.rint(counts).astype(np.int64),
                       "trigger_delay", int(counts.sum()))


def test_find_gate_fwhm_on_known_gaussian():
    hist = synthetic_gaussian_hist(sigma_ps=100.0, bin_ps=10)
    gate = find_gate(hist, threshold_fraction=0.5)
    fwhm = 2.0 * math.sqrt(2.0 * math.log(2.0)) * 100.0  # 235.5 ps
    assert abs(gate.width_ps - fwhm) <= 2 * 10  # bin quantization
    assert gate.offset_ps == -(gate.width_ps // 2) or abs(
        gate.offset_ps + gate.width_ps / 2) <= 10


def test_find_gate_flat_histogram_raises():
    rng = np.random.default_rng(0)
    counts = rng.poisson(50, size=400).astype(np.int64)
    hist = Histogram1D(10, -2000, counts, "trigger_delay", int(counts.sum()))
    with pytest.raises(NoPeakError):
        find_gate(hist)


def test_find_gate_empty_histogram_raises():
    hist = Histogram1D(10, -2000, np.zeros(400, dtype=np.int64), "trigger_delay", 0)
    with pytest.raises(NoPeakError):
        find_gate(hist)


def test_find_gate_ignores_exponential_tail():
    # peak + one-sided tail: gate must stay near the peak
    hist = synthetic_gaussian_hist(sigma_ps=100.0, bin_ps=10, amplitude=100_000)
    centers = hist.bin_centers
    tail = np.where(centers > 0, 3000 * np.exp(-centers / 5000.0), 0.0)
    counts = hist.counts + np.rint(tail).astype(np.int64)
    spiked = Histogram1D(10, -2000, counts, "trigger_delay", int(counts.sum()))
    gate = find_gate(spiked, threshold_fraction=0.05)
    assert gate.width_ps < 800
    assert gate.offset_ps > -500


def test_find_gate_threshold_validation():
    hist = synthetic_gaussian_hist()
    with pytest.raises(ValueError):
        find_gate(hist, threshold_fraction=0.0)


# ---------------------------------------------------------------------------
# gate application
# ---------------------------------------------------------------------------

def test_apply_gate_full_period_is_identity():
    # jitter 0 so no tag precedes the first trigger
    cfg = pulsed_config(0.01, 0.02, 30, pulses=3000, lifetime=2000.0,
                        jitter=0.0, seed=40)
    stream = simulate(cfg)
    period = cfg.period_ps
    gate = GateWindow(offset_ps=-period // 2, width_ps=period)
    assert apply_gate(stream, gate) == stream


def test_apply_gate_tiny_window_empties_stream():
    cfg = pulsed_config(0.01, 0.02, 30, pulses=3000, lifetime=2000.0, seed=41)
    stream = simulate(cfg)
    gated = apply_gate(stream, GateWindow(offset_ps=10**8, width_ps=1))
    assert gated.n_detector_events == 0
    assert gated.trigger_times.size == stream.trigger_times.size


def test_apply_gate_idempotent():
    cfg = pulsed_config(0.01, 0.02, 30, pulses=5000, lifetime=2000.0, seed=42)
    stream = simulate(cfg)
    gate = GateWindow(offset_ps=-250, width_ps=500)
    once = apply_gate(stream, gate)
    twice = apply_gate(once, gate)
    assert once == twice


def test_apply_gate_monotone_per_pulse():
    cfg = pulsed_config(0.01, 0.02, 30, pulses=5000, lifetime=2000.0, seed=43)
    stream = simulate(cfg)
    gate = GateWindow(offset_ps=-250, width_ps=500)
    gated = apply_gate(stream, gate)
    before = pulse_view(stream)
    after = pulse_view(gated)
    nb = np.bincount(before.pulse_index, minlength=before.n_pulses)
    na = np.bincount(after.pulse_index, minlength=after.n_pulses)
    assert np.all(na <= nb)


def test_default_gate_truth_retention():
    cfg = pulsed_config(0.9 * 0.2 / 1130, 0.1 * 0.2 / 1130, 1130,
                        pulses=100_000, eta=(0.3, 0.3), seed=44)
    stream = simulate(cfg)
    combined = (sync_histogram(stream, Channel.DET1, 10, (-2000, 8000))
                + sync_histogram(stream, Channel.DET2, 10, (-2000, 8000)))
    gate = find_gate(combined)
    gated = apply_gate(stream, gate)
    spdc_all, pl_all = split_truth(stream)
    spdc_gated, pl_gated = split_truth(gated)
    spdc_kept = spdc_gated.n_detector_events / spdc_all.n_detector_events
    pl_kept = pl_gated.n_detector_events / pl_all.n_detector_events
    assert spdc_kept >= 0.95
    assert pl_kept <= 0.10
    # background events beyond three lifetimes never survive the gate
    pl_view = pulse_view(pl_gated)
    assert np.all(pl_view.rel_time < 3 * cfg.pl_lifetime_ps)


def test_histogram_csv_json_roundtrip(tmp_path):
    hist = synthetic_gaussian_hist(bin_ps=20)
    csv_path = tmp_path / "h.csv"
    json_path = tmp_path / "h.json"
    hist.to_csv(csv_path)
    hist.to_json(json_path)
    back = Histogram1D.from_json(json_path)
    assert back == hist
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "bin_start_ps,count"
    assert len(lines) == hist.counts.size + 1


def test_histogram_addition_requires_same_binning():
    h1 = synthetic_gaussian_hist(bin_ps=10)
    h2 = synthetic_gaussian_hist(bin_ps=20)
    with pytest.raises(ValueError):
        _ = h1 + h2
