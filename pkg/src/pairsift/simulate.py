"""Monte Carlo generation of time-tagged detection events.

Pulsed regime: for every pump pulse the number of photon pairs summed over
the d correlated mode pairs follows the multimode thermal (negative
binomial) law NB(d, mu_spdc); both photons of a pair are emitted at the
trigger time.  Thermal background photons follow NB(d, mu_pl) per output
channel and are delayed by an exponential with the photoluminescence
lifetime.  Detection applies per-channel efficiency and Gaussian jitter.

Only detected clicks are materialized: binomial thinning of a thermal mode
is again thermal, so detected counts are drawn directly from the thinned
laws.  This is exact in distribution and keeps the cost proportional to
the number of clicks rather than pulses x modes.

CW regime: pair emissions form a Poisson process with rate
d*mu_spdc/tau_cell and background photons a Poisson process with rate
d*mu_pl/tau_cell per channel, where tau_cell is the coherence-cell
duration that maps per-cell mode populations onto rates.

Routing: by default each pair sends one photon toward detector 1 and one
toward detector 2, and the background is split evenly at mode level
("conjugate" routing); this makes the measured heralding efficiency equal
alpha * eta_det and the measured cross-correlation equal the closed-form
g2.  A "balanced" mode routing every photon 50:50 independently is
available for modelling a physical beam-splitter setup.

Reproducibility: events are generated in fixed-size pulse (or time-slice)
blocks, each from its own counter-based Philox substream keyed on
(seed, block index), so output is bit-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, MissingTruthError
from .stats import ModePopulation
from .stream import Channel, Origin, TagStream

__all__ = [
    "EmissionConfig",
    "default_pulsed_config",
    "default_cw_config",
    "simulate",
    "simulate_pulsed",
    "simulate_cw",
    "split_truth",
    "merge_streams",
]

PULSE_BLOCK = 16384          # pulses per RNG block
CW_SLICE_PS = 1_000_000_000  # 1 ms time slices for CW generation

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class EmissionConfig:
    """Full physical parameterization of a simulation run.

    All durations are integer picoseconds.  mode_population is interpreted
    per pulse in the pulsed regime and per coherence cell (of duration
    coherence_cell_ps) in the CW regime.
    """

    regime: str                                   # "pulsed" | "cw"
    population: ModePopulation
    pulses: Optional[int] = None                  # pulsed only
    period_ps: Optional[int] = None               # pulsed only
    duration_ps: Optional[int] = None             # cw only
    coherence_cell_ps: int = 1                    # cw rate mapping
    pl_lifetime_ps: float = 500_000.0             # 500 ns
    detector_efficiency: tuple = (1.0, 1.0)
    jitter_sigma_ps: float = 100.0
    coincidence_window_ps: int = 1000
    routing: str = "conjugate"                    # "conjugate" | "balanced"
    dark_rate_hz: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.regime not in ("pulsed", "cw"):
            raise ConfigError(f"regime must be 'pulsed' or 'cw', got {self.regime!r}")
        if self.routing not in ("conjugate", "balanced"):
            raise ConfigError(f"unknown routing {self.routing!r}")
        eff = self.detector_efficiency
        if np.isscalar(eff):
            eff = (float(eff), float(eff))
        eff = (float(eff[0]), float(eff[1]))
        object.__setattr__(self, "detector_efficiency", eff)
        for e in eff:
            if not 0.0 <= e <= 1.0:
                raise ConfigError(f"detector efficiency {e} outside [0, 1]")
        if self.regime == "pulsed":
            if not self.pulses or self.pulses < 1:
                raise ConfigError("pulsed regime needs pulses >= 1")
            if not self.period_ps or self.period_ps < 1:
                raise ConfigError("pulsed regime needs period_ps >= 1")
        else:
            if not self.duration_ps or self.duration_ps < 1:
                raise ConfigError("cw regime needs duration_ps >= 1")
            if self.coherence_cell_ps < 1:
                raise ConfigError("coherence_cell_ps must be >= 1")
        if self.pl_lifetime_ps <= 0:
            raise ConfigError("pl_lifetime_ps must be > 0")
        if self.jitter_sigma_ps < 0:
            raise ConfigError("jitter_sigma_ps must be >= 0")
        if self.dark_rate_hz < 0:
            raise ConfigError("dark_rate_hz must be >= 0")

    @property
    def rep_rate_hz(self) -> Optional[float]:
        if self.period_ps is None:
            return None
        return 1e12 / self.period_ps

    def to_dict(self) -> dict:
        pop = self.population
        out = {
            "regime": self.regime,
            "mu_spdc": pop.mu_spdc,
            "mu_pl": pop.mu_pl,
            "modes": pop.d,
            "coherence_cell_ps": self.coherence_cell_ps,
            "pl_lifetime_ps": self.pl_lifetime_ps,
            "detector_efficiency": list(self.detector_efficiency),
            "jitter_sigma_ps": self.jitter_sigma_ps,
            "coincidence_window_ps": self.coincidence_window_ps,
            "routing": self.routing,
            "dark_rate_hz": self.dark_rate_hz,
            "seed": self.seed,
        }
        if self.regime == "pulsed":
            out["pulses"] = self.pulses
            out["period_ps"] = self.period_ps
        else:
            out["duration_ps"] = self.duration_ps
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EmissionConfig":
        data = dict(data)
        known = {
            "regime", "mu_spdc", "mu_pl", "modes", "pulses", "period_ps",
            "rep_rate_hz", "duration_ps", "coherence_cell_ps", "pl_lifetime_ps",
            "detector_efficiency", "jitter_sigma_ps", "coincidence_window_ps",
            "routing", "dark_rate_hz", "seed",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        try:
            pop = ModePopulation(
                mu_spdc=float(data.pop("mu_spdc")),
                mu_pl=float(data.pop("mu_pl")),
                d=int(data.pop("modes")),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config field: {exc.args[0]}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        period = data.pop("period_ps", None)
        rep = data.pop("rep_rate_hz", None)
        if period is None and rep is not None:
            period = round(1e12 / float(rep))
        kwargs = {}
        for field_name in ("pulses", "duration_ps", "coherence_cell_ps",
                           "coincidence_window_ps", "seed"):
            if field_name in data:
                kwargs[field_name] = int(data.pop(field_name))
        for field_name in ("pl_lifetime_ps", "jitter_sigma_ps", "dark_rate_hz"):
            if field_name in data:
                kwargs[field_name] = float(data.pop(field_name))
        for field_name in ("routing",):
            if field_name in data:
                kwargs[field_name] = str(data.pop(field_name))
        regime = str(data.pop("regime", "pulsed"))
        if "detector_efficiency" in data:
            kwargs["detector_efficiency"] = data.pop("detector_efficiency")
        try:
            return cls(regime=regime, population=pop,
                       period_ps=None if period is None else int(period), **kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def default_pulsed_config(pulses: int = 1_000_000, seed: int = 20240901) -> EmissionConfig:
    """Reference pulsed scenario: a d=1130-mode source whose distilled output
    carries 0.18 pair photons per channel per pulse (alpha=0.9 of N0=0.2)
    on top of a photoluminescent background 99x brighter (raw alpha=0.01),
    1 kHz repetition, 10% detection efficiency."""
    spdc_per_channel = 0.9 * 0.2
    raw_alpha = 0.01
    pl_per_channel = spdc_per_channel * (1.0 - raw_alpha) / raw_alpha
    d = 1130
    return EmissionConfig(
        regime="pulsed",
        population=ModePopulation(mu_spdc=spdc_per_channel / d,
                                  mu_pl=pl_per_channel / d, d=d),
        pulses=pulses,
        period_ps=1_000_000_000,  # 1 kHz
        detector_efficiency=(0.10, 0.10),
        seed=seed,
    )


def default_cw_config(duration_ps: int = 5_000_000_000_000,
                      seed: int = 20240902) -> EmissionConfig:
    """Reference CW scenario: photoluminescence-dominated emission
    (alpha=0.01, N0=0.2 per coherence cell) with singles rates around
    1.35e5 per second per detector at 10% efficiency."""
    d = 1130
    n0 = 0.2
    alpha = 0.01
    return EmissionConfig(
        regime="cw",
        population=ModePopulation(mu_spdc=alpha * n0 / d,
                                  mu_pl=(1.0 - alpha) * n0 / d, d=d),
        duration_ps=duration_ps,
        coherence_cell_ps=148_000,
        detector_efficiency=(0.10, 0.10),
        coincidence_window_ps=1000,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# generation internals
# ---------------------------------------------------------------------------

def _block_rng(seed: int, block_index: int, stream_tag: int) -> np.random.Generator:
    key = np.array([(seed ^ (stream_tag << 48)) & _SEED_MASK,
                    block_index & _SEED_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _thermal_sum(rng, d: int, mu: float, size: int) -> np.ndarray:
    """Total photon number over d equally populated thermal modes: NB(d, mu)."""
    if mu <= 0.0:
        return np.zeros(size, dtype=np.int64)
    return rng.negative_binomial(d, 1.0 / (1.0 + mu), size=size).astype(np.int64)


def _round_times(base: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return base + np.rint(offsets).astype(np.int64)


def _pulsed_block(cfg: EmissionConfig, block: int):
    """Generate detected tags for pulses [block*B, block*B + n)."""
    b0 = block * PULSE_BLOCK
    n = min(PULSE_BLOCK, cfg.pulses - b0)
    rng = _block_rng(cfg.seed, block, stream_tag=1)
    pop = cfg.population
    eta1, eta2 = cfg.detector_efficiency
    trig = (b0 + np.arange(n, dtype=np.int64)) * cfg.period_ps

    pairs = _thermal_sum(rng, pop.d, pop.mu_spdc, n)
    if cfg.routing == "conjugate":
        # one photon of every pair heads to each detector
        k1 = rng.binomial(pairs, eta1)
        k2 = rng.binomial(pairs, eta2)
        pl1 = _thermal_sum(rng, pop.d, pop.mu_pl * eta1, n)
        pl2 = _thermal_sum(rng, pop.d, pop.mu_pl * eta2, n)
    else:
        # every photon independently picks a detector with probability 1/2;
        # (click-det1, click-det2, lost) is multinomial over the 2m photons
        photons = 2 * pairs
        k1 = rng.binomial(photons, 0.5 * eta1)
        k2 = rng.binomial(photons - k1, 0.5 * eta2 / (1.0 - 0.5 * eta1))
        pl_total = _thermal_sum(rng, 2 * pop.d, pop.mu_pl, n)
        pl1 = rng.binomial(pl_total, 0.5 * eta1)
        pl2 = rng.binomial(pl_total - pl1, 0.5 * eta2 / (1.0 - 0.5 * eta1))

    sigma = cfg.jitter_sigma_ps
    tau = cfg.pl_lifetime_ps

    chunks = []

    def emit(counts, channel, origin, exponential):
        total = int(counts.sum())
        if total == 0:
            return
        base = np.repeat(trig, counts)
        offsets = np.zeros(total)
        if exponential:
            offsets += rng.exponential(tau, total)
        if sigma > 0:
            offsets += rng.normal(0.0, sigma, total)
        times = _round_times(base, offsets)
        chunks.append((times,
                       np.full(total, int(channel), dtype=np.uint8),
                       np.full(total, int(origin), dtype=np.uint8)))

    emit(k1, Channel.DET1, Origin.SPDC, exponential=False)
    emit(k2, Channel.DET2, Origin.SPDC, exponential=False)
    emit(pl1, Channel.DET1, Origin.PL, exponential=True)
    emit(pl2, Channel.DET2, Origin.PL, exponential=True)

    if cfg.dark_rate_hz > 0:
        lam = cfg.dark_rate_hz * cfg.period_ps * 1e-12 * n
        for channel in (Channel.DET1, Channel.DET2):
            count = int(rng.poisson(lam))
            if count:
                times = b0 * cfg.period_ps + rng.integers(
                    0, n * cfg.period_ps, size=count, dtype=np.int64)
                chunks.append((times,
                               np.full(count, int(channel), dtype=np.uint8),
                               np.full(count, int(Origin.DARK), dtype=np.uint8)))

    chunks.append((trig,
                   np.full(n, int(Channel.TRIGGER), dtype=np.uint8),
                   np.full(n, int(Origin.NONE), dtype=np.uint8)))
    return chunks


def _cw_block(cfg: EmissionConfig, block: int):
    """Generate detected tags for the time slice starting at block*CW_SLICE_PS."""
    t0 = block * CW_SLICE_PS
    length = min(CW_SLICE_PS, cfg.duration_ps - t0)
    rng = _block_rng(cfg.seed, block, stream_tag=2)
    pop = cfg.population
    eta1, eta2 = cfg.detector_efficiency
    cell = cfg.coherence_cell_ps
    pair_lambda = pop.d * pop.mu_spdc * length / cell
    sigma = cfg.jitter_sigma_ps
    chunks = []

    n_pairs = int(rng.poisson(pair_lambda))
    pair_times = np.sort(rng.integers(t0, t0 + length, size=n_pairs, dtype=np.int64))
    if cfg.routing == "conjugate":
        n1 = (rng.random(n_pairs) < eta1).astype(np.int64)
        n2 = (rng.random(n_pairs) < eta2).astype(np.int64)
    else:
        # each of the two pair photons routes 50:50 and then faces the
        # efficiency of whichever detector it reached; clicks per pair on
        # one detector can therefore be 0, 1 or 2
        route_a = rng.random(n_pairs) < 0.5
        route_b = rng.random(n_pairs) < 0.5
        u_a = rng.random(n_pairs)
        u_b = rng.random(n_pairs)
        a1 = route_a & (u_a < eta1)
        a2 = ~route_a & (u_a < eta2)
        b1 = route_b & (u_b < eta1)
        b2 = ~route_b & (u_b < eta2)
        n1 = a1.astype(np.int64) + b1.astype(np.int64)
        n2 = a2.astype(np.int64) + b2.astype(np.int64)

    def emit(times, channel, origin):
        total = times.size
        if total == 0:
            return
        if sigma > 0:
            times = _round_times(times, rng.normal(0.0, sigma, total))
        chunks.append((times,
                       np.full(total, int(channel), dtype=np.uint8),
                       np.full(total, int(origin), dtype=np.uint8)))

    emit(np.repeat(pair_times, n1), Channel.DET1, Origin.SPDC)
    emit(np.repeat(pair_times, n2), Channel.DET2, Origin.SPDC)

    if cfg.routing == "conjugate":
        pl_lambda = (pop.d * pop.mu_pl * length / cell)
        lams = (pl_lambda * eta1, pl_lambda * eta2)
    else:
        pl_lambda = 2.0 * pop.d * pop.mu_pl * length / cell
        lams = (pl_lambda * 0.5 * eta1, pl_lambda * 0.5 * eta2)
    for lam, channel in zip(lams, (Channel.DET1, Channel.DET2)):
        count = int(rng.poisson(lam))
        times = rng.integers(t0, t0 + length, size=count, dtype=np.int64)
        emit(times, channel, Origin.PL)

    if cfg.dark_rate_hz > 0:
        lam = cfg.dark_rate_hz * length * 1e-12
        for channel in (Channel.DET1, Channel.DET2):
            count = int(rng.poisson(lam))
            times = rng.integers(t0, t0 + length, size=count, dtype=np.int64)
            emit(times, channel, Origin.DARK)
    return chunks


def _assemble(cfg: EmissionConfig, block_fn, n_blocks: int, threads: int) -> TagStream:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_block = list(pool.map(lambda b: block_fn(cfg, b), range(n_blocks)))
    else:
        per_block = [block_fn(cfg, b) for b in range(n_blocks)]
    chunks = [c for block in per_block for c in block]
    if not chunks:
        return TagStream(np.empty(0, np.int64), np.empty(0, np.uint8),
                         np.empty(0, np.uint8), cfg)
    times = np.concatenate([c[0] for c in chunks])
    channels = np.concatenate([c[1] for c in chunks])
    truth = np.concatenate([c[2] for c in chunks])
    return TagStream.build(times, channels, truth, meta=cfg)


def simulate_pulsed(config: EmissionConfig, threads: int = 1) -> TagStream:
    """Run the pulsed-regime Monte Carlo; returns a truth-labelled TagStream."""
    if config.regime != "pulsed":
        raise ConfigError("simulate_pulsed requires a pulsed-regime config")
    n_blocks = (config.pulses + PULSE_BLOCK - 1) // PULSE_BLOCK
    return _assemble(config, _pulsed_block, n_blocks, threads)


def simulate_cw(config: EmissionConfig, threads: int = 1) -> TagStream:
    """Run the CW-regime Monte Carlo; returns a truth-labelled TagStream."""
    if config.regime != "cw":
        raise ConfigError("simulate_cw requires a cw-regime config")
    n_blocks = (config.duration_ps + CW_SLICE_PS - 1) // CW_SLICE_PS
    return _assemble(config, _cw_block, n_blocks, threads)


def simulate(config: EmissionConfig, threads: int = 1) -> TagStream:
    if config.regime == "pulsed":
        return simulate_pulsed(config, threads)
    return simulate_cw(config, threads)


# ---------------------------------------------------------------------------
# truth utilities
# ---------------------------------------------------------------------------

def split_truth(stream: TagStream):
    """Partition by origin label into (pair-source stream, background stream).

    Trigger events are copied to both partitions.  Dark counts go with the
    background.
    """
    if stream.truth is None:
        raise MissingTruthError("stream carries no origin labels")
    is_trigger = ~stream.detector_mask
    spdc = stream.select(is_trigger | (stream.truth == int(Origin.SPDC)))
    noise = stream.select(is_trigger | (stream.truth == int(Origin.PL))
                          | (stream.truth == int(Origin.DARK)))
    return spdc, noise


def merge_streams(a: TagStream, b: TagStream) -> TagStream:
    """Merge two streams, dropping duplicated trigger events (same time)."""
    b_keep = np.ones(len(b), dtype=bool)
    a_trig = a.trigger_times
    b_is_trig = b.channels == int(Channel.TRIGGER)
    dup = np.isin(b.times, a_trig) & b_is_trig
    b_keep &= ~dup
    b_sub = b.select(b_keep)
    truth = None
    if a.truth is not None and b_sub.truth is not None:
        truth = np.concatenate([a.truth, b_sub.truth])
    return TagStream.build(np.concatenate([a.times, b_sub.times]),
                           np.concatenate([a.channels, b_sub.channels]),
                           truth, meta=a.meta)
