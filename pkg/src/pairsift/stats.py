"""Closed-form photon statistics for a pair source mixed with thermal noise.

The emitted light is modelled as d pairwise-correlated mode pairs, each
carrying a two-mode squeezed vacuum with mu_spdc photons per mode, plus
independent thermal (photoluminescent) light with mu_pl photons in each of
the same 2d modes.  All modes are populated equally.  Everything here is a
pure function of the population parameters; these formulas are the analytic
oracle the Monte Carlo engine and the estimators are tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateInputError, DivergenceError

__all__ = [
    "ModePopulation",
    "MixtureParams",
    "p_simple",
    "purity_from_p",
    "p_rigorous",
    "q_spdc",
    "q_pl",
    "q_total",
    "pair_probability",
    "g2_theory",
    "g2_approx",
]


@dataclass(frozen=True)
class ModePopulation:
    """Per-mode mean photon numbers of the pair source and the noise.

    mu_spdc: mean photons per mode in each correlated pair mode (>= 0)
    mu_pl:   mean thermal photons per mode (>= 0)
    d:       number of pairwise-correlated mode pairs (>= 1)
    """

    mu_spdc: float
    mu_pl: float
    d: int

    def __post_init__(self):
        if self.mu_spdc < 0 or self.mu_pl < 0:
            raise ValueError("mean photon numbers must be non-negative")
        if self.d < 1 or int(self.d) != self.d:
            raise ValueError("mode count d must be a positive integer")
        if not (math.isfinite(self.mu_spdc) and math.isfinite(self.mu_pl)):
            raise ValueError("mean photon numbers must be finite")

    @property
    def mu_total(self) -> float:
        return self.mu_spdc + self.mu_pl

    @property
    def n0(self) -> float:
        """Total mean photon number per channel, N0 = d*(mu_spdc + mu_pl)."""
        return self.d * self.mu_total

    @property
    def alpha(self) -> float:
        """Pair-source fraction of the total photon number."""
        if self.mu_total == 0.0:
            raise DegenerateInputError("alpha undefined for an all-vacuum population")
        return self.mu_spdc / self.mu_total

    def to_mixture(self) -> "MixtureParams":
        return MixtureParams(alpha=self.alpha, n0=self.n0, d=self.d)


@dataclass(frozen=True)
class MixtureParams:
    """(alpha, N0, d) parameterization of the same population.

    alpha is the fraction of photons coming from the pair source, N0 the
    total mean photon number per channel.
    """

    alpha: float
    n0: float
    d: int

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.n0 < 0 or not math.isfinite(self.n0):
            raise ValueError("n0 must be finite and non-negative")
        if self.d < 1 or int(self.d) != self.d:
            raise ValueError("mode count d must be a positive integer")

    @property
    def kappa(self) -> float:
        """Multimode correction factor; -> 1 as N0/d -> 0."""
        per_mode = self.n0 / self.d
        return (1.0 + self.alpha * per_mode) / (1.0 + (1.0 - self.alpha) * per_mode) ** 2

    def to_population(self) -> ModePopulation:
        mu_total = self.n0 / self.d
        return ModePopulation(
            mu_spdc=self.alpha * mu_total,
            mu_pl=(1.0 - self.alpha) * mu_total,
            d=self.d,
        )


def p_simple(params: MixtureParams) -> float:
    """Probability that a detected photon pair comes from the pair source.

    p = alpha / (alpha + (1 - alpha)^2 * N0).  Valid in the low-flux,
    strongly multimode limit.
    """
    if params.alpha == 0.0 and params.n0 == 0.0:
        raise DegenerateInputError("p undefined for alpha = N0 = 0 (vacuum input)")
    return params.alpha / (params.alpha + (1.0 - params.alpha) ** 2 * params.n0)


def purity_from_p(p: float, d: int) -> float:
    """Purity Tr(rho^2) = p^2 (1 - 1/d^2) + 1/d^2 of the pair-plus-noise mixture."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if d < 1:
        raise ValueError("d must be >= 1")
    inv_d2 = 1.0 / (float(d) * float(d))
    return p * p * (1.0 - inv_d2) + inv_d2


def p_rigorous(pop: ModePopulation) -> float:
    """Pair purity with the full multimode photon-number statistics.

    p = alpha / (alpha + (1-alpha)^2 * N0 * kappa) with
    kappa = (1 + alpha*N0/d) / (1 + (1-alpha)*N0/d)^2.
    Converges to p_simple when N0/d << 1.
    """
    if pop.mu_total == 0.0:
        raise DegenerateInputError("p undefined for alpha = N0 = 0 (vacuum input)")
    params = pop.to_mixture()
    if params.alpha == 0.0:
        return 0.0
    return params.alpha / (
        params.alpha + (1.0 - params.alpha) ** 2 * params.n0 * params.kappa
    )


def _check_convergence(denoms) -> None:
    for val in denoms:
        if val <= 0.0:
            raise DivergenceError(
                "generating function diverges: denominator %.6g <= 0" % val
            )


def q_spdc(x: float, y: float, pop: ModePopulation) -> float:
    """Two-mode generating function of one correlated mode pair:
    Q(x, y) = 1 / (1 - mu_spdc * (x + y + x*y))."""
    denom = 1.0 - pop.mu_spdc * (x + y + x * y)
    _check_convergence([denom])
    return 1.0 / denom


def q_pl(x: float, y: float, pop: ModePopulation) -> float:
    """Generating function of one thermal mode in each channel:
    Q(x, y) = 1 / ((1 - mu_pl*x) * (1 - mu_pl*y))."""
    dx = 1.0 - pop.mu_pl * x
    dy = 1.0 - pop.mu_pl * y
    _check_convergence([dx, dy])
    return 1.0 / (dx * dy)


def q_total(x: float, y: float, pop: ModePopulation) -> float:
    """Generating function of the full d-mode-pair emission:
    Q = (q_spdc * q_pl)^d, evaluated in log space for large d."""
    per_pair = q_spdc(x, y, pop) * q_pl(x, y, pop)
    return math.exp(pop.d * math.log(per_pair))


def pair_probability(pop: ModePopulation) -> float:
    """Probability P(1,1) of exactly one photon in each channel.

    P(1,1) = (1+mu_spdc)^-d (1+mu_pl)^-2d
             * [ d*mu_spdc/(1+mu_spdc) + (d*mu_pl/(1+mu_pl))^2 ]

    The prefactor is evaluated in log space so large d cannot underflow.
    """
    d = pop.d
    log_pref = -d * math.log1p(pop.mu_spdc) - 2.0 * d * math.log1p(pop.mu_pl)
    bracket = d * pop.mu_spdc / (1.0 + pop.mu_spdc) + (
        d * pop.mu_pl / (1.0 + pop.mu_pl)
    ) ** 2
    return math.exp(log_pref) * bracket


def g2_theory(pop: ModePopulation) -> float:
    """Exact zero-delay cross-correlation between the two channels:

    g2 = 1 + mu_spdc^2 / (d * mu_tot^2) + mu_spdc / (d * mu_tot^2)
       = 1 + alpha^2/d + alpha/N0
    """
    mu_tot = pop.mu_total
    if mu_tot == 0.0:
        raise ZeroDivisionError("g2 undefined for zero total photon number")
    denom = pop.d * mu_tot * mu_tot
    return 1.0 + pop.mu_spdc * pop.mu_spdc / denom + pop.mu_spdc / denom


def g2_approx(pop: ModePopulation) -> float:
    """Large-d approximation g2 = 1 + alpha / N0."""
    if pop.mu_total == 0.0:
        raise ZeroDivisionError("g2 undefined for zero total photon number")
    params = pop.to_mixture()
    return 1.0 + params.alpha / params.n0
