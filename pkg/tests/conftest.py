import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pairsift import EmissionConfig, ModePopulation


def pulsed_config(mu_spdc, mu_pl, d, *, pulses=100_000, eta=(1.0, 1.0),
                  jitter=100.0, lifetime=500_000.0, seed=1234, period=1_000_000_000,
                  routing="conjugate"):
    return EmissionConfig(
        regime="pulsed",
        population=ModePopulation(mu_spdc=mu_spdc, mu_pl=mu_pl, d=d),
        pulses=pulses,
        period_ps=period,
        pl_lifetime_ps=lifetime,
        detector_efficiency=eta,
        jitter_sigma_ps=jitter,
        routing=routing,
        seed=seed,
    )


def cw_config(mu_spdc, mu_pl, d, *, duration_ps=1_000_000_000_000, cell_ps=100,
              eta=(1.0, 1.0), jitter=0.0, window_ps=100, seed=99,
              routing="conjugate"):
    return EmissionConfig(
        regime="cw",
        population=ModePopulation(mu_spdc=mu_spdc, mu_pl=mu_pl, d=d),
        duration_ps=duration_ps,
        coherence_cell_ps=cell_ps,
        detector_efficiency=eta,
        jitter_sigma_ps=jitter,
        coincidence_window_ps=window_ps,
        routing=routing,
        seed=seed,
    )


@pytest.fixture(scope="session")
def reference_pulsed_run():
    """The full-size reference pulsed run shared by the acceptance tests."""
    from pairsift import default_pulsed_config, full_report, simulate

    cfg = default_pulsed_config()
    stream = simulate(cfg, threads=4)
    report = full_report(stream, eta_det=0.1)
    return cfg, stream, report
