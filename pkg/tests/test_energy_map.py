import math

import numpy as np
import pytest

from kickpend import Params, energy
from kickpend.energy_map import (NEVER_ESCAPES, DissipationModel, EnergySample, NoCrossing,
                                 collect_dissipation, energy_map_report, energy_map_slope,
                                 energy_map_u, escape_count, fit_retention, fixed_point,
                                 guard_momentum, kick_energy_f, measure_dissipation,
                                 second_iterate_derivative)
from kickpend.errors import DomainError, InsufficientSamples

from oracles import FROZEN, ivp_first_kick

TS = math.pi / 3


def test_guard_momentum_inverts_energy(params):
    for p in (0.0, 0.3, 1.2, 2.7):
        assert guard_momentum(energy(TS, p, params), params) == pytest.approx(p, abs=1e-12)
    with pytest.raises(DomainError):
        guard_momentum(0.1, params)


def test_kick_energy_matches_reset(params):
    # a kick maps p -> p - 1 at +theta*, so H changes by (1 - 2p)/2
    for p in (0.2, 0.7, 1.5):
        H = energy(TS, p, params)
        assert kick_energy_f(H, params) == pytest.approx(energy(TS, p - 1.0, params), abs=1e-14)


@pytest.mark.parametrize("k,H", [(0.03, 0.9), (0.05, 0.97), (0.01, 0.6)])
def test_dissipation_matches_ivp(k, H):
    params = Params(k=k)
    s = measure_dissipation(H, params)
    p0 = guard_momentum(H, params)
    hit = ivp_first_kick(-TS, p0, 1.0, 1.0, TS, k=k)
    assert hit[3] == 1
    assert s.H_out == pytest.approx(energy(TS, hit[2], params), abs=1e-9)
    assert s.H_out < s.H_in


def test_no_crossing_falls_back():
    params = Params(k=0.05)
    # barely above H_minus the swing cannot climb over the top of the arc at all
    with pytest.raises(NoCrossing):
        measure_dissipation(params.h_minus + 1e-6, params)


def test_undamped_is_lossless(params):
    s = measure_dissipation(0.8, params)
    assert s.H_out == pytest.approx(0.8, abs=1e-10)


def test_fit_retention_exact():
    params = Params(k=0.03)
    H = np.linspace(params.h_minus + 0.1, params.h_plus, 6)
    model = fit_retention([EnergySample(h, 0.9 * h, 0.03) for h in H], params)
    assert model.r == pytest.approx(0.9, abs=1e-15) and model.fit_residual < 1e-14
    with pytest.raises(InsufficientSamples):
        fit_retention([EnergySample(1.0, 0.9, 0.03)] * 2)
    with pytest.raises(InsufficientSamples):
        fit_retention([EnergySample(1.0 + 0.01 * i, 0.9, 0.03) for i in range(5)], params)


def test_fit_degenerate_logs(caplog, params):
    samples, skipped = collect_dissipation(params, n=4)
    assert not skipped
    model = fit_retention(samples, params)
    assert model.r == pytest.approx(1.0, abs=1e-9)


def test_model_validation():
    with pytest.raises(DomainError):
        DissipationModel(0.0)
    with pytest.raises(DomainError):
        DissipationModel(1.2)
    m = DissipationModel.from_delta(0.01)
    assert m.r == pytest.approx(0.99) and m.dissipative


def test_fixed_point_frozen(params):
    m = DissipationModel.from_delta(0.01)
    H, slope = fixed_point(m, params)
    assert H == pytest.approx(FROZEN["hfp_delta_0.01"], abs=1e-12)
    assert slope == pytest.approx(FROZEN["slope_delta_0.01"], abs=1e-10)
    assert energy_map_u(H, m, params) == pytest.approx(H, abs=1e-12)


def test_undamped_fixed_point(params):
    H, slope = fixed_point(DissipationModel(1.0), params)
    assert H == pytest.approx(energy(TS, 0.5, params), abs=1e-12)
    assert slope == pytest.approx(-1.0, abs=1e-10)


def test_slope_by_finite_difference(params):
    m = DissipationModel.from_delta(0.02)
    for H in (0.65, 0.8, 0.95):
        h = 1e-6
        fd = (energy_map_u(H + h, m, params) - energy_map_u(H - h, m, params)) / (2 * h)
        assert energy_map_slope(H, m, params) == pytest.approx(fd, rel=1e-6)
    H = 0.75
    h = 1e-6
    uu = lambda x: energy_map_u(energy_map_u(x, m, params), m, params)
    assert second_iterate_derivative(H, m, params) == pytest.approx((uu(H + h) - uu(H - h)) / (2 * h), rel=1e-5)


def test_map_domain(params):
    m = DissipationModel.from_delta(0.1)
    with pytest.raises(DomainError):
        energy_map_u(params.h_minus, m, params)


def test_escape_counts(params):
    m = DissipationModel.from_delta(0.01)
    H, _ = fixed_point(m, params)
    assert escape_count(H, m, params) is NEVER_ESCAPES
    counts = [escape_count(H + d, m, params) for d in (1e-2, 1e-3, 1e-6)]
    assert counts[0] < counts[1] < counts[2]
    with pytest.raises(DomainError):
        escape_count(params.h_plus + 1.0, m, params)


def test_report_is_json(params):
    import json
    d = json.loads(energy_map_report(DissipationModel.from_delta(0.01), params))
    assert {"r", "H_fp", "slope", "escape_table"} <= set(d)
