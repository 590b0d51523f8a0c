import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sspdsim.attack import (
    REFERENCE_BASELINE_COINCIDENCE,
    AttackPlan,
    blinding_schedule,
    check_plan,
    coincidence_countermeasure,
    double_pulse_port_control,
    dps_double_pulse_power,
    forcing_photons_for,
    min_blinding_power,
    threshold_efficiency,
)
from sspdsim.detector import Detector
from sspdsim.exceptions import ConfigurationError, DomainError, SearchError
from sspdsim.io import preset
from sspdsim.pulse_train import PAPER_APPROX, PulseTrain, evolve

H_NU = 6.62607015e-34 * 299792458.0 / 1550e-9


@pytest.fixture(scope="module")
def ch5():
    return preset("ch5")


@pytest.fixture(scope="module")
def ch2():
    return preset("ch2")


def test_ch5_schedule(ch5):
    plan = blinding_schedule(ch5, 1e-5)
    tau = 1.12e-6 / 25
    phi = 0.040 / (100 * 25 * 22.2e-6)
    c = math.log(0.18 / 0.00122) / 0.28
    eta_th = 0.18 * math.exp(-c * (1 - phi))
    assert threshold_efficiency(ch5) == pytest.approx(eta_th, rel=1e-12)
    assert plan.blinding_period == pytest.approx(-tau * math.log(1 - phi), rel=1e-12)
    assert 57e-9 <= plan.blinding_period <= 58e-9
    assert plan.photons_per_blinding_pulse == math.ceil(math.log(1e5) / eta_th)
    assert 9000 <= plan.photons_per_blinding_pulse <= 10000
    assert 1 - plan.retrip_probability <= 1e-5


def test_ch2_schedule(ch2):
    plan = blinding_schedule(ch2)
    assert plan.blinding_period == pytest.approx(13e-9, abs=0.1e-9)
    assert plan.photons_per_blinding_pulse == pytest.approx(25000, rel=0.01)


def test_unit_exponent(ch5):
    plan = blinding_schedule(ch5, math.exp(-1))
    eta = threshold_efficiency(ch5)
    assert 1 <= plan.photons_per_blinding_pulse * eta < 1 + eta


def test_schedule_errors(ch5):
    for bad in (0.0, 1.0, -0.5):
        with pytest.raises(DomainError):
            blinding_schedule(ch5, bad)
    flat = dataclasses.replace(ch5.curve, steepness=1e6)
    with pytest.raises(DomainError, match="zero"):
        blinding_schedule(Detector(ch5.params, flat))


@pytest.mark.parametrize("name", ["ch2", "ch4", "ch5", "ch6"])
def test_blinding_train_holds_registration_below_escape(name):
    det = preset(name)
    plan = blinding_schedule(det, 1e-5)
    check_plan(plan, det)
    tr = evolve(det.params, det.curve, PulseTrain(plan.photons_per_blinding_pulse, plan.blinding_period, 200), PAPER_APPROX)
    assert np.all(tr.p_on[1:] <= 1e-5)


def test_check_plan_rejects_slow_train(ch5):
    plan = blinding_schedule(ch5)
    with pytest.raises(ConfigurationError, match="exceeds"):
        check_plan(dataclasses.replace(plan, blinding_period=plan.blinding_period * 1.01), ch5)


def test_plan_validation():
    with pytest.raises(ConfigurationError):
        AttackPlan("x", 0.0, 10.0, 0.5)
    with pytest.raises(ConfigurationError):
        AttackPlan("x", 1e-9, 10.0, 1.5)


def test_dps_power():
    plan = AttackPlan("x", 58e-9, 10000.0, 1.0)
    assert dps_double_pulse_power(plan) == pytest.approx(4 * 10000 * H_NU / 58e-9, rel=1e-12)
    assert dps_double_pulse_power(plan) == pytest.approx(88e-9, rel=0.01)
    assert dps_double_pulse_power(plan, 1) == pytest.approx(dps_double_pulse_power(plan) / 4, rel=1e-15)
    ch2_like = AttackPlan("y", 13e-9, 25000.0, 1.0)
    assert dps_double_pulse_power(ch2_like) == pytest.approx(985e-9, rel=0.01)
    with pytest.raises(DomainError):
        dps_double_pulse_power(plan, 0)


def test_forcing_probabilities(ch5, ch2):
    n = forcing_photons_for(ch2, 0.894)
    gamma = 100 * 1e-9
    assert n == pytest.approx((-math.log(1 - 0.894) - gamma) / 0.117, rel=1e-12)
    assert n == pytest.approx(19.2, abs=0.05)
    plan = blinding_schedule(ch5).with_forcing(n)
    rep = double_pulse_port_control(ch5, ch2, plan)
    assert rep.p1 == pytest.approx(0.894, abs=1e-12)
    assert rep.cumulative == pytest.approx(1 - 0.106**2, abs=1e-12)
    assert rep.cumulative == pytest.approx(0.989, abs=1e-3)
    assert rep.blinded_escape_per_pulse <= 1e-5


def test_forcing_limits(ch5, ch2):
    plan = blinding_schedule(ch5)
    zero = double_pulse_port_control(ch5, ch2, plan.with_forcing(0.0))
    assert zero.p1 == pytest.approx(-math.expm1(-100e-9), rel=1e-12)
    big = double_pulse_port_control(ch5, ch2, plan.with_forcing(1e4))
    assert big.p1 == 1.0
    with pytest.raises(ConfigurationError):
        double_pulse_port_control(ch5, ch2, plan)
    with pytest.raises(DomainError):
        forcing_photons_for(ch2, 1.0)


def test_coincidence_reference(ch5, ch2):
    plan = blinding_schedule(ch5).with_forcing(forcing_photons_for(ch2))
    rep = coincidence_countermeasure(ch5, ch2, plan, REFERENCE_BASELINE_COINCIDENCE)
    assert rep.blinding_slots == 58
    assert rep.simultaneous == pytest.approx(rep.flipped_escape * rep.next_pulse_detection * 0.894, rel=1e-12)
    assert 1e-3 <= rep.simultaneous <= 4.5e-3
    assert 3.5e-5 / 2 <= rep.normalized <= 3.5e-5 * 2
    assert rep.ratio >= 1e4
    assert REFERENCE_BASELINE_COINCIDENCE == pytest.approx(1.2069e-9, rel=1e-4)
    with pytest.raises(DomainError):
        coincidence_countermeasure(ch5, ch2, plan, 0.0)


def test_no_escape_no_coincidence(ch5, ch2):
    plan = dataclasses.replace(blinding_schedule(ch5), photons_per_blinding_pulse=1e9).with_forcing(19.2)
    rep = coincidence_countermeasure(ch5, ch2, plan, 1e-9)
    assert rep.per_event == 0.0 and rep.ratio == 0.0


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-12, 0.5))
def test_escape_bound_holds(eps):
    det = preset("ch4")
    plan = blinding_schedule(det, eps)
    assert 1 - plan.retrip_probability <= eps * (1 + 1e-9)


def test_min_blinding_power(ch5, ch2):
    a = min_blinding_power(ch5)
    b = min_blinding_power(ch2)
    assert not a.degenerate and a.rate_hz <= 300
    assert a.watts == pytest.approx(10 ** (a.dbm / 10) * 1e-3, rel=1e-12)
    assert b.dbm - a.dbm > 3
    looser = min_blinding_power(ch5, max_count_rate=3000)
    assert looser.dbm <= a.dbm


def test_min_blinding_power_edges(ch5):
    res = min_blinding_power(ch5, max_count_rate=math.inf)
    assert res.degenerate and res.dbm == -70
    with pytest.raises(SearchError) as exc:
        min_blinding_power(ch5, bracket_dbm=(-70, -45))
    assert exc.value.diagnostics["bracket_dbm"] == (-70.0, -45.0)
    with pytest.raises(DomainError):
        min_blinding_power(ch5, max_count_rate=0)
