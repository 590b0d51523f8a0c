"""Synthetic detectors and a brute-force path enumerator shared by the tests."""

import itertools
import math

import numpy as np
from hypothesis import strategies as st

from sspdsim.detector import DetectorParams, EfficiencyCurve

SLOT = 1e-9
I_C = 10e-6
I_0 = 9e-6
R_L = 25.0
GAIN = 100.0
PULSE = GAIN * R_L * I_0


def synthetic(beta_t=0.5, phi=0.0, eta0=0.5, gamma=0.0, steepness=5.0, slot=SLOT, name="syn"):
    """Detector with recovery ``beta * T = beta_t`` and threshold bias fraction ``phi``."""
    tau = slot / beta_t
    params = DetectorParams(
        name=name,
        critical_current=I_C,
        kinetic_inductance=R_L * tau,
        load_resistance=R_L,
        amplifier_gain=GAIN,
        discriminator_threshold=phi * PULSE,
        operating_bias=I_0,
        base_efficiency=eta0,
        dark_count_rate=gamma / slot,
    )
    curve = EfficiencyCurve(operating_fraction=I_0 / I_C, steepness=steepness)
    return params, curve


def phi_for_threshold_age(k, beta_t):
    """Threshold fraction whose recovery time lies mid-way into slot ``k``."""
    return 1.0 - math.exp(-(k - 0.5) * beta_t)


def hazards(params, curve, mu, n_ages, slot=SLOT):
    """Transition probability per pulse for ages 1..n_ages and for a never-reset wire.

    Written directly from the physical model rather than via the package.
    """
    tau = params.kinetic_inductance / params.load_resistance
    out = []
    for k in range(1, n_ages + 1):
        x = params.operating_bias * (1 - math.exp(-k * slot / tau)) / params.critical_current
        f = math.exp(-curve.steepness * (1 - x / curve.operating_fraction))
        eta = min(params.base_efficiency * f, 1.0)
        out.append(1 - math.exp(-params.dark_count_rate * slot - mu * eta))
    full = 1 - math.exp(-params.dark_count_rate * slot - mu * params.base_efficiency)
    return out, full


def enumerate_paths(params, curve, mu, n_slots, k_reg, slot=SLOT):
    """Exact per-slot s_on and registration marginal by summing over all 2^n histories.

    Returns ``(s_on, g)`` where ``g[n]`` is the probability that the age
    before slot ``n`` is at least ``k_reg`` (or the wire never switched).
    """
    h, h_full = hazards(params, curve, mu, n_slots, slot)
    s_on = np.zeros(n_slots)
    g = np.zeros(n_slots)
    for path in itertools.product((0, 1), repeat=n_slots):
        prob = 1.0
        age = None
        for n, fired in enumerate(path):
            p = h_full if age is None else h[age - 1]
            prob *= p if fired else 1 - p
            if prob == 0:
                break
            age = 1 if fired else (None if age is None else age + 1)
        else:
            age = None
            for n, fired in enumerate(path):
                if age is None or age >= k_reg:
                    g[n] += prob
                if fired:
                    s_on[n] += prob
                age = 1 if fired else (None if age is None else age + 1)
    return s_on, g


configs = st.fixed_dictionaries(
    {
        "beta_t": st.floats(0.05, 3.0),
        "phi": st.floats(0.0, 0.95),
        "eta0": st.floats(0.01, 1.0),
        "gamma": st.floats(0.0, 0.05),
        "steepness": st.floats(0.5, 20.0),
    }
)
