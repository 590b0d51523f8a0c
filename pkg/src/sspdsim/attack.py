"""Tailored blinding, port forcing and the phase-flip coincidence monitor.

A blinding train re-trips the target wire just before its bias climbs
back to the discriminator threshold, so every transition it causes is
too small to register.  The other detector of a two-port receiver can
then be made to click on demand with a weak double pulse.  Flipping the
interferometer phase at random moves half of the blinding energy away
from the target; the target then escapes re-tripping, recovers and
clicks together with the forced detector, which the receiver can see as
an excess of coincidences.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from .detector import (
    Detector,
    bias_current,
    click_probability,
    efficiency_at_bias,
    threshold_bias_fraction,
    threshold_recovery_time,
)
from .exceptions import ConfigurationError, DomainError, SearchError
from .pulse_train import (
    EXACT_AGE,
    PulseTrain,
    dbm_to_watts,
    photon_energy,
    photons_from_power,
    steady_state_click_rate,
)

log = logging.getLogger(__name__)

DEFAULT_ESCAPE = 1e-5
DEFAULT_MAX_COUNT_RATE = 300.0
#: Normal-operation coincidence probability per slot implied by a
#: normalised blinding coincidence of 3.5e-5 being 29000 times larger.
REFERENCE_BASELINE_COINCIDENCE = 3.5e-5 / 29000
#: Click probability of the forced detector on the first forcing pulse.
REFERENCE_FORCING_P1 = 0.894


@dataclass(frozen=True)
class AttackPlan:
    target: str
    blinding_period: float
    photons_per_blinding_pulse: float
    retrip_probability: float
    forcing_photons_per_pulse: Optional[float] = None

    def __post_init__(self):
        if not self.blinding_period > 0:
            raise ConfigurationError(f"blinding_period={self.blinding_period!r} must be > 0")
        if not self.photons_per_blinding_pulse >= 0:
            raise ConfigurationError(f"photons_per_blinding_pulse={self.photons_per_blinding_pulse!r} must be >= 0")
        if not 0 <= self.retrip_probability <= 1:
            raise ConfigurationError(f"retrip_probability={self.retrip_probability!r} outside [0, 1]")
        if self.forcing_photons_per_pulse is not None and not self.forcing_photons_per_pulse >= 0:
            raise ConfigurationError(f"forcing_photons_per_pulse={self.forcing_photons_per_pulse!r} must be >= 0")

    def with_forcing(self, photons: float) -> "AttackPlan":
        return replace(self, forcing_photons_per_pulse=float(photons))


def threshold_efficiency(detector: Detector) -> float:
    """Detection efficiency at the highest bias that still stays below threshold."""
    p = detector.params
    return efficiency_at_bias(detector.curve, p, threshold_bias_fraction(p) * p.operating_bias)


def check_plan(plan: AttackPlan, target: Detector) -> None:
    """Raise if the plan's period lets the target recover above threshold between pulses."""
    t_th = threshold_recovery_time(target.params)
    if plan.blinding_period > t_th * (1 + 1e-12):
        raise ConfigurationError(
            f"blinding_period={plan.blinding_period!r} s exceeds the threshold recovery "
            f"time {t_th!r} s of {target.name}"
        )


def blinding_schedule(target: Detector, escape: float = DEFAULT_ESCAPE) -> AttackPlan:
    """Slowest pulse train that keeps ``target`` re-tripped below threshold.

    The period is the threshold recovery time; the photon number is the
    smallest integer ``n`` with ``exp(-n * eta_th) <= escape``.
    """
    if not 0 < escape < 1:
        raise DomainError(f"escape probability {escape!r} must lie in (0, 1)")
    eta_th = threshold_efficiency(target)
    if eta_th <= 0:
        raise DomainError(
            f"efficiency curve of {target.name} is zero at the threshold bias; "
            "no finite pulse energy re-trips the wire"
        )
    x = -math.log(escape) / eta_th
    n = math.ceil(x * (1 - 1e-12))
    period = threshold_recovery_time(target.params)
    return AttackPlan(target.name, period, float(n), -math.expm1(-n * eta_th))


def dps_double_pulse_power(plan: AttackPlan, n_detectors: int = 2, wavelength: float = 1550e-9) -> float:
    """Average optical power (W) needed to blind ``n_detectors`` with double pulses.

    The interferometer splits the energy evenly over its output ports and
    each detector needs the single-detector dose, so energy scales as
    ``n_detectors ** 2``.
    """
    if n_detectors < 1:
        raise DomainError(f"n_detectors={n_detectors!r} must be >= 1")
    energy = n_detectors**2 * plan.photons_per_blinding_pulse * photon_energy(wavelength)
    return energy / plan.blinding_period


@dataclass(frozen=True)
class BlindingPower:
    watts: float
    dbm: float
    rate_hz: float
    evaluations: int
    degenerate: bool = False


def min_blinding_power(
    target: Detector,
    rep_rate: float = 1e9,
    max_count_rate: float = DEFAULT_MAX_COUNT_RATE,
    *,
    bracket_dbm: Tuple[float, float] = (-70.0, -10.0),
    tol_db: float = 0.1,
    scan_step_db: float = 2.0,
    mode: str = EXACT_AGE,
    wavelength: float = 1550e-9,
    slot_budget: int = 1_000_000,
) -> BlindingPower:
    """Lowest input power on the bright side above which the click rate stays <= ``max_count_rate``.

    The rate rises and then falls with power, so the bracket is scanned
    downward from its upper edge to the first unblinded power and the
    crossing is refined by bisection to ``tol_db``.
    """
    if not max_count_rate > 0:
        raise DomainError(f"max_count_rate={max_count_rate!r} must be > 0")
    lo, hi = map(float, bracket_dbm)
    if not lo < hi:
        raise DomainError(f"bracket {bracket_dbm!r} must be increasing")
    evals = 0
    p = target.params

    def rate(dbm):
        nonlocal evals
        evals += 1
        mu = photons_from_power(dbm_to_watts(dbm), rep_rate, wavelength)
        return steady_state_click_rate(p, target.curve, PulseTrain(mu, 1 / rep_rate, slot_budget, wavelength), mode=mode)

    r_hi = rate(hi)
    if r_hi > max_count_rate:
        raise SearchError(
            f"{target.name}: rate {r_hi:.4g}/s at the bracket top {hi} dBm exceeds {max_count_rate:g}/s",
            {"bracket_dbm": (lo, hi), "rate_at_top": r_hi},
        )
    blind_p, blind_r = hi, r_hi
    open_p = None
    x = hi
    while x > lo:
        x = max(x - scan_step_db, lo)
        r = rate(x)
        if r > max_count_rate:
            open_p = x
            break
        blind_p, blind_r = x, r
    if open_p is None:
        log.warning("%s: click rate never exceeds %g/s in %s dBm; returning lower edge", target.name, max_count_rate, bracket_dbm)
        return BlindingPower(dbm_to_watts(lo), lo, blind_r, evals, degenerate=True)
    while blind_p - open_p > tol_db:
        mid = 0.5 * (blind_p + open_p)
        r = rate(mid)
        if r > max_count_rate:
            open_p = mid
        else:
            blind_p, blind_r = mid, r
    return BlindingPower(dbm_to_watts(blind_p), blind_p, blind_r, evals)


def forcing_photons_for(forced: Detector, p1: float = REFERENCE_FORCING_P1, slot_period: float = 1e-9) -> float:
    """Photons per pulse that make a fully biased ``forced`` detector click with probability ``p1``."""
    if not 0 < p1 < 1:
        raise DomainError(f"p1={p1!r} must lie in (0, 1)")
    gamma = forced.params.dark_probability(slot_period)
    x = -math.log1p(-p1) - gamma
    if x < 0:
        raise DomainError(f"dark counts alone exceed p1={p1!r}")
    return x / forced.params.base_efficiency


@dataclass(frozen=True)
class ForcingReport:
    forced: str
    blinded: str
    forcing_photons_per_pulse: float
    p1: float
    p2: float
    cumulative: float
    blinded_escape_per_pulse: float
    blinded_escape_double_pulse: float


def double_pulse_port_control(
    blinded: Detector, forced: Detector, plan: AttackPlan, slot_period: float = 1e-9
) -> ForcingReport:
    """Click probabilities of ``forced`` under a double pulse while ``blinded`` is held.

    ``p2`` is the second-pulse click probability given no transition on the
    first pulse (the wire is then still fully biased).
    """
    if plan.forcing_photons_per_pulse is None:
        raise ConfigurationError("plan has no forcing_photons_per_pulse")
    fp = forced.params
    gamma = fp.dark_probability(slot_period)
    p1 = click_probability(plan.forcing_photons_per_pulse, fp.base_efficiency, gamma)
    p2 = p1
    cumulative = 1.0 - (1.0 - p1) * (1.0 - p2)

    bp = blinded.params
    g_b = bp.dark_probability(slot_period)
    eta_th = threshold_efficiency(blinded)
    eta_next = _efficiency_after(blinded, threshold_recovery_time(bp) + slot_period)
    n = plan.photons_per_blinding_pulse
    esc1 = 1.0 - click_probability(n, eta_th, g_b)
    esc2 = esc1 * (1.0 - click_probability(n, eta_next, g_b))
    return ForcingReport(forced.name, blinded.name, plan.forcing_photons_per_pulse, p1, p2, cumulative, esc1, esc2)


def _efficiency_after(detector: Detector, t: float) -> float:
    p = detector.params
    return efficiency_at_bias(detector.curve, p, bias_current(p, t))


@dataclass(frozen=True)
class CountermeasureReport:
    flipped_escape: float
    next_pulse_detection: float
    per_event: float
    simultaneous: float
    blinding_slots: int
    normalized: float
    baseline: float
    ratio: float


def coincidence_countermeasure(
    blinded: Detector,
    forced: Detector,
    plan: AttackPlan,
    baseline_coincidence_rate: float,
    slot_period: float = 1e-9,
) -> CountermeasureReport:
    """Coincidence probability the receiver sees when it flips the interferometer phase.

    With the phase flipped, only one pulse of the blinding double pulse
    reaches the target, so it escapes re-tripping with probability
    ``exp(-gamma - n/2 * eta_th)``.  It is then above threshold one slot
    later and clicks on the next half-dose pulse.  Multiplying by the
    forced detector's first-pulse click probability gives the coincidence
    probability per blinding event; dividing by the slots per blinding
    period gives the per-slot rate compared against the baseline.
    """
    if not baseline_coincidence_rate > 0:
        raise DomainError(f"baseline_coincidence_rate={baseline_coincidence_rate!r} must be > 0")
    forcing = double_pulse_port_control(blinded, forced, plan, slot_period)
    bp = blinded.params
    gamma = bp.dark_probability(slot_period)
    half = 0.5 * plan.photons_per_blinding_pulse
    escape = 1.0 - click_probability(half, threshold_efficiency(blinded), gamma)
    eta_next = _efficiency_after(blinded, threshold_recovery_time(bp) + slot_period)
    detect = click_probability(half, eta_next, gamma)
    per_event = escape * detect
    simultaneous = per_event * forcing.p1
    slots = max(math.ceil(plan.blinding_period / slot_period * (1 - 1e-12)), 1)
    normalized = simultaneous / slots
    return CountermeasureReport(
        escape, detect, per_event, simultaneous, slots, normalized,
        baseline_coincidence_rate, normalized / baseline_coincidence_rate,
    )
