"""Independent evaluations of the detector renewal process.

The state that matters before each pulse is the number of slots since
the wire last switched (its *age*).  :func:`markov_exact` propagates the
full age distribution slot by slot; :func:`simulate` samples paths of
the same process; :func:`stationary` solves the infinite-time limit in
closed form.  None of them use the renewal-sum recursion in
:mod:`sspdsim.pulse_train`, so they serve as cross-checks for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .detector import (
    DetectorParams,
    EfficiencyCurve,
    efficiency_at_bias,
    recovery_time_constant,
    threshold_recovery_time,
)
from .exceptions import ConfigurationError, DomainError
from .pulse_train import EXACT_AGE, MODES, PAPER_APPROX, PulseTrain, TraceResult

MASS_TOLERANCE = 1e-12
CAP_LEAK_TOLERANCE = 1e-9


def _age_exponents(params, curve, train, n_ages):
    """Transition exponent for a pulse arriving ``k`` slots after a reset, k = 1..n_ages."""
    T = train.slot_period
    t = np.arange(1, n_ages + 1) * T
    bias = params.operating_bias * (1.0 - np.exp(-t / recovery_time_constant(params)))
    eta = efficiency_at_bias(curve, params, bias)
    gamma = params.dark_count_rate * T
    lam = gamma + train.mean_photons_per_pulse * eta
    lam_full = gamma + train.mean_photons_per_pulse * params.base_efficiency
    return lam, lam_full


def _registration_age(params, train, mode):
    """Minimum age (in slots) at which a transition counts as a click."""
    if mode == PAPER_APPROX:
        return 2
    t_th = threshold_recovery_time(params)
    n = 1
    while n * train.slot_period < t_th * (1 - 1e-12):
        n += 1
    return n


def default_age_cap(params: DetectorParams, slot_period: float) -> int:
    beta_t = slot_period / recovery_time_constant(params)
    horizon = math.ceil(math.log(1e4) / beta_t)
    return max(4 * horizon, 64)


@dataclass
class OracleTrace:
    """Per-slot aggregates of an oracle evaluation (exact or sampled)."""

    s_off: np.ndarray
    s_on: np.ndarray
    p_on: np.ndarray
    p_click: np.ndarray
    mode: str
    stderr_s_on: Optional[np.ndarray] = None
    stderr_click: Optional[np.ndarray] = None
    trials: Optional[int] = None

    def __len__(self):
        return len(self.s_on)


def markov_exact(
    params: DetectorParams,
    curve: EfficiencyCurve,
    train: PulseTrain,
    age_cap: Optional[int] = None,
    mode: str = EXACT_AGE,
) -> OracleTrace:
    """Propagate the age distribution exactly.

    Ages ``1..age_cap`` are tracked individually; the last bin collects all
    older ages and uses the fully recovered exponent, which is only
    accepted while that bin holds negligible mass or the bias there has
    recovered to within 1e-9.  ``p_on`` is ``s_on * g`` with ``g`` the
    marginal probability that the pre-pulse age qualifies for registration;
    ``p_click`` is the joint probability of a transition at a qualifying age.
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}")
    T = train.slot_period
    beta_t = T / recovery_time_constant(params)
    horizon = math.ceil(math.log(1e4) / beta_t)
    cap = default_age_cap(params, T) if age_cap is None else int(age_cap)
    reg = _registration_age(params, train, mode)
    if cap < max(horizon, reg):
        raise ConfigurationError(f"age_cap={cap} below truncation horizon {max(horizon, reg)}")
    lam, lam_full = _age_exponents(params, curve, train, cap)
    stay = np.exp(-lam)
    go = -np.expm1(-lam)
    stay[-1] = math.exp(-lam_full)
    go[-1] = -math.expm1(-lam_full)
    cap_recovered = math.exp(-cap * beta_t) < CAP_LEAK_TOLERANCE
    stay_full, go_full = math.exp(-lam_full), -math.expm1(-lam_full)

    N = int(train.num_slots)
    dist = np.zeros(cap)  # dist[a-1] = P(age == a), last bin is ages >= cap
    never = 1.0
    out = np.empty((4, N))
    prev_off = 1.0
    for n in range(N):
        s_on = never * go_full + float(dist @ go)
        s_off = never * stay_full + float(dist @ stay)
        if mode == PAPER_APPROX:
            g = 1.0 if n == 0 else prev_off
        else:
            g = never + float(dist[reg - 1:].sum())
        joint = never * go_full + float(dist[reg - 1:] @ go[reg - 1:])
        out[:, n] = s_off, s_on, s_on * g, joint
        prev_off = s_off

        moved = dist * stay
        new = np.empty_like(dist)
        new[0] = s_on
        new[1:] = moved[:-1]
        new[-1] += moved[-1]
        never *= stay_full
        dist = new
        mass = never + dist.sum()
        if abs(mass - 1.0) > MASS_TOLERANCE:
            raise ConfigurationError(f"age distribution mass drifted to {mass!r} at slot {n + 1}")
        if not cap_recovered and dist[-1] > CAP_LEAK_TOLERANCE:
            raise ConfigurationError(
                f"age_cap={cap} too small: {dist[-1]:.3g} of the mass sits in the lumped bin "
                f"at slot {n + 1} before the bias has recovered"
            )
    return OracleTrace(out[0], out[1], out[2], out[3], mode)


def _trial_uniforms(seed, first, count, n_slots):
    """Uniform draws for trials ``first..first+count-1``, one Philox substream per trial."""
    u = np.empty((count, n_slots))
    for j in range(count):
        bitgen = np.random.Philox(key=seed, counter=[0, first + j, 0, 0])
        u[j] = np.random.Generator(bitgen).random(n_slots)
    return u


def simulate(
    params: DetectorParams,
    curve: EfficiencyCurve,
    train: PulseTrain,
    trials: int,
    seed: int,
    mode: str = EXACT_AGE,
    chunk: int = 8192,
) -> OracleTrace:
    """Monte Carlo estimate of per-slot transition and click frequencies.

    Each trial walks the slots with its own counter-based Philox substream
    keyed by ``seed`` and indexed by the trial number, so results do not
    depend on chunking or execution order.
    """
    if trials < 1:
        raise DomainError(f"trials={trials!r} must be >= 1")
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}")
    N = int(train.num_slots)
    lam, lam_full = _age_exponents(params, curve, train, N)
    # ages 1..N exactly; index N+1 marks "never switched"
    hazard = np.empty(N + 2)
    hazard[0] = np.nan
    hazard[1:N + 1] = -np.expm1(-lam)
    hazard[N + 1] = -math.expm1(-lam_full)
    reg = _registration_age(params, train, mode)

    on_counts = np.zeros(N, dtype=np.int64)
    click_counts = np.zeros(N, dtype=np.int64)
    for first in range(0, trials, chunk):
        count = min(chunk, trials - first)
        u = _trial_uniforms(seed, first, count, N)
        age = np.full(count, N + 1, dtype=np.int64)
        for n in range(N):
            hit = u[:, n] < hazard[age]
            on_counts[n] += int(hit.sum())
            click_counts[n] += int((hit & (age >= reg)).sum())
            age = np.where(hit, 1, np.minimum(age + 1, N + 1))
    s_on = on_counts / trials
    click = click_counts / trials
    se_on = np.sqrt(s_on * (1 - s_on) / trials)
    se_click = np.sqrt(click * (1 - click) / trials)
    return OracleTrace(1 - s_on, s_on, click, click, mode, se_on, se_click, trials)


@dataclass
class Stationary:
    s_on: float
    g: float
    p_on: float
    p_click: float
    mean_interval: float


def stationary(params, curve, train, mode=EXACT_AGE, max_age=None) -> Stationary:
    """Infinite-time limit from the renewal-interval survival function.

    With ``S(a)`` the probability that an interval exceeds ``a - 1`` slots,
    the stationary switching probability is ``1 / sum_a S(a)`` and the
    pre-pulse age has distribution ``S(a) / sum S``.
    """
    T = train.slot_period
    if max_age is None:
        max_age = 16 * default_age_cap(params, T)
    lam, lam_full = _age_exponents(params, curve, train, max_age)
    log_s = np.concatenate([[0.0], -np.cumsum(lam)])
    surv = np.exp(log_s[:-1])  # P(interval >= a), a = 1..max_age
    hazard = -np.expm1(-lam)
    # geometric tail beyond max_age with the fully recovered hazard
    tail = math.exp(log_s[-1]) / -math.expm1(-lam_full) if lam_full > 0 else math.inf
    mean_interval = float(surv.sum()) + tail
    if not math.isfinite(mean_interval):
        return Stationary(0.0, 1.0, 0.0, 0.0, math.inf)
    reg = _registration_age(params, train, mode)
    if mode == PAPER_APPROX:
        g = 1.0 - 1.0 / mean_interval
    else:
        g = (float(surv[reg - 1:].sum()) + tail) / mean_interval
    p_click = (float(surv[reg - 1:] @ hazard[reg - 1:]) + math.exp(log_s[-1])) / mean_interval
    s_on = 1.0 / mean_interval
    return Stationary(s_on, g, s_on * g, p_click, mean_interval)


@dataclass
class ComparisonReport:
    field: str
    max_abs_deviation: float
    z: Optional[np.ndarray]
    max_abs_z: Optional[float]
    fraction_within_3sigma: Optional[float]
    passed: bool

    def summary(self) -> str:
        parts = [f"field={self.field}", f"max_abs_deviation={self.max_abs_deviation:.3e}"]
        if self.z is not None:
            parts += [f"max_abs_z={self.max_abs_z:.3f}", f"within_3sigma={self.fraction_within_3sigma:.4f}"]
        parts.append("PASS" if self.passed else "FAIL")
        return " ".join(parts)


def _values(obj, field):
    return np.asarray(getattr(obj, field), dtype=float)


def compare(
    trace,
    oracle: OracleTrace,
    field: str = "s_on",
    max_abs: Optional[float] = None,
    max_z: Optional[float] = None,
    min_coverage: Optional[float] = None,
) -> ComparisonReport:
    """Deviation statistics of ``trace`` against ``oracle`` for one per-slot field.

    For sampled oracles the z-score uses the binomial standard error
    implied by the reference values in ``trace`` (so slots where the
    reference is exactly 0 or 1 get z = 0 when the sample agrees).
    """
    ref = _values(trace, field)
    other = _values(oracle, field)
    if ref.shape != other.shape:
        raise ValueError(f"slot count mismatch: {ref.shape[0]} vs {other.shape[0]}")
    dev = np.abs(ref - other)
    max_dev = float(dev.max()) if dev.size else 0.0
    z = zmax = cover = None
    passed = True
    if oracle.trials is not None:
        sigma = np.sqrt(np.clip(ref * (1 - ref), 0, None) / oracle.trials)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sigma > 0, (other - ref) / sigma, np.where(dev == 0, 0.0, np.inf))
        zmax = float(np.max(np.abs(z)))
        cover = float(np.mean(np.abs(z) <= 3))
        if max_z is not None:
            passed &= zmax <= max_z
        if min_coverage is not None:
            passed &= cover >= min_coverage
    if max_abs is not None:
        passed &= max_dev <= max_abs
    return ComparisonReport(field, max_dev, z, zmax, cover, bool(passed))
