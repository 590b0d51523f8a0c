"""Per-slot detection probabilities of a detector driven by a coherent pulse train.

Slots are numbered ``n = 1..N``.  ``s_on[n]`` is the probability that the
wire leaves the superconducting state at slot ``n`` and ``s_off[n]`` its
complement.  Conditioning on the slot of the previous transition gives
the renewal equation

    s_off(n) = exp(-n*lam_inf) + sum_{m=1}^{n-1} s_on(n-m) * prod_{k=1}^{m} exp(-lam_k)

where ``lam_k = gamma + |alpha|^2 * eta(I_b after k slots)`` and
``lam_inf`` uses the fully biased efficiency.  A transition is registered
as a click with probability ``p_on = s_on * g``, where ``g`` is the
probability that the bias has recovered above the discriminator threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import constants

from .detector import (
    DetectorParams,
    EfficiencyCurve,
    bias_current,
    efficiency_at_bias,
    recovery_time_constant,
    threshold_recovery_time,
)
from .exceptions import ConfigurationError, ConvergenceError, DomainError, SweepPointError, WorkBudgetError

PAPER_APPROX = "paper-approx"
EXACT_AGE = "exact-age"
MODES = (PAPER_APPROX, EXACT_AGE)

CONSTANT_DARK = "constant"
BIAS_DARK = "bias"

#: Memory horizon: beyond ``ln(1/TRUNCATION_LEVEL) / (beta T)`` slots the bias is
#: within this fraction of I_0 and the per-slot factor is treated as constant.
TRUNCATION_LEVEL = 1e-4
DEFAULT_WORK_BUDGET = 1e8
CONVERGENCE_WINDOW = 10
DEFAULT_RMAX = 68e6


@dataclass(frozen=True)
class PulseTrain:
    """Coherent pulses of mean photon number ``mean_photons_per_pulse`` every ``slot_period``."""

    mean_photons_per_pulse: float
    slot_period: float
    num_slots: int
    wavelength: float = 1550e-9

    def __post_init__(self):
        if not self.mean_photons_per_pulse >= 0:
            raise ConfigurationError(f"mean_photons_per_pulse={self.mean_photons_per_pulse!r} must be >= 0")
        if not self.slot_period > 0:
            raise ConfigurationError(f"slot_period={self.slot_period!r} must be > 0")
        if int(self.num_slots) != self.num_slots or self.num_slots < 1:
            raise ConfigurationError(f"num_slots={self.num_slots!r} must be a positive integer")
        if not self.wavelength > 0:
            raise ConfigurationError(f"wavelength={self.wavelength!r} must be > 0")

    @classmethod
    def from_power(cls, power_w, rep_rate, num_slots, wavelength=1550e-9):
        return cls(photons_from_power(power_w, rep_rate, wavelength), 1.0 / rep_rate, num_slots, wavelength)


@dataclass
class TraceResult:
    s_off: np.ndarray
    s_on: np.ndarray
    g: np.ndarray
    p_on: np.ndarray
    slot_period: float
    mode: str
    steady_click_rate: Optional[float] = None
    converged_at_slot: Optional[int] = None

    def __len__(self):
        return len(self.s_on)

    @property
    def click_rate(self) -> np.ndarray:
        """Registered clicks per second at every slot."""
        return self.p_on / self.slot_period


# -- slot geometry ----------------------------------------------------------


def threshold_age(params: DetectorParams, slot_period: float) -> int:
    """Smallest number of slots after a reset at which a transition is registered."""
    t_th = threshold_recovery_time(params)
    # k*T >= t_th, tolerant to rounding when t_th is an exact multiple of T
    k = math.ceil(t_th / slot_period * (1 - 1e-12))
    return max(k, 1)


def truncation_horizon(params: DetectorParams, slot_period: float) -> int:
    beta_t = slot_period / recovery_time_constant(params)
    k = math.ceil(-math.log(TRUNCATION_LEVEL) / beta_t)
    return max(k, threshold_age(params, slot_period), 1)


def slot_exponents(params, curve, mean_photons, slot_period, n_ages, dark_model=CONSTANT_DARK):
    """Per-slot transition exponents ``lam_k`` for ages ``k = 1..n_ages`` and the fully biased ``lam_inf``."""
    ages = np.arange(1, n_ages + 1, dtype=float)
    i_b = bias_current(params, ages * slot_period)
    eta = efficiency_at_bias(curve, params, i_b)
    gamma_inf = params.dark_probability(slot_period)
    if dark_model == CONSTANT_DARK:
        gamma = np.full(n_ages, gamma_inf)
    elif dark_model == BIAS_DARK:
        gamma = gamma_inf * curve.relative_dark(i_b / params.critical_current)
    else:
        raise ConfigurationError(f"unknown dark model {dark_model!r}")
    lam = gamma + mean_photons * eta
    lam_inf = gamma_inf + mean_photons * params.base_efficiency
    return lam, lam_inf


# -- recursion --------------------------------------------------------------


def _recurse(lam, lam_inf, k_th, mode, n_max, horizon, rel_tol=None, min_slots=0):
    """Run the renewal recursion for up to ``n_max`` slots.

    ``lam`` holds exponents for ages ``1..horizon``; for older ages the factor
    ``exp(-lam_inf)`` is used, which lets the tail of each renewal sum be
    carried forward in O(1).  With ``rel_tol`` set, stops once ``p_on`` has
    been stationary for ``CONVERGENCE_WINDOW`` consecutive slots.
    """
    H = horizon
    surv = np.empty(H + 1)  # surv[m] = prod_{k<=m} exp(-lam_k)
    surv[0] = 1.0
    surv[1:] = np.exp(-np.cumsum(lam[:H]))
    s_inf = math.exp(-lam_inf)
    surv_h = surv[H]

    s_off = np.empty(n_max)
    s_on = np.empty(n_max)
    g = np.empty(n_max)
    p_on = np.empty(n_max)
    tail_off = 0.0  # sum_{m>H} s_on(n-m) surv_H s_inf^(m-H)
    tail_g = 0.0  # sum_{m>H+1} s_on(n-m) surv_H s_inf^(m-1-H)
    tiny = np.finfo(float).tiny
    streak = 0
    converged = None

    for i in range(n_max):  # slot n = i + 1
        n = i + 1
        M = min(i, H)
        past = s_on[i - M:i][::-1]  # s_on(n-1), ..., s_on(n-M)
        off = math.exp(-n * lam_inf) + float(np.dot(past, surv[1:M + 1])) + tail_off
        off = min(max(off, 0.0), 1.0)
        on = 1.0 - off
        if mode == PAPER_APPROX:
            gi = 1.0 if i == 0 else s_off[i - 1]
        else:
            # P(age >= k_th): never reset, or reset at n-m for m >= k_th
            hi = min(i, H + 1)
            head = float(np.dot(s_on[i - hi:i - k_th + 1][::-1], surv[k_th - 1:hi])) if hi >= k_th else 0.0
            gi = min(math.exp(-i * lam_inf) + head + tail_g, 1.0)
        s_off[i] = off
        s_on[i] = on
        g[i] = gi
        p_on[i] = on * gi

        if n - H >= 1:
            tail_off = s_inf * (tail_off + s_on[n - H - 1] * surv_h)
        if n - H - 1 >= 1:
            tail_g = s_inf * (tail_g + s_on[n - H - 2] * surv_h)

        if rel_tol is not None and i:
            if abs(p_on[i] - p_on[i - 1]) / max(p_on[i], tiny) < rel_tol:
                streak += 1
            else:
                streak = 0
            if streak >= CONVERGENCE_WINDOW and n >= min_slots:
                converged = n
                n_max = n
                break

    return s_off[:n_max], s_on[:n_max], g[:n_max], p_on[:n_max], converged


def _first_converged(p_on, rel_tol, min_slots):
    if len(p_on) < 2:
        return None
    ref = np.maximum(p_on[1:], np.finfo(float).tiny)
    ok = np.abs(np.diff(p_on)) / ref < rel_tol
    streak = 0
    for j, flag in enumerate(ok):
        streak = streak + 1 if flag else 0
        n = j + 2
        if streak >= CONVERGENCE_WINDOW and n >= min_slots:
            return n
    return None


def _check_mode(mode):
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; expected one of {MODES}")


def evolve(
    params: DetectorParams,
    curve: EfficiencyCurve,
    train: PulseTrain,
    mode: str = EXACT_AGE,
    *,
    truncate: bool = False,
    work_budget: float = DEFAULT_WORK_BUDGET,
    dark_model: str = CONSTANT_DARK,
    rel_tol: float = 1e-6,
) -> TraceResult:
    """Per-slot ``s_off``, ``s_on``, ``g`` and ``p_on`` for ``train.num_slots`` slots.

    ``mode`` selects the registration factor ``g``: ``"paper-approx"`` uses
    ``s_off`` of the previous slot (1 at the first slot), ``"exact-age"``
    the probability that the last reset lies at least the threshold
    recovery time in the past.

    Without ``truncate`` the recursion is exact and costs O(N^2); with it,
    ages beyond :func:`truncation_horizon` share the fully recovered factor
    and the cost is O(N*K).
    """
    _check_mode(mode)
    N = int(train.num_slots)
    T = train.slot_period
    k_th = threshold_age(params, T)
    if truncate:
        H = truncation_horizon(params, T)
    else:
        if float(N) * N > work_budget:
            raise WorkBudgetError(
                f"{N} slots need ~{float(N) * N:.3g} operations (budget {work_budget:.3g}); "
                "pass truncate=True to bound the memory horizon"
            )
        H = max(N, k_th)
    lam, lam_inf = slot_exponents(params, curve, train.mean_photons_per_pulse, T, H, dark_model)
    s_off, s_on, g, p_on, _ = _recurse(lam, lam_inf, k_th, mode, N, H)
    min_slots = H + CONVERGENCE_WINDOW if truncate else 0
    conv = _first_converged(p_on, rel_tol, min_slots)
    rate = float(p_on[conv - 1] / T) if conv else None
    return TraceResult(s_off, s_on, g, p_on, T, mode, rate, conv)


def steady_state(
    params: DetectorParams,
    curve: EfficiencyCurve,
    train: PulseTrain,
    rel_tol: float = 1e-6,
    mode: str = EXACT_AGE,
    *,
    max_slots: Optional[int] = None,
    dark_model: str = CONSTANT_DARK,
) -> TraceResult:
    """Iterate the truncated recursion until ``p_on`` is stationary.

    Convergence is declared once ``|p_on[n] - p_on[n-1]| / p_on[n] < rel_tol``
    for 10 consecutive slots, and not before the memory horizon has been
    traversed.  ``max_slots`` defaults to ``train.num_slots``.
    """
    if not rel_tol > 0:
        raise DomainError(f"rel_tol={rel_tol!r} must be > 0")
    _check_mode(mode)
    T = train.slot_period
    n_max = int(max_slots or train.num_slots)
    k_th = threshold_age(params, T)
    H = truncation_horizon(params, T)
    lam, lam_inf = slot_exponents(params, curve, train.mean_photons_per_pulse, T, H, dark_model)
    s_off, s_on, g, p_on, conv = _recurse(
        lam, lam_inf, k_th, mode, n_max, H, rel_tol=rel_tol, min_slots=H + CONVERGENCE_WINDOW
    )
    trace = TraceResult(s_off, s_on, g, p_on, T, mode)
    if conv is None:
        raise ConvergenceError(
            f"p_on not stationary to rel_tol={rel_tol:g} within {n_max} slots "
            f"(last p_on={p_on[-1]:.6g})",
            trace=trace,
        )
    trace.converged_at_slot = conv
    trace.steady_click_rate = float(p_on[-1] / T)
    return trace


def steady_state_click_rate(params, curve, train, rel_tol=1e-6, mode=EXACT_AGE, **kwargs) -> float:
    """Stationary registered click rate in events per second."""
    return steady_state(params, curve, train, rel_tol, mode, **kwargs).steady_click_rate


# -- power and rate conversions ---------------------------------------------


def photon_energy(wavelength: float) -> float:
    return constants.h * constants.c / wavelength


def _like(x, value):
    return float(value) if np.ndim(x) == 0 else value


def photons_from_power(power_w, rep_rate, wavelength=1550e-9):
    """Mean photons per pulse for average optical power ``power_w`` at ``rep_rate``."""
    p = np.asarray(power_w, dtype=float)
    if np.any(p < 0):
        raise DomainError(f"power must be >= 0, got {power_w!r}")
    if not (rep_rate > 0 and wavelength > 0):
        raise DomainError(f"rep_rate and wavelength must be > 0, got {rep_rate!r}, {wavelength!r}")
    return _like(power_w, p / rep_rate / photon_energy(wavelength))


def dbm_to_watts(dbm):
    return _like(dbm, 1e-3 * 10.0 ** (np.asarray(dbm, dtype=float) / 10.0))


def watts_to_dbm(watts):
    w = np.asarray(watts, dtype=float)
    if np.any(w <= 0):
        raise DomainError(f"power must be > 0 to express in dBm, got {watts!r}")
    return _like(watts, 10.0 * np.log10(w / 1e-3))


def apply_discriminator_limit(rate: float, r_max: float = DEFAULT_RMAX, mode: str = "hard") -> float:
    """Registered rate after the discriminator's maximum counting rate ``r_max``."""
    if rate < 0:
        raise DomainError(f"rate {rate!r} must be >= 0")
    if not r_max > 0:
        raise DomainError(f"r_max {r_max!r} must be > 0")
    if mode == "hard":
        return min(rate, r_max)
    if mode == "nonparalyzable":
        return rate / (1.0 + rate / r_max)
    raise ConfigurationError(f"unknown discriminator mode {mode!r}")


# -- power sweep --------------------------------------------------------------


class SweepRow(NamedTuple):
    power_dbm: float
    photons_per_pulse: float
    model_rate_hz: float
    observed_rate_hz: float


def _sweep_point(args):
    params, curve, rep_rate, dbm, r_max, mode, discriminator, wavelength, slot_budget, rel_tol = args
    try:
        mu = photons_from_power(dbm_to_watts(dbm), rep_rate, wavelength)
        train = PulseTrain(mu, 1.0 / rep_rate, slot_budget, wavelength)
        rate = steady_state_click_rate(params, curve, train, rel_tol, mode)
        return SweepRow(float(dbm), mu, rate, apply_discriminator_limit(rate, r_max, discriminator))
    except Exception as exc:
        raise SweepPointError(dbm, exc) from exc


def power_sweep(
    params: DetectorParams,
    curve: EfficiencyCurve,
    rep_rate: float,
    power_list_dbm: Sequence[float],
    r_max: float = DEFAULT_RMAX,
    mode: str = EXACT_AGE,
    discriminator: str = "hard",
    *,
    wavelength: float = 1550e-9,
    slot_budget: int = 1_000_000,
    rel_tol: float = 1e-6,
    workers: int = 1,
) -> list:
    """Steady-state model and discriminator-limited rates for each input power.

    Rows are independent; with ``workers > 1`` they are computed in a
    process pool and returned in input order.
    """
    powers = [float(p) for p in power_list_dbm]
    if not powers:
        raise DomainError("power list is empty")
    _check_mode(mode)
    jobs = [(params, curve, rep_rate, p, r_max, mode, discriminator, wavelength, slot_budget, rel_tol) for p in powers]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def parse_power_range(text: str) -> list:
    """Expand ``"start:stop:step"`` (dBm, inclusive of stop) into a list of powers."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigurationError(f"power range {text!r} is not start:stop:step") from None
    if not step > 0:
        raise ConfigurationError(f"power range step {step!r} must be > 0")
    if start > stop:
        raise ConfigurationError(f"power range start {start!r} exceeds stop {stop!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 12) for k in range(n)]
