"""Device model of a current-biased superconducting nanowire detector.

After a hotspot resets the wire, the bias current recovers as
``I_b(t) = I_0 (1 - exp(-t R_L / L_k))``.  The detection efficiency at a
given bias is ``eta = eta_0 * f(I_b / I_c)`` where ``f`` is a relative
efficiency curve normalised to 1 at the operating bias.  A pulse is only
registered if the amplified voltage ``Gain * R_L * I_b`` reaches the
discriminator threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConfigurationError, CurveFormatError, DomainError

#: Operating point used when a detector file gives no explicit ``operating_bias``.
DEFAULT_BIAS_RATIO = 0.906
DEFAULT_GAIN = 100.0
DEFAULT_THRESHOLD = 20e-3

#: Reference anchor for the two-point curve: relative efficiency 0.122 % / 18 %
#: at 72 % of the operating bias.
DEFAULT_ANCHOR_FRACTION = 0.72
DEFAULT_ANCHOR_RELATIVE = 0.00122 / 0.18


@dataclass(frozen=True, kw_only=True)
class DetectorParams:
    """Electrical and optical parameters of one detector channel (SI units)."""

    name: str
    critical_current: float
    kinetic_inductance: float
    load_resistance: float = 25.0
    shunt_resistance: float = 50.0
    amplifier_gain: float = DEFAULT_GAIN
    discriminator_threshold: float = DEFAULT_THRESHOLD
    operating_bias: Optional[float] = None
    base_efficiency: float
    dark_count_rate: float = 0.0

    def __post_init__(self):
        if self.operating_bias is None:
            object.__setattr__(self, "operating_bias", DEFAULT_BIAS_RATIO * self.critical_current)
        _require(self.critical_current > 0, "critical_current", self.critical_current, "must be > 0")
        _require(
            0 < self.operating_bias < self.critical_current,
            "operating_bias",
            self.operating_bias,
            f"must satisfy 0 < operating_bias < critical_current ({self.critical_current!r})",
        )
        _require(self.kinetic_inductance > 0, "kinetic_inductance", self.kinetic_inductance, "must be > 0")
        _require(self.load_resistance > 0, "load_resistance", self.load_resistance, "must be > 0")
        _require(self.shunt_resistance > 0, "shunt_resistance", self.shunt_resistance, "must be > 0")
        _require(self.amplifier_gain > 0, "amplifier_gain", self.amplifier_gain, "must be > 0")
        _require(
            0 <= self.base_efficiency <= 1, "base_efficiency", self.base_efficiency, "must lie in [0, 1]"
        )
        _require(self.dark_count_rate >= 0, "dark_count_rate", self.dark_count_rate, "must be >= 0")
        _require(
            0 <= self.discriminator_threshold < self.pulse_height,
            "discriminator_threshold",
            self.discriminator_threshold,
            f"must be >= 0 and below the full pulse height {self.pulse_height!r} V",
        )

    @property
    def pulse_height(self) -> float:
        """Output voltage for a detection at the operating bias."""
        return self.amplifier_gain * self.load_resistance * self.operating_bias

    @property
    def operating_fraction(self) -> float:
        return self.operating_bias / self.critical_current

    def dark_probability(self, slot_period: float) -> float:
        """Per-slot dark-count exponent ``gamma = rate * T``."""
        return self.dark_count_rate * slot_period


def _require(ok, name, value, why):
    if not ok:
        raise ConfigurationError(f"{name}={value!r} {why}")


@dataclass(frozen=True)
class EfficiencyCurve:
    """Relative efficiency ``f`` versus bias fraction ``I_b / I_c``.

    Either tabulated (``bias_fractions``/``efficiencies``, interpolated
    log-linearly) or the parametric exponential
    ``f = exp(-steepness * (1 - x / operating_fraction))``.  Build with
    :func:`load_curve` or :func:`default_two_point_curve`.
    """

    operating_fraction: float
    bias_fractions: Optional[tuple] = None
    efficiencies: Optional[tuple] = None
    steepness: Optional[float] = None
    dark_fractions: Optional[tuple] = None
    dark_rates: Optional[tuple] = None
    _norm: float = field(default=1.0, repr=False)
    _dark_norm: Optional[float] = field(default=None, repr=False)

    @property
    def is_parametric(self) -> bool:
        return self.steepness is not None

    @property
    def has_dark_curve(self) -> bool:
        return self.dark_rates is not None

    def relative(self, bias_fraction):
        """Evaluate ``f`` at bias fraction(s) of the critical current."""
        x = np.asarray(bias_fraction, dtype=float)
        if self.is_parametric:
            f = np.exp(-self.steepness * (1.0 - x / self.operating_fraction))
            f = np.where(x > 0, f, 0.0)
        else:
            f = _loglinear(x, self.bias_fractions, self.efficiencies) / self._norm
        return f if f.ndim else float(f)

    def relative_dark(self, bias_fraction):
        """Dark rate relative to its value at the operating bias (1 there)."""
        if not self.has_dark_curve:
            raise ConfigurationError("curve carries no dark_rate column")
        x = np.asarray(bias_fraction, dtype=float)
        r = _loglinear(x, self.dark_fractions, self.dark_rates) / self._dark_norm
        return r if r.ndim else float(r)


def _loglinear(x, xs, ys):
    """Interpolate ``ys`` linearly in log space; 0 below ``xs[0]``, held above ``xs[-1]``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    above = x >= xs[-1]
    out[above] = ys[-1]
    inside = (x >= xs[0]) & ~above
    if np.any(inside):
        xi = x[inside]
        j = np.clip(np.searchsorted(xs, xi, side="right") - 1, 0, len(xs) - 2)
        x0, x1, y0, y1 = xs[j], xs[j + 1], ys[j], ys[j + 1]
        w = (xi - x0) / (x1 - x0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = np.exp((1 - w) * np.log(y0) + w * np.log(y1))
        # segments touching zero efficiency fall back to linear interpolation
        linv = (1 - w) * y0 + w * y1
        out[inside] = np.where((y0 > 0) & (y1 > 0), logv, linv)
    return out


def _check_table(xs, ys, label, upper=None):
    if len(xs) < 2:
        raise CurveFormatError(f"need at least 2 points, got {len(xs)}")
    for i, (x, y) in enumerate(zip(xs, ys)):
        if not (math.isfinite(x) and 0 < x <= 1):
            raise CurveFormatError(f"bias_fraction {x!r} outside (0, 1]", row=i)
        if not (math.isfinite(y) and y >= 0 and (upper is None or y <= upper)):
            bound = f"[0, {upper}]" if upper is not None else "[0, inf)"
            raise CurveFormatError(f"{label} {y!r} outside {bound}", row=i)
        if i and x <= xs[i - 1]:
            raise CurveFormatError("bias_fraction must be strictly increasing", row=i)
        if i and label == "efficiency" and y < ys[i - 1]:
            raise CurveFormatError("efficiency must be non-decreasing in bias", row=i)


def load_curve(
    points: Sequence[Sequence[float]],
    operating_fraction: float,
    dark_points: Optional[Sequence[Sequence[float]]] = None,
) -> EfficiencyCurve:
    """Build a tabulated curve from ``(bias_fraction, efficiency)`` rows.

    Efficiencies may be absolute; they are normalised by the interpolated
    value at ``operating_fraction`` so that ``f(operating_fraction) == 1``.
    """
    pts = [tuple(map(float, p)) for p in points]
    xs = tuple(p[0] for p in pts)
    ys = tuple(p[1] for p in pts)
    _check_table(xs, ys, "efficiency", upper=1.0)
    if not 0 < operating_fraction <= 1:
        raise DomainError(f"operating_fraction {operating_fraction!r} outside (0, 1]")
    norm = float(_loglinear(np.array([operating_fraction]), xs, ys)[0])
    if norm <= 0:
        raise CurveFormatError(
            f"efficiency at operating bias fraction {operating_fraction!r} is zero; "
            "the table must cover the operating point"
        )
    dxs = dys = dnorm = None
    if dark_points is not None:
        dp = [tuple(map(float, p)) for p in dark_points]
        dxs = tuple(p[0] for p in dp)
        dys = tuple(p[1] for p in dp)
        _check_table(dxs, dys, "dark_rate")
        dnorm = float(_loglinear(np.array([operating_fraction]), dxs, dys)[0])
        if dnorm <= 0:
            raise CurveFormatError("dark rate at operating bias fraction is zero")
    return EfficiencyCurve(
        operating_fraction=operating_fraction,
        bias_fractions=xs,
        efficiencies=ys,
        dark_fractions=dxs,
        dark_rates=dys,
        _norm=norm,
        _dark_norm=dnorm,
    )


def default_two_point_curve(
    params: DetectorParams,
    anchor_fraction: float = DEFAULT_ANCHOR_FRACTION,
    anchor_efficiency: Optional[float] = None,
) -> EfficiencyCurve:
    """Exponential curve through ``(I_0, eta_0)`` and ``(anchor_fraction * I_0, anchor_efficiency)``.

    ``anchor_efficiency`` is absolute; by default it is ``eta_0`` scaled by
    the reference ratio 0.122 % / 18 %.
    """
    if not 0 < anchor_fraction < 1:
        raise DomainError(f"anchor_fraction {anchor_fraction!r} must lie in (0, 1)")
    eta0 = params.base_efficiency
    if anchor_efficiency is None:
        anchor_efficiency = eta0 * DEFAULT_ANCHOR_RELATIVE
    if not 0 < anchor_efficiency < eta0:
        raise DomainError(
            f"anchor_efficiency {anchor_efficiency!r} must lie in (0, base_efficiency={eta0!r})"
        )
    steepness = math.log(eta0 / anchor_efficiency) / (1.0 - anchor_fraction)
    return EfficiencyCurve(operating_fraction=params.operating_fraction, steepness=steepness)


@dataclass(frozen=True)
class Detector:
    """A detector channel: parameters plus its efficiency curve."""

    params: DetectorParams
    curve: EfficiencyCurve

    @property
    def name(self) -> str:
        return self.params.name


def recovery_time_constant(params: DetectorParams) -> float:
    """``tau = L_k / R_L`` in seconds."""
    return params.kinetic_inductance / params.load_resistance


def bias_current(params: DetectorParams, t):
    """Bias current a time ``t`` after a hotspot reset."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError(f"time since reset must be >= 0, got {t.min()!r}")
    i = params.operating_bias * -np.expm1(-t / recovery_time_constant(params))
    return i if i.ndim else float(i)


def time_to_bias_fraction(params: DetectorParams, fraction: float) -> float:
    """Time for the bias to recover to ``fraction * I_0`` (inverse of :func:`bias_current`)."""
    if not 0 < fraction < 1:
        raise DomainError(f"bias fraction {fraction!r} must lie in (0, 1)")
    return -recovery_time_constant(params) * math.log1p(-fraction)


def threshold_bias_fraction(params: DetectorParams) -> float:
    """Smallest ``I_b / I_0`` whose output pulse reaches the discriminator threshold."""
    phi = params.discriminator_threshold / params.pulse_height
    if phi >= 1:
        raise ConfigurationError(
            f"discriminator_threshold={params.discriminator_threshold!r} is never reached"
        )
    return phi


def threshold_recovery_time(params: DetectorParams) -> float:
    """Time after a reset until pulses are registered again (0 if no threshold)."""
    phi = threshold_bias_fraction(params)
    return 0.0 if phi == 0 else time_to_bias_fraction(params, phi)


def efficiency_at_bias(curve: EfficiencyCurve, params: DetectorParams, i_b):
    """Absolute detection efficiency ``eta_0 * f(i_b / I_c)``, clamped to [0, 1]."""
    i = np.asarray(i_b, dtype=float)
    if np.any(i < 0) or np.any(i > params.critical_current):
        raise DomainError(
            f"bias current must lie in [0, I_c={params.critical_current!r}], got {i_b!r}"
        )
    eta = np.clip(params.base_efficiency * curve.relative(i / params.critical_current), 0.0, 1.0)
    return eta if eta.ndim else float(eta)


def click_probability(mean_photons, efficiency, dark_per_slot=0.0):
    """Probability of at least one event: ``1 - exp(-gamma - |alpha|^2 eta)``."""
    mu = np.asarray(mean_photons, dtype=float)
    eta = np.asarray(efficiency, dtype=float)
    gam = np.asarray(dark_per_slot, dtype=float)
    if np.any(mu < 0) or np.any(eta < 0) or np.any(gam < 0):
        raise DomainError("mean_photons, efficiency and dark_per_slot must be non-negative")
    if np.any(eta > 1):
        raise DomainError(f"efficiency {efficiency!r} exceeds 1")
    p = -np.expm1(-gam - mu * eta)
    return p if p.ndim else float(p)
