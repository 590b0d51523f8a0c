"""Command-line entry point: ``sspdsim <subcommand> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass, field
from typing import Optional

from . import __version__
from .attack import (
    DEFAULT_ESCAPE,
    DEFAULT_MAX_COUNT_RATE,
    REFERENCE_BASELINE_COINCIDENCE,
    REFERENCE_FORCING_P1,
    blinding_schedule,
    coincidence_countermeasure,
    dps_double_pulse_power,
    double_pulse_port_control,
    forcing_photons_for,
    min_blinding_power,
    threshold_efficiency,
)
from .detector import recovery_time_constant, threshold_bias_fraction, threshold_recovery_time
from .exceptions import ConfigurationError, SSPDError
from .io import render_csv, render_report, resolve_detector, write_text
from .oracle import compare, markov_exact, simulate
from .pulse_train import (
    DEFAULT_RMAX,
    EXACT_AGE,
    MODES,
    PAPER_APPROX,
    PulseTrain,
    evolve,
    parse_power_range,
    power_sweep,
)

SUBCOMMANDS = ("recover", "sweep", "blind", "force", "coincidence", "validate")


@dataclass
class RunConfig:
    """Fully resolved settings of one run; echoed into every output header."""

    subcommand: str
    detector: str = "ch5.json"
    forced_detector: Optional[str] = None
    curve_file: Optional[str] = None
    rep_rate_hz: float = 1e9
    wavelength_m: float = 1550e-9
    power_dbm: Optional[str] = None
    slot_budget: int = 1_000_000
    slots: int = 100
    trials: int = 100_000
    seed: int = 7
    mode: str = EXACT_AGE
    discriminator: str = "hard"
    r_max_hz: float = DEFAULT_RMAX
    rel_tol: float = 1e-6
    escape: float = DEFAULT_ESCAPE
    max_count_rate: float = DEFAULT_MAX_COUNT_RATE
    bracket_dbm: str = "-70:-10"
    blinding_photons: Optional[float] = None
    forcing_photons: Optional[float] = None
    p1: float = REFERENCE_FORCING_P1
    baseline: Optional[float] = None
    photons: float = 20.0
    max_dev: float = 1e-9
    min_coverage: float = 0.95
    workers: int = 1
    output: Optional[str] = None
    trace_csv: Optional[str] = None
    extras: dict = field(default_factory=dict)
    accepted: Optional[frozenset] = None

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigurationError(f"unknown subcommand {self.subcommand!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.slot_budget < 1 or self.slots < 1:
            raise ConfigurationError("slot budget and slot count must be >= 1")
        if self.power_dbm is not None:
            parse_power_range(self.power_dbm)

    def as_header(self) -> dict:
        skip = ("extras", "accepted", "output", "trace_csv")
        d = {k: v for k, v in dataclasses.asdict(self).items() if k not in skip and v is not None}
        if self.accepted is not None:
            d = {k: v for k, v in d.items() if k in self.accepted or k == "subcommand"}
        d.update(self.extras)
        d["version"] = __version__
        return d


def _bracket(text):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigurationError(f"bracket {text!r} is not lo:hi") from None
    return lo, hi


def _baseline(text):
    return REFERENCE_BASELINE_COINCIDENCE if text == "reference" else float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sspdsim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sspdsim {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--detector", default="ch5.json", help="detector JSON file or bundled preset name")
    common.add_argument("--curve-file", default=None, help="efficiency-curve CSV overriding the detector's own")
    common.add_argument("--rep-rate-hz", type=float, default=1e9)
    common.add_argument("--wavelength-m", type=float, default=1550e-9)
    common.add_argument("--mode", choices=MODES, default=EXACT_AGE)
    common.add_argument("--slot-budget", type=int, default=1_000_000)
    common.add_argument("--output", "-o", default=None, help="write the report here instead of stdout")

    sub.add_parser("recover", parents=[common], help="recovery time constant and threshold recovery time")

    s = sub.add_parser("sweep", parents=[common], help="steady-state count rate versus input power")
    s.add_argument("--power-dbm", default="-60:-25:0.5", help="start:stop:step in dBm")
    s.add_argument("--r-max-hz", type=float, default=DEFAULT_RMAX)
    s.add_argument("--discriminator", choices=("hard", "nonparalyzable"), default="hard")
    s.add_argument("--rel-tol", type=float, default=1e-6)
    s.add_argument("--workers", type=int, default=1)

    attack = argparse.ArgumentParser(add_help=False)
    attack.add_argument("--escape", type=float, default=DEFAULT_ESCAPE, help="allowed escape probability per pulse")
    attack.add_argument("--blinding-photons", type=float, default=None, help="override the plan's photons per pulse")
    attack.add_argument("--trace-csv", default=None, help="write the per-slot trace of the blinding train here")
    attack.add_argument("--slots", type=int, default=20, help="slots in the trace appendix")

    b = sub.add_parser("blind", parents=[common, attack], help="tailored blinding schedule and minimum power")
    b.add_argument("--max-count-rate", type=float, default=DEFAULT_MAX_COUNT_RATE)
    b.add_argument("--bracket-dbm", default="-70:-10")

    forcing = argparse.ArgumentParser(add_help=False)
    forcing.add_argument("--forced-detector", default="ch2.json")
    forcing.add_argument("--forcing-photons", type=float, default=None)
    forcing.add_argument("--p1", type=float, default=REFERENCE_FORCING_P1,
                         help="target first-pulse click probability used when --forcing-photons is absent")

    sub.add_parser("force", parents=[common, attack, forcing], help="double-pulse port control")
    c = sub.add_parser("coincidence", parents=[common, attack, forcing], help="phase-flip coincidence monitor")
    c.add_argument("--baseline", required=True,
                   help="normal-operation coincidence probability per slot, or 'reference'")

    v = sub.add_parser("validate", parents=[common], help="recursion vs exact chain vs Monte Carlo")
    v.add_argument("--slots", type=int, default=100)
    v.add_argument("--trials", type=int, default=100_000)
    v.add_argument("--seed", type=int, default=7)
    v.add_argument("--photons", type=float, default=20.0, help="mean photons per pulse")
    v.add_argument("--max-dev", type=float, default=1e-9)
    v.add_argument("--min-coverage", type=float, default=0.95)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    values = {k: v for k, v in vars(args).items() if k in names}
    if "baseline" in values:
        values["baseline"] = _baseline(values["baseline"])
    return RunConfig(**values, accepted=frozenset(values))


def _emit(cfg: RunConfig, text: str, out):
    if cfg.output:
        write_text(cfg.output, text)
    else:
        out.write(text)


def _plan(cfg, target, forced=None):
    plan = blinding_schedule(target, cfg.escape)
    if cfg.blinding_photons is not None:
        plan = dataclasses.replace(plan, photons_per_blinding_pulse=cfg.blinding_photons)
    if forced is not None:
        n_f = cfg.forcing_photons
        if n_f is None:
            n_f = forcing_photons_for(forced, cfg.p1, 1.0 / cfg.rep_rate_hz)
        plan = plan.with_forcing(n_f)
    return plan


def _trace_appendix(cfg, target, plan):
    if not cfg.trace_csv:
        return
    train = PulseTrain(plan.photons_per_blinding_pulse, plan.blinding_period, cfg.slots, cfg.wavelength_m)
    tr = evolve(target.params, target.curve, train, PAPER_APPROX)
    rows = zip(range(1, len(tr) + 1), tr.s_off, tr.s_on, tr.g, tr.p_on)
    header = {**cfg.as_header(), "trace_mode": PAPER_APPROX}
    write_text(cfg.trace_csv, render_csv(["slot", "s_off", "s_on", "g", "p_on"], rows, header))


def run(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    target = resolve_detector(cfg.detector, cfg.curve_file)
    p = target.params
    T = 1.0 / cfg.rep_rate_hz

    if cfg.subcommand == "recover":
        tau = recovery_time_constant(p)
        t_th = threshold_recovery_time(p)
        report = {
            "detector": p.name,
            "tau_s": tau,
            "tau_ns": round(tau * 1e9, 6),
            "threshold_fraction": threshold_bias_fraction(p),
            "threshold_recovery_s": t_th,
            "threshold_recovery_ns": round(t_th * 1e9, 6),
        }
        _emit(cfg, render_report(report, cfg.as_header()), out)
        return 0

    if cfg.subcommand == "sweep":
        rows = power_sweep(
            p, target.curve, cfg.rep_rate_hz, parse_power_range(cfg.power_dbm), cfg.r_max_hz, cfg.mode,
            cfg.discriminator, wavelength=cfg.wavelength_m, slot_budget=cfg.slot_budget,
            rel_tol=cfg.rel_tol, workers=cfg.workers,
        )
        cols = ["power_dbm", "photons_per_pulse", "model_rate_hz", "observed_rate_hz"]
        _emit(cfg, render_csv(cols, rows, cfg.as_header()), out)
        return 0

    if cfg.subcommand == "blind":
        plan = _plan(cfg, target)
        power = min_blinding_power(
            target, cfg.rep_rate_hz, cfg.max_count_rate, bracket_dbm=_bracket(cfg.bracket_dbm),
            mode=cfg.mode, wavelength=cfg.wavelength_m, slot_budget=cfg.slot_budget,
        )
        report = {
            "target": plan.target,
            "blinding_period_s": plan.blinding_period,
            "photons_per_blinding_pulse": plan.photons_per_blinding_pulse,
            "threshold_efficiency": threshold_efficiency(target),
            "retrip_probability": plan.retrip_probability,
            "dps_double_pulse_power_w": dps_double_pulse_power(plan, 2, cfg.wavelength_m),
            "single_detector_power_w": dps_double_pulse_power(plan, 1, cfg.wavelength_m),
            "min_blinding_power_w": power.watts,
            "min_blinding_power_dbm": power.dbm,
            "rate_at_min_power_hz": power.rate_hz,
            "search_evaluations": power.evaluations,
            "search_degenerate": power.degenerate,
        }
        _emit(cfg, render_report(report, cfg.as_header()), out)
        _trace_appendix(cfg, target, plan)
        return 0

    if cfg.subcommand in ("force", "coincidence"):
        forced = resolve_detector(cfg.forced_detector)
        plan = _plan(cfg, target, forced)
    if cfg.subcommand == "force":
        rep = double_pulse_port_control(target, forced, plan, T)
        _emit(cfg, render_report(dataclasses.asdict(rep), cfg.as_header()), out)
        _trace_appendix(cfg, target, plan)
        return 0

    if cfg.subcommand == "coincidence":
        rep = coincidence_countermeasure(target, forced, plan, cfg.baseline, T)
        report = {"blinded": target.name, "forced": forced.name,
                  "photons_per_blinding_pulse": plan.photons_per_blinding_pulse,
                  "forcing_photons_per_pulse": plan.forcing_photons_per_pulse,
                  **dataclasses.asdict(rep)}
        _emit(cfg, render_report(report, cfg.as_header()), out)
        _trace_appendix(cfg, target, plan)
        return 0

    # validate
    train = PulseTrain(cfg.photons, T, cfg.slots, cfg.wavelength_m)
    tr = evolve(p, target.curve, train, cfg.mode)
    exact = markov_exact(p, target.curve, train, mode=cfg.mode)
    mc = simulate(p, target.curve, train, cfg.trials, cfg.seed, cfg.mode)
    dev = compare(tr, exact, "s_on", max_abs=cfg.max_dev)
    dev_p = compare(tr, exact, "p_on", max_abs=cfg.max_dev)
    stat = compare(exact, mc, "s_on", min_coverage=cfg.min_coverage)
    rows = zip(range(1, cfg.slots + 1), tr.s_on, exact.s_on, mc.s_on, mc.stderr_s_on, stat.z)
    _emit(cfg, render_csv(["slot", "recursion", "exact", "mc", "mc_stderr", "z"], rows, cfg.as_header()), out)
    ok = dev.passed and dev_p.passed and stat.passed
    for label, r in (("recursion_vs_exact", dev), ("recursion_vs_exact", dev_p), ("exact_vs_mc", stat)):
        sys.stderr.write(f"{label} {r.summary()}\n")
    sys.stderr.write(f"validate {'PASS' if ok else 'FAIL'}\n")
    return 0 if ok else 3


RANGE_OPTIONS = ("--power-dbm", "--bracket-dbm")


def _join_range_values(argv):
    """Attach values like ``-60:-25:0.5`` to their option; argparse would read them as flags."""
    out = []
    it = iter(argv)
    for arg in it:
        if arg in RANGE_OPTIONS:
            value = next(it, None)
            out.append(arg if value is None else f"{arg}={value}")
        else:
            out.append(arg)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_range_values(sys.argv[1:] if argv is None else argv))
    try:
        cfg = config_from_args(args)
        return run(cfg)
    except (SSPDError, OSError, ValueError) as exc:
        msg = str(exc).replace("\\", "\\\\").replace('"', '\\"')
        sys.stderr.write(f'error: type={type(exc).__name__} message="{msg}"\n')
        return 1


if __name__ == "__main__":
    sys.exit(main())
