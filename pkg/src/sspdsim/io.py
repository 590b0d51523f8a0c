"""Detector files, efficiency-curve CSVs, bundled presets and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .detector import Detector, DetectorParams, default_two_point_curve, load_curve
from .exceptions import ConfigurationError, CurveFormatError

PRESETS = ("ch2", "ch4", "ch5", "ch6")
PARAM_KEYS = {f.name for f in dataclasses.fields(DetectorParams)}
EXTRA_KEYS = {"curve_file", "curve_anchor_fraction", "curve_anchor_efficiency"}
REQUIRED_KEYS = {"name", "critical_current", "kinetic_inductance", "base_efficiency"}


def _read_json(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")
    return data


def params_from_mapping(data: Mapping, source: str = "<mapping>") -> DetectorParams:
    unknown = sorted(set(data) - PARAM_KEYS - EXTRA_KEYS)
    if unknown:
        raise ConfigurationError(f"{source}: unknown key {unknown[0]!r}")
    missing = sorted(REQUIRED_KEYS - set(data))
    if missing:
        raise ConfigurationError(f"{source}: missing required key {missing[0]!r}")
    kwargs = {k: v for k, v in data.items() if k in PARAM_KEYS}
    for k, v in kwargs.items():
        if k != "name" and v is not None and not isinstance(v, (int, float)):
            raise ConfigurationError(f"{source}: {k}={v!r} is not a number")
    try:
        return DetectorParams(**kwargs)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None


def load_detector(path) -> DetectorParams:
    """Validated :class:`DetectorParams` from a JSON detector file."""
    return params_from_mapping(_read_json(path), str(path))


def load_curve_csv(path, params: DetectorParams):
    """Efficiency curve from ``bias_fraction,efficiency[,dark_rate_hz]`` CSV."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CurveFormatError(f"{path}: empty file") from None
        if header[:2] != ["bias_fraction", "efficiency"] or header[2:] not in ([], ["dark_rate_hz"]):
            raise CurveFormatError(f"{path}: header must be bias_fraction,efficiency[,dark_rate_hz], got {header}")
        rows = []
        for i, row in enumerate(reader):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CurveFormatError(f"{path}: expected {len(header)} columns", row=i)
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise CurveFormatError(f"{path}: non-numeric value in {row}", row=i) from None
    points = [(r[0], r[1]) for r in rows]
    dark = [(r[0], r[2]) for r in rows] if len(header) == 3 else None
    return load_curve(points, params.operating_fraction, dark)


def detector_from_mapping(data: Mapping, base_dir: Path, source: str) -> Detector:
    params = params_from_mapping(data, source)
    if data.get("curve_file"):
        curve_path = Path(data["curve_file"])
        if not curve_path.is_absolute():
            curve_path = base_dir / curve_path
        curve = load_curve_csv(curve_path, params)
    else:
        curve = default_two_point_curve(
            params,
            data.get("curve_anchor_fraction", 0.72),
            data.get("curve_anchor_efficiency"),
        )
    return Detector(params, curve)


def load_device(path, curve_file: Optional[str] = None) -> Detector:
    """Detector parameters plus curve; ``curve_file`` overrides the file's own entry."""
    path = Path(path)
    data = _read_json(path)
    if curve_file is not None:
        data = {**data, "curve_file": str(Path(curve_file).resolve())}
    return detector_from_mapping(data, path.parent, str(path))


def preset(name: str) -> Detector:
    """One of the bundled channels ``ch2``, ``ch4``, ``ch5``, ``ch6``."""
    key = name.lower().removesuffix(".json")
    if key not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("sspdsim").joinpath(f"presets/{key}.json").read_text(encoding="utf-8")
    return detector_from_mapping(json.loads(text), Path("."), f"preset:{key}")


def resolve_detector(ref: str, curve_file: Optional[str] = None) -> Detector:
    """A file path if it exists, otherwise a bundled preset name such as ``ch5.json``."""
    path = Path(ref)
    if path.is_file():
        return load_device(path, curve_file)
    det = preset(path.name)
    if curve_file is not None:
        det = Detector(det.params, load_curve_csv(curve_file, det.params))
    return det


def fmt(x) -> str:
    """Shortest round-trip representation of a number."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def header_lines(config: Mapping) -> list:
    lines = [f"# sspdsim {__version__}"]
    lines += [f"# {k}={fmt(v)}" for k, v in sorted(config.items())]
    return lines


def render_csv(columns: Sequence[str], rows: Iterable[Sequence], config: Optional[Mapping] = None) -> str:
    buf = io.StringIO()
    if config is not None:
        buf.write("\n".join(header_lines(config)) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def render_report(values: Mapping, config: Optional[Mapping] = None) -> str:
    lines = header_lines(config) if config is not None else []
    lines += [f"{k}={fmt(v)}" for k, v in values.items()]
    return "\n".join(lines) + "\n"


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")
