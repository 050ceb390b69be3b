"""Flat key=value configuration files, CSV formatting and run manifests.

Grammar (one entry per line)::

    # comment                  full-line or trailing comments start with '#'
    key = value                surrounding whitespace is ignored
    coarse_steps = 16, 32, 64  lists are comma separated

Keys are the :class:`~snse_em.experiments.config.StudyConfig` field names
plus ``modes``, ``period`` and ``dealias_fraction`` for the grid. Unknown or
repeated keys are rejected. ``master_seed`` is required (it may also come
from the command line). Values of ``period`` may be written as multiples of
pi (``2pi``, ``0.5*pi``); ``dealias_fraction`` accepts ``p/q``.
"""

from __future__ import annotations

import math
import platform
import re
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np
import scipy

from . import __version__
from .experiments.config import StudyConfig
from .spectral import ConfigurationError, GridSpec
from .experiments.studies import format_number

_KEY = re.compile(r"^[a-z][a-z0-9_]*$")
_PI = re.compile(r"^([0-9.eE+-]*)\s*\*?\s*pi$")


def _int(key: str, text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise ConfigurationError(f"{key}: expected an integer, got {text!r}") from None


def _float(key: str, text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ConfigurationError(f"{key}: expected a number, got {text!r}") from None
    if math.isnan(v):
        raise ConfigurationError(f"{key}: NaN is not allowed")
    return v


def _period(key: str, text: str) -> float:
    m = _PI.match(text.strip())
    if m:
        coef = m.group(1)
        return (1.0 if coef in ("", "+") else _float(key, coef)) * math.pi
    return _float(key, text)


def _fraction(key: str, text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigurationError(f"{key}: expected a fraction such as 2/3, got {text!r}") from None


def _list(item: Callable[[str, str], object]):
    def parse(key: str, text: str):
        parts = [p.strip() for p in text.split(",")]
        if not parts or any(p == "" for p in parts):
            raise ConfigurationError(f"{key}: expected a comma separated list, got {text!r}")
        return tuple(item(key, p) for p in parts)
    return parse


def _optional_float(key: str, text: str):
    return None if text.strip().lower() == "none" else _float(key, text)


def _optional_int(key: str, text: str):
    return None if text.strip().lower() == "none" else _int(key, text)


def _str(key: str, text: str) -> str:
    return text.strip().lower()


GRID_KEYS: dict[str, Callable] = {"modes": _int, "period": _period, "dealias_fraction": _fraction}

STUDY_KEYS: dict[str, Callable] = {
    "viscosity": _float,
    "horizon": _float,
    "noise_kind": _str,
    "noise_strength": _float,
    "coarse_steps": _list(_int),
    "reference_multiple": _int,
    "samples": _int,
    "master_seed": _int,
    "q_orders": _list(_float),
    "m_orders": _list(_float),
    "initial": _str,
    "amplitude": _float,
    "amplitude_min": _optional_float,
    "amplitude_max": _optional_float,
    "picard_tol": _float,
    "picard_max_iters": _int,
    "max_retries": _int,
    "sigma": _optional_float,
    "martingale_checkpoints": _int,
    "simulate_steps": _optional_int,
    "synthetic_rate": _optional_float,
    "synthetic_constant": _float,
    "gronwall_instances": _int,
    "gronwall_samples": _int,
    "gronwall_steps": _int,
    "gronwall_q": _float,
    "gronwall_alpha": _float,
}

KNOWN_KEYS = {**GRID_KEYS, **STUDY_KEYS}


def read_entries(text: str, source: str = "<config>") -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            raise ConfigurationError(f"{source}:{lineno}: malformed key {key!r}")
        if key not in KNOWN_KEYS:
            raise ConfigurationError(f"{key}: unknown configuration key ({source}:{lineno})")
        if key in entries:
            raise ConfigurationError(f"{key}: repeated configuration key ({source}:{lineno})")
        if value == "":
            raise ConfigurationError(f"{key}: missing value ({source}:{lineno})")
        entries[key] = value
    return entries


def config_from_entries(entries: Mapping[str, str], seed_override: int | None = None) -> StudyConfig:
    for key in entries:
        if key not in KNOWN_KEYS:
            raise ConfigurationError(f"{key}: unknown configuration key")
    grid_args = {k: GRID_KEYS[k](k, v) for k, v in entries.items() if k in GRID_KEYS}
    study_args = {k: STUDY_KEYS[k](k, v) for k, v in entries.items() if k in STUDY_KEYS}
    if seed_override is not None:
        study_args["master_seed"] = int(seed_override)
    if "master_seed" not in study_args:
        raise ConfigurationError("master_seed: required (set it in the file or pass --seed)")
    try:
        grid = GridSpec(**grid_args)
    except ConfigurationError as exc:
        msg = str(exc)
        key = next((k for k in GRID_KEYS if k in msg), "modes")
        raise ConfigurationError(f"{key}: {msg}") from None
    return StudyConfig(grid=grid, **study_args)


def parse_config(path, seed_override: int | None = None) -> StudyConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc.strerror}") from None
    return config_from_entries(read_entries(text, str(path)), seed_override)


def _render(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(_render(v) for v in value)
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    return str(getattr(value, "value", value))


def config_entries(cfg: StudyConfig) -> dict[str, str]:
    """Every key of ``cfg`` rendered in the config grammar (round-trips through parsing)."""
    out = {"modes": _render(cfg.grid.modes), "period": _render(float(cfg.grid.period)),
           "dealias_fraction": _render(cfg.grid.dealias_fraction)}
    for key in STUDY_KEYS:
        out[key] = _render(getattr(cfg, key))
    return out


def dump_config(cfg: StudyConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config_entries(cfg).items())


# ---------------------------------------------------------------------------
# CSV and manifest


def csv_text(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    def cell(v):
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return format_number(v)
        return str(v)
    lines = [",".join(header)]
    lines += [",".join(cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def environment_note() -> str:
    return (f"python {platform.python_version()}; numpy {np.__version__}; scipy {scipy.__version__}; "
            f"{platform.system()} {platform.machine()}")


def manifest_text(subcommand: str, cfg: StudyConfig, threads: int, stages: Mapping[str, float],
                  sample_seeds: Iterable[tuple[int, int]] = (), extra: Mapping[str, object] | None = None) -> str:
    lines = ["# snse-em run manifest",
             f"artifact_version = {__version__}",
             f"subcommand = {subcommand}",
             f"threads = {threads}",
             f"master_seed = {cfg.master_seed}"]
    lines += [f"config.{k} = {v}" for k, v in config_entries(cfg).items()]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value if isinstance(value, str) else _render(value)}")
    lines += [f"sample_seed.{i} = {s}" for i, s in sample_seeds]
    lines += [f"stage.{name}.seconds = {sec:.3f}" for name, sec in stages.items()]
    lines.append(f"environment = {environment_note()}")
    return "\n".join(lines) + "\n"
