"""Run configuration: an INI file plus ``--set key=value`` overrides.

A config file may hold a ``[common]`` section and one section per
experiment; only ``[common]`` and the section named after the selected
experiment are read.  Every key must belong to the experiment's schema.
All problems are collected and reported together.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_list(cast: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(cast(t) for t in items)
    return parse


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"not a finite number: {text!r}")
    return value


_PARSERS = {
    "float": _parse_float,
    "int": int,
    "str": str.strip,
    "bool": _parse_bool,
    "floats": _parse_list(_parse_float),
    "ints": _parse_list(int),
}


@dataclass(frozen=True)
class Param:
    kind: str
    default: Any
    check: Callable[[Any], bool] | None = None
    rule: str = ""
    choices: tuple[str, ...] = ()

    def parse(self, text: str) -> Any:
        value = _PARSERS[self.kind](text)
        if self.choices and value not in self.choices:
            raise ValueError(f"must be one of {', '.join(self.choices)}")
        if self.check is not None:
            items = value if isinstance(value, tuple) else (value,)
            if not all(self.check(v) for v in items):
                raise ValueError(f"out of range ({self.rule})")
        return value


_nonneg = dict(check=lambda v: v >= 0, rule=">= 0")
_pos = dict(check=lambda v: v > 0, rule="> 0")
_r = dict(check=lambda v: 0 <= v <= 5, rule="0 <= r <= 5")

SCHEMA: dict[str, Param] = {
    "seed": Param("int", 0, **_nonneg),
    "gnuplot": Param("bool", False),
    "tail_tol": Param("float", 1e-10, check=lambda v: 0 < v < 1e-3, rule="0 < tail_tol < 1e-3"),
    "r_values": Param("floats", (0.5, 1.0, 1.5), **_r),
    "r": Param("float", 1.0, **_r),
    "m": Param("int", 2, check=lambda v: 1 <= v <= 64, rule="1 <= m <= 64"),
    "m_max": Param("int", 20, check=lambda v: 1 <= v <= 200, rule="1 <= m_max <= 200"),
    "cutoff": Param("int", 12, check=lambda v: 1 <= v <= 64, rule="1 <= cutoff <= 64"),
    "trials": Param("int", 2000, check=lambda v: 1 <= v <= 10_000_000, rule="1 <= trials <= 1e7"),
    "eta_A_tau": Param("float", 0.05, **_nonneg),
    "eta_B_tau": Param("float", 0.05, **_nonneg),
    "eta0_over_kappac": Param("float", 0.0, **_nonneg),
    "lindblad": Param("bool", False),
    "mode": Param("str", "fock", choices=("fock", "closed-form")),
    "qnd": Param("str", "ideal", choices=("ideal", "homodyne")),
    "j_values": Param("ints", (0, 1, 2, 3), **_nonneg),
    # QND parameters; frequencies are given as f = omega / 2 pi in Hz
    "gamma_hz": Param("float", 100e6, **_pos),
    "chi_hz": Param("float", 0.2e6, **_pos),
    "kappa_hz": Param("float", 4e6, **_nonneg),
    "g_mag": Param("float", 50.0, **_pos),
    "T": Param("float", 8e-9, **_pos),
    "delta_t": Param("float", 0.0, **_nonneg),
    "beta1_hz": Param("float", 0.0, **_nonneg),
    "beta2_hz": Param("float", 0.0, **_nonneg),
    "mu": Param("float", 1.0, check=lambda v: 0 <= v <= 1, rule="0 <= mu <= 1"),
    "nu": Param("float", 1.0, check=lambda v: 0 < v <= 1, rule="0 < nu <= 1"),
    "chi_i_over_chi": Param("float", 0.1, **_nonneg),
    "imbalance_chi2_over_chi1": Param("float", 1.0, **_pos),
    "imbalance_gamma2_over_gamma1": Param("float", 1.0, **_pos),
    "n1": Param("float", 1.4, **_nonneg),
    "n2": Param("float", 1.4, **_nonneg),
    # EIT medium
    "coupling_density": Param("float", 0.2, **_nonneg),
    "g24_hz": Param("float", 10e6, **_nonneg),
    "gamma42_hz": Param("float", 30e6, **_nonneg),
    "delta42_over_gamma42": Param("float", 10.0, **_pos),
}

_QND_KEYS = ("gamma_hz", "chi_hz", "kappa_hz", "g_mag", "T", "delta_t", "beta1_hz",
             "beta2_hz", "mu", "nu", "chi_i_over_chi", "imbalance_chi2_over_chi1",
             "imbalance_gamma2_over_gamma1", "n1", "n2")
_LOSS_KEYS = ("eta_A_tau", "eta_B_tau", "eta0_over_kappac")

EXPERIMENTS: dict[str, tuple[str, ...]] = {
    "fig2": ("r_values", "tail_tol", "gnuplot"),
    "fig3": ("r_values", "m", "tail_tol", "gnuplot"),
    "fig4": ("r_values", "m_max", "tail_tol", "gnuplot"),
    "concentrate": ("m", "r", "cutoff", "trials"),
    "purify-lossy": ("m", "r", "cutoff", "lindblad") + _LOSS_KEYS,
    "qnd-budget": _QND_KEYS,
    "qnd-simulate": _QND_KEYS + ("j_values", "trials"),
    "eit-kerr": ("coupling_density", "g24_hz", "gamma42_hz", "delta42_over_gamma42"),
    "end-to-end": ("m", "r", "cutoff", "trials", "mode", "qnd") + _LOSS_KEYS + _QND_KEYS,
}

# experiment-specific defaults that differ from the schema default
_DEFAULT_OVERRIDES = {
    ("fig3", "m"): 4,
    ("concentrate", "trials"): 100_000,
}


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    parameters: Mapping[str, Any]
    output_dir: Path = Path(".")
    format: str = "csv"
    sources: Mapping[str, str] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.parameters[key]

    @property
    def seed(self) -> int:
        return self.parameters["seed"]


def keys_for(experiment: str) -> tuple[str, ...]:
    return ("seed",) + EXPERIMENTS[experiment]


def default_for(experiment: str, key: str) -> Any:
    return _DEFAULT_OVERRIDES.get((experiment, key), SCHEMA[key].default)


def _read_file(path: Path, experiment: str, errors: list[str]) -> dict[str, tuple[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keys are case-sensitive
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, UnicodeDecodeError, configparser.Error) as exc:
        errors.append(f"{path}: cannot read config: {exc}")
        return {}
    raw: dict[str, tuple[str, str]] = {}
    for section in ("common", experiment):
        if parser.has_section(section):
            for key, value in parser.items(section):
                raw[key] = (value, f"{path}[{section}]")
    return raw


def parse_config(experiment: str, config_file: str | Path | None = None,
                 overrides: Sequence[str] = (), *, seed: int | None = None,
                 output_dir: str | Path = ".", fmt: str = "csv") -> RunConfig:
    """Merge defaults, file values and ``key=value`` overrides, then validate."""
    errors: list[str] = []
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; "
                          f"choose from {', '.join(EXPERIMENTS)}")
    if fmt not in ("csv", "tsv"):
        errors.append(f"format: must be csv or tsv, got {fmt!r}")
    raw: dict[str, tuple[str, str]] = {}
    if config_file is not None:
        raw.update(_read_file(Path(config_file), experiment, errors))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            errors.append(f"--set {item!r}: expected key=value")
            continue
        raw[key.strip()] = (value, "--set")
    if seed is not None:
        raw["seed"] = (str(seed), "--seed")

    allowed = keys_for(experiment)
    params = {k: default_for(experiment, k) for k in allowed}
    sources = {k: "default" for k in allowed}
    for key, (text, origin) in sorted(raw.items()):
        if key not in allowed:
            hint = "unknown key" if key not in SCHEMA else f"not used by {experiment}"
            errors.append(f"{key}: {hint} (from {origin})")
            continue
        try:
            params[key] = SCHEMA[key].parse(text)
            sources[key] = origin
        except ValueError as exc:
            errors.append(f"{key}={text.strip()!r}: {exc} (from {origin})")
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return RunConfig(experiment, params, Path(output_dir), fmt, sources)
