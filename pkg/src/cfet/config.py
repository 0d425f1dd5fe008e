"""Strict flat key-value run configuration (INI sections, no schema drift).

Unknown sections or keys are rejected outright so config typos cannot change
behavior silently.  Every run artifact embeds the parsed values, which keeps
CSV outputs reproducible from their config alone.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .engines import EngineKind, EngineSpec
from .models import DickeParams, SpinModelParams
from .propagators import SchemeKind

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


_MODEL_KEYS = {
    "spin": {"kind", "j", "transition", "drive", "frequency", "loss",
             "frequency_start", "frequency_end"},
    "dissipative-spin": {"kind", "j", "transition", "drive", "frequency", "loss",
                         "frequency_start", "frequency_end"},
    "dicke": {"kind", "j", "n_max", "atom", "cavity", "coupling", "modulation",
              "mod_frequency", "loss", "backend"},
}

_RUN_KEYS = {
    "scheme", "engine", "tolerance", "dt", "t_start", "t_end", "stride",
    "observables", "seed", "deterministic",
}

_BENCH_KEYS = {
    "schemes", "dts", "reference_dt", "eps_match", "t_end",
}

_SWEEP_KEYS = {
    "parameter", "start", "stop", "step", "values", "settle_tol", "max_periods",
    "n_samples", "with_spectrum", "min_prominence",
}

_SPECTRUM_KEYS = {
    "tau_max", "dtau", "n_phase", "omega_min", "omega_max", "omega_step",
    "min_prominence", "settle_tol", "max_periods",
}

_SCHEMES = {k.value: k for k in SchemeKind}
_ENGINES = {k.value: k for k in EngineKind}


@dataclass
class RunConfig:
    """Parsed configuration: model parameters plus per-command blocks."""

    model_kind: str
    model: SpinModelParams | DickeParams
    scheme_kind: SchemeKind
    engine_kind: EngineKind | str
    tolerance: float = 1e-12
    dt: float = 0.1
    t_start: float = 0.0
    t_end: float = 10.0
    stride: int = 1
    observables: tuple[str, ...] = ("jz",)
    seed: int = 0
    deterministic: bool = False
    ramp: tuple[float, float] | None = None
    dicke_backend: str = "auto"
    bench: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    spectrum: dict = field(default_factory=dict)

    def engine_spec(self) -> EngineSpec:
        kind = self.engine_kind
        if kind == "auto":
            closed = self.model_kind == "spin"
            kind = EngineKind.CHEBYSHEV_HERMITIAN if closed else EngineKind.CHEBYSHEV_SHIFTED
        return EngineSpec(kind=kind, tolerance=self.tolerance)


def _check_keys(section: str, present, allowed: set[str]):
    unknown = set(present) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")


def _getfloat(sec, key, default=None, required=False):
    if key not in sec:
        if required:
            raise ConfigError(f"missing required key '{key}'")
        return default
    try:
        return float(sec[key])
    except ValueError as err:
        raise ConfigError(f"key '{key}': {err}") from err


def _getint(sec, key, default=None):
    if key not in sec:
        return default
    try:
        return int(sec[key])
    except ValueError as err:
        raise ConfigError(f"key '{key}': {err}") from err


def _getbool(sec, key, default=False):
    if key not in sec:
        return default
    val = sec[key].strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"key '{key}': not a boolean: {sec[key]!r}")


def load_config(path: str | Path) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    known_sections = {"model", "run", "bench", "sweep", "spectrum"}
    unknown = set(parser.sections()) - known_sections
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    if "model" not in parser:
        raise ConfigError("missing required [model] section")

    msec = parser["model"]
    kind = msec.get("kind", "").strip()
    if kind not in _MODEL_KEYS:
        raise ConfigError(f"model kind must be one of {sorted(_MODEL_KEYS)}, got {kind!r}")
    _check_keys("model", msec.keys(), _MODEL_KEYS[kind])

    ramp = None
    if kind in ("spin", "dissipative-spin"):
        loss = _getfloat(msec, "loss", 0.0)
        if kind == "dissipative-spin" and not loss > 0:
            raise ConfigError("dissipative-spin requires loss > 0")
        if kind == "spin" and loss != 0.0:
            raise ConfigError("closed spin model must have loss = 0 (use dissipative-spin)")
        model = SpinModelParams(
            j=_getfloat(msec, "j", 0.5),
            transition=_getfloat(msec, "transition", 1.0),
            drive=_getfloat(msec, "drive", 1.0),
            frequency=_getfloat(msec, "frequency", 1.0),
            loss=loss,
        )
        if "frequency_start" in msec or "frequency_end" in msec:
            ramp = (
                _getfloat(msec, "frequency_start", required=True),
                _getfloat(msec, "frequency_end", required=True),
            )
    else:
        try:
            model = DickeParams(
                j=_getfloat(msec, "j", 0.5),
                n_max=_getint(msec, "n_max", 12),
                atom=_getfloat(msec, "atom", 1.0),
                cavity=_getfloat(msec, "cavity", 1.0),
                coupling=_getfloat(msec, "coupling", 1.0),
                modulation=_getfloat(msec, "modulation", 0.0),
                mod_frequency=_getfloat(msec, "mod_frequency", 2.0),
                loss=_getfloat(msec, "loss", 0.0),
            )
        except ValueError as err:
            raise ConfigError(str(err)) from err

    rsec = parser["run"] if "run" in parser else {}
    if rsec:
        _check_keys("run", rsec.keys(), _RUN_KEYS)
    scheme_name = rsec.get("scheme", "cfet4-opt") if rsec else "cfet4-opt"
    if scheme_name not in _SCHEMES:
        raise ConfigError(f"unknown scheme {scheme_name!r}; choices: {sorted(_SCHEMES)}")
    engine_name = rsec.get("engine", "auto") if rsec else "auto"
    if engine_name != "auto" and engine_name not in _ENGINES:
        raise ConfigError(f"unknown engine {engine_name!r}; choices: auto, {sorted(_ENGINES)}")

    observables = tuple(
        s.strip() for s in (rsec.get("observables", "jz") if rsec else "jz").split(",") if s.strip()
    )

    cfg = RunConfig(
        model_kind=kind,
        model=model,
        scheme_kind=_SCHEMES[scheme_name],
        engine_kind=_ENGINES[engine_name] if engine_name != "auto" else "auto",
        tolerance=_getfloat(rsec, "tolerance", 1e-12) if rsec else 1e-12,
        dt=_getfloat(rsec, "dt", 0.1) if rsec else 0.1,
        t_start=_getfloat(rsec, "t_start", 0.0) if rsec else 0.0,
        t_end=_getfloat(rsec, "t_end", 10.0) if rsec else 10.0,
        stride=_getint(rsec, "stride", 1) if rsec else 1,
        observables=observables,
        seed=_getint(rsec, "seed", 0) if rsec else 0,
        deterministic=_getbool(rsec, "deterministic", False) if rsec else False,
        ramp=ramp,
        dicke_backend=msec.get("backend", "auto") if kind == "dicke" else "auto",
    )

    if "bench" in parser:
        bsec = parser["bench"]
        _check_keys("bench", bsec.keys(), _BENCH_KEYS)
        schemes = [s.strip() for s in bsec.get("schemes", "cfet4-opt,rk4").split(",")]
        for s in schemes:
            if s not in _SCHEMES:
                raise ConfigError(f"unknown bench scheme {s!r}")
        cfg.bench = {
            "schemes": [_SCHEMES[s] for s in schemes],
            "dts": _parse_float_list(bsec.get("dts", "")),
            "reference_dt": _getfloat(bsec, "reference_dt"),
            "eps_match": _parse_float_list(bsec.get("eps_match", "")),
            "t_end": _getfloat(bsec, "t_end", cfg.t_end),
        }
        if not cfg.bench["dts"]:
            raise ConfigError("[bench] requires a dts list")

    if "sweep" in parser:
        ssec = parser["sweep"]
        _check_keys("sweep", ssec.keys(), _SWEEP_KEYS)
        parameter = ssec.get("parameter", "mod_frequency")
        if parameter not in ("mod_frequency", "coupling"):
            raise ConfigError(f"sweep parameter must be mod_frequency or coupling, got {parameter!r}")
        values = _parse_float_list(ssec.get("values", ""))
        if not values:
            start = _getfloat(ssec, "start", required=True)
            stop = _getfloat(ssec, "stop", required=True)
            step = _getfloat(ssec, "step", required=True)
            n = int(round((stop - start) / step))
            values = [start + i * step for i in range(n + 1)]
        cfg.sweep = {
            "parameter": parameter,
            "values": values,
            "settle_tol": _getfloat(ssec, "settle_tol", 1e-8),
            "max_periods": _getint(ssec, "max_periods", 2000),
            "n_samples": _getint(ssec, "n_samples", 64),
            "with_spectrum": _getbool(ssec, "with_spectrum", False),
            "min_prominence": _getfloat(ssec, "min_prominence", 1e-4),
        }

    if "spectrum" in parser:
        psec = parser["spectrum"]
        _check_keys("spectrum", psec.keys(), _SPECTRUM_KEYS)
        cfg.spectrum = {
            "tau_max": _getfloat(psec, "tau_max", required=True),
            "dtau": _getfloat(psec, "dtau", required=True),
            "n_phase": _getint(psec, "n_phase", 16),
            "omega_min": _getfloat(psec, "omega_min", required=True),
            "omega_max": _getfloat(psec, "omega_max", required=True),
            "omega_step": _getfloat(psec, "omega_step", required=True),
            "min_prominence": _getfloat(psec, "min_prominence", 1e-4),
            "settle_tol": _getfloat(psec, "settle_tol", 1e-8),
            "max_periods": _getint(psec, "max_periods", 2000),
        }

    return cfg


def _parse_float_list(text: str) -> list[float]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    try:
        return [float(s) for s in items]
    except ValueError as err:
        raise ConfigError(f"bad float list {text!r}: {err}") from err
