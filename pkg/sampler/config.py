"""
Experiment configuration files and process settings.

Experiment files are flat `key = value` lines with `#` comments, read with
python-dotenv. Keys may be dotted (`sampler.eta`); arrays are comma-separated
scalars and an empty value means "not set".
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

from dotenv import dotenv_values, load_dotenv

from .errors import ConfigError
from .langevin import Constant, Decreasing, LmcConfig
from .proximal import (
    GeodesicRandomWalk,
    RGaussianVaradhan,
    SamplerConfig,
    SeriesRejection,
    TruncatedKernelRejection,
    VaradhanRejection,
)

EXPERIMENTS = ("VmfSphere", "SpdQuartic", "CircleKl", "KernelTable")
INITS = ("oracle", "mode", "uniform", "point", "radius")

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


# =============================
# Process settings (environment / .env)
# =============================

@dataclass(frozen=True)
class Settings:
    log_level: str = "INFO"
    workers: int = 1
    block_size: int = 250


def load_settings() -> Settings:
    """SAMPLER_LOG_LEVEL, SAMPLER_WORKERS and SAMPLER_BLOCK_SIZE, with a .env file if present."""
    load_dotenv()
    level = os.getenv("SAMPLER_LOG_LEVEL", "INFO").strip().upper()
    if level not in LOG_LEVELS:
        raise ConfigError("SAMPLER_LOG_LEVEL", f"expected one of {LOG_LEVELS}, got {level!r}")
    workers = _parse_int("SAMPLER_WORKERS", os.getenv("SAMPLER_WORKERS", "1"))
    block_size = _parse_int("SAMPLER_BLOCK_SIZE", os.getenv("SAMPLER_BLOCK_SIZE", "250"))
    if workers < 1:
        raise ConfigError("SAMPLER_WORKERS", "need at least one worker")
    if block_size < 1:
        raise ConfigError("SAMPLER_BLOCK_SIZE", "block size must be >= 1")
    return Settings(log_level=level, workers=workers, block_size=block_size)


# =============================
# Experiment configuration
# =============================

@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    sampler: SamplerConfig
    lmc: Optional[LmcConfig] = None
    d: int = 2
    m: int = 3
    kappa: float = 10.0
    mu: Tuple[float, ...] = (10.0, 0.1, 2.0)
    sigma: float = 0.03
    beta: float = 2.0
    epsilon: Optional[float] = None
    chains: int = 2000
    iters: int = 30
    seed: int = 0
    out_path: str = "results.csv"
    init: str = "oracle"
    init_point: Optional[Tuple[float, ...]] = None
    init_radius: float = 1.0
    bins: int = 64
    tv_bins: int = 16
    lmc_iters: int = 200
    divergence_chains: int = 20
    divergence_iters: int = 50
    divergence_step: float = 1e-3
    t: float = 0.5
    levels: Tuple[int, ...] = (5, 10, 20, 40)
    cs: Tuple[float, ...] = (-1.0, -0.5, 0.0, 0.5, 1.0)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"expected one of {EXPERIMENTS}, got {self.experiment!r}")
        for key in ("chains", "iters", "bins", "tv_bins", "lmc_iters", "divergence_chains", "divergence_iters"):
            if getattr(self, key) < 1:
                raise ConfigError(key, f"must be >= 1, got {getattr(self, key)}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "seed must be a 64-bit unsigned integer")
        if self.init not in INITS:
            raise ConfigError("init", f"expected one of {INITS}, got {self.init!r}")
        if self.init == "point" and self.init_point is None:
            raise ConfigError("init_point", "init = point needs init_point coordinates")
        if self.experiment == "VmfSphere" and len(self.mu) != self.d + 1:
            raise ConfigError("mu", f"mean vector for S^{self.d} needs {self.d + 1} components, got {len(self.mu)}")
        if self.epsilon is not None and not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon", f"accuracy must lie in (0, 1), got {self.epsilon}")
        if self.d < 1 or self.m < 2:
            raise ConfigError("d" if self.d < 1 else "m", "manifold dimension out of range")
        if not self.t > 0.0:
            raise ConfigError("t", "kernel time must be positive")
        if not self.levels or not self.cs:
            raise ConfigError("levels" if not self.levels else "cs", "needs at least one entry")


def default_config(experiment: str) -> ExperimentConfig:
    """Desk-scale defaults for each experiment."""
    if experiment == "VmfSphere":
        return ExperimentConfig("VmfSphere", SamplerConfig(eta=1e-3), epsilon=1e-3,
                                chains=2000, iters=30, init="oracle")
    if experiment == "SpdQuartic":
        return ExperimentConfig(
            "SpdQuartic", SamplerConfig(eta=0.01, proposal_center="mode"),
            lmc=LmcConfig(step=1e-3, schedule=Decreasing(1e-2)),
            chains=500, iters=40, init="mode",
        )
    if experiment == "CircleKl":
        return ExperimentConfig(
            "CircleKl",
            SamplerConfig(eta=0.2, mbi_oracle=SeriesRejection(), rhk_oracle=TruncatedKernelRejection()),
            chains=5000, iters=10, init="point", init_point=(3.141592653589793,),
        )
    if experiment == "KernelTable":
        return ExperimentConfig("KernelTable", SamplerConfig(eta=0.5), chains=1, iters=1, init="mode")
    raise ConfigError("experiment", f"expected one of {EXPERIMENTS}, got {experiment!r}")


# =============================
# key = value format
# =============================

def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def parse_config(text: str) -> ExperimentConfig:
    raw = dotenv_values(stream=io.StringIO(text), interpolate=False)
    values: Dict[str, str] = {}
    for key, value in raw.items():
        if value is None:
            raise ConfigError(key, "missing '=' and value")
        values[key] = value.strip()

    unknown = sorted(set(values) - set(_TOP_LEVEL) - set(_SAMPLER_KEYS) - set(_LMC_KEYS) - {"experiment"})
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    if "experiment" not in values:
        raise ConfigError("experiment", "required key is missing")

    base = default_config(values["experiment"])
    updates = {}
    for key, (_, parse) in _TOP_LEVEL.items():
        if key in values:
            updates[key] = parse(key, values[key])
    updates["sampler"] = _parse_sampler(values, base.sampler)
    updates["lmc"] = _parse_lmc(values, base.lmc)
    try:
        return replace(base, **updates)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from exc


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = ["# sampler experiment configuration", f"experiment = {cfg.experiment}"]
    for key, (fmt, _) in _TOP_LEVEL.items():
        lines.append(f"{key} = {fmt(getattr(cfg, key))}")
    lines.extend(f"{key} = {value}" for key, value in _sampler_items(cfg.sampler))
    lines.extend(f"{key} = {value}" for key, value in _lmc_items(cfg.lmc))
    return "\n".join(lines) + "\n"


# value formatters / parsers

def _fmt_opt(value) -> str:
    return "" if value is None else repr(value)


def _fmt_seq(values) -> str:
    return "" if values is None else ",".join(repr(v) for v in values)


def _parse_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None


def _parse_float(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {text!r}") from None


def _parse_opt_float(key: str, text: str) -> Optional[float]:
    return None if text == "" else _parse_float(key, text)


def _parse_opt_int(key: str, text: str) -> Optional[int]:
    return None if text == "" else _parse_int(key, text)


def _parse_bool(key: str, text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(key, f"expected true or false, got {text!r}")


def _parse_floats(key: str, text: str) -> Tuple[float, ...]:
    return tuple(_parse_float(key, part.strip()) for part in text.split(",") if part.strip())


def _parse_opt_floats(key: str, text: str) -> Optional[Tuple[float, ...]]:
    return None if text == "" else _parse_floats(key, text)


def _parse_ints(key: str, text: str) -> Tuple[int, ...]:
    return tuple(_parse_int(key, part.strip()) for part in text.split(",") if part.strip())


def _parse_str(key: str, text: str) -> str:
    return text


_Codec = Tuple[Callable[[object], str], Callable[[str, str], object]]

_TOP_LEVEL: Dict[str, _Codec] = {
    "d": (repr, _parse_int),
    "m": (repr, _parse_int),
    "kappa": (repr, _parse_float),
    "mu": (_fmt_seq, _parse_floats),
    "sigma": (repr, _parse_float),
    "beta": (repr, _parse_float),
    "epsilon": (_fmt_opt, _parse_opt_float),
    "chains": (repr, _parse_int),
    "iters": (repr, _parse_int),
    "seed": (repr, _parse_int),
    "out_path": (str, _parse_str),
    "init": (str, _parse_str),
    "init_point": (_fmt_seq, _parse_opt_floats),
    "init_radius": (repr, _parse_float),
    "bins": (repr, _parse_int),
    "tv_bins": (repr, _parse_int),
    "lmc_iters": (repr, _parse_int),
    "divergence_chains": (repr, _parse_int),
    "divergence_iters": (repr, _parse_int),
    "divergence_step": (repr, _parse_float),
    "t": (repr, _parse_float),
    "levels": (_fmt_seq, _parse_ints),
    "cs": (_fmt_seq, _parse_floats),
}

_SAMPLER_KEYS = (
    "sampler.eta", "sampler.mbi", "sampler.mbi_level", "sampler.mbi_substeps",
    "sampler.rhk", "sampler.rhk_level", "sampler.proposal_t", "sampler.proposal_center",
    "sampler.rejection_cap", "sampler.clip_acceptance", "sampler.zeta",
    "sampler.varadhan_offset", "sampler.calibration_points", "sampler.calibration_refinements",
    "sampler.mode_tol", "sampler.mode_max_iters",
)
_LMC_KEYS = ("lmc.step", "lmc.schedule", "lmc.schedule_c")

_MBI_NAMES = {"series": SeriesRejection, "grw": GeodesicRandomWalk, "rgaussian": RGaussianVaradhan}
_RHK_NAMES = {"truncated": TruncatedKernelRejection, "varadhan": VaradhanRejection}


def _sampler_items(s: SamplerConfig):
    mbi = next(name for name, cls in _MBI_NAMES.items() if isinstance(s.mbi_oracle, cls))
    rhk = next(name for name, cls in _RHK_NAMES.items() if isinstance(s.rhk_oracle, cls))
    yield "sampler.eta", repr(s.eta)
    yield "sampler.mbi", mbi
    yield "sampler.mbi_level", _fmt_opt(getattr(s.mbi_oracle, "level", None))
    yield "sampler.mbi_substeps", _fmt_opt(getattr(s.mbi_oracle, "substeps", None))
    yield "sampler.rhk", rhk
    yield "sampler.rhk_level", _fmt_opt(getattr(s.rhk_oracle, "level", None))
    yield "sampler.proposal_t", _fmt_opt(s.proposal_t)
    yield "sampler.proposal_center", s.proposal_center or ""
    yield "sampler.rejection_cap", repr(s.rejection_cap)
    yield "sampler.clip_acceptance", "true" if s.clip_acceptance else "false"
    yield "sampler.zeta", repr(s.zeta)
    yield "sampler.varadhan_offset", _fmt_opt(s.varadhan_offset)
    yield "sampler.calibration_points", repr(s.calibration_points)
    yield "sampler.calibration_refinements", repr(s.calibration_refinements)
    yield "sampler.mode_tol", repr(s.mode_options.tol)
    yield "sampler.mode_max_iters", repr(s.mode_options.max_iters)


def _parse_sampler(values: Dict[str, str], base: SamplerConfig) -> SamplerConfig:
    current = dict(_sampler_items(base))
    current.update({k: v for k, v in values.items() if k.startswith("sampler.")})

    mbi_name = current["sampler.mbi"]
    if mbi_name == "series":
        mbi = SeriesRejection(_parse_opt_int("sampler.mbi_level", current["sampler.mbi_level"]))
    elif mbi_name == "grw":
        substeps = current["sampler.mbi_substeps"] or "1"
        mbi = GeodesicRandomWalk(_parse_int("sampler.mbi_substeps", substeps))
    elif mbi_name == "rgaussian":
        mbi = RGaussianVaradhan()
    else:
        raise ConfigError("sampler.mbi", f"expected one of {tuple(_MBI_NAMES)}, got {mbi_name!r}")

    rhk_name = current["sampler.rhk"]
    if rhk_name == "truncated":
        rhk = TruncatedKernelRejection(_parse_opt_int("sampler.rhk_level", current["sampler.rhk_level"]))
    elif rhk_name == "varadhan":
        rhk = VaradhanRejection()
    else:
        raise ConfigError("sampler.rhk", f"expected one of {tuple(_RHK_NAMES)}, got {rhk_name!r}")

    return SamplerConfig(
        eta=_parse_float("sampler.eta", current["sampler.eta"]),
        mbi_oracle=mbi,
        rhk_oracle=rhk,
        proposal_t=_parse_opt_float("sampler.proposal_t", current["sampler.proposal_t"]),
        proposal_center=current["sampler.proposal_center"] or None,
        rejection_cap=_parse_int("sampler.rejection_cap", current["sampler.rejection_cap"]),
        clip_acceptance=_parse_bool("sampler.clip_acceptance", current["sampler.clip_acceptance"]),
        zeta=_parse_float("sampler.zeta", current["sampler.zeta"]),
        varadhan_offset=_parse_opt_float("sampler.varadhan_offset", current["sampler.varadhan_offset"]),
        calibration_points=_parse_int("sampler.calibration_points", current["sampler.calibration_points"]),
        calibration_refinements=_parse_int("sampler.calibration_refinements",
                                           current["sampler.calibration_refinements"]),
        mode_options=replace(
            base.mode_options,
            tol=_parse_float("sampler.mode_tol", current["sampler.mode_tol"]),
            max_iters=_parse_int("sampler.mode_max_iters", current["sampler.mode_max_iters"]),
        ),
    )


def _lmc_items(lmc: Optional[LmcConfig]):
    if lmc is None:
        yield "lmc.step", ""
        yield "lmc.schedule", ""
        yield "lmc.schedule_c", ""
        return
    yield "lmc.step", repr(lmc.step)
    if isinstance(lmc.schedule, Decreasing):
        yield "lmc.schedule", "decreasing"
        yield "lmc.schedule_c", repr(lmc.schedule.c)
    else:
        yield "lmc.schedule", "constant"
        yield "lmc.schedule_c", ""


def _parse_lmc(values: Dict[str, str], base: Optional[LmcConfig]) -> Optional[LmcConfig]:
    current = dict(_lmc_items(base))
    current.update({k: v for k, v in values.items() if k.startswith("lmc.")})
    step = _parse_opt_float("lmc.step", current["lmc.step"])
    if step is None:
        return None
    schedule_name = current["lmc.schedule"] or "constant"
    if schedule_name == "constant":
        schedule = Constant()
    elif schedule_name == "decreasing":
        c = _parse_opt_float("lmc.schedule_c", current["lmc.schedule_c"])
        if c is None:
            raise ConfigError("lmc.schedule_c", "decreasing schedule needs a constant")
        schedule = Decreasing(c)
    else:
        raise ConfigError("lmc.schedule", f"expected constant or decreasing, got {schedule_name!r}")
    return LmcConfig(step=step, schedule=schedule)
