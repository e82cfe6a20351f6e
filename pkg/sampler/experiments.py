"""
Experiment drivers and result files.

Each driver returns long-format metric rows; `run_experiment` writes them to
CSV (temp file + rename) with a JSON metadata sidecar next to it.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .config import ExperimentConfig, Settings, serialize_config
from .diagnostics import (
    GridConditionalSampler,
    circle_histogram,
    expected_distsq_quadrature,
    frechet_stats,
    grid_reference_chain,
    kl_grid,
    target_grid_density,
    tv_grid,
    tv_noise_floor,
    vmf_oracle_batch,
    vmf_radial_log_density,
)
from .errors import EXIT_NUMERICAL, EXIT_OK, ConfigError, SamplerError, UnsupportedManifoldError
from .heat_kernel import HeatKernelSpec, kernel_table
from .langevin import DIVERGENCE_DISTANCE, LmcConfig, rlmc_run
from .manifolds import TWO_PI, Circle, Manifold, Point
from .proximal import (
    ChainTrace,
    TheoryParams,
    expected_rejection_bound,
    initial_points,
    resolve_sampler,
    run_chains,
    varadhan_parameters,
)
from .rng import auxiliary_stream
from .targets import TargetSpec, circle_cosine, spd_quartic, von_mises_fisher

logger = logging.getLogger(__name__)

CSV_HEADER = ("iter", "metric", "value", "stderr", "flag")
DIVERGENCE_REPORT_DISTANCE = 10.0

INIT_STREAM = 0
REFERENCE_STREAM = 1
GRID_STREAM = 2


@dataclass
class MetricRow:
    iter: int
    metric: str
    value: float
    stderr: Optional[float] = None
    flag: str = ""


@dataclass
class ExperimentResult:
    rows: List[MetricRow]
    meta: Dict = field(default_factory=dict)


# =============================
# Entry point
# =============================

def run_experiment(cfg: ExperimentConfig, settings: Optional[Settings] = None,
                   out_path: Optional[str] = None) -> int:
    """Run, write `<out>` and `<out>.meta.json`, return the exit status."""
    settings = settings or Settings()
    out = Path(out_path or cfg.out_path)
    try:
        started = time.perf_counter()
        logger.info("starting %s: %d chains x %d iterations, seed %d",
                    cfg.experiment, cfg.chains, cfg.iters, cfg.seed)
        result = execute_experiment(cfg, settings)
        elapsed_ms = 1000.0 * (time.perf_counter() - started)
    except SamplerError as exc:
        logger.error("%s failed: %s", cfg.experiment, exc)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        logger.error("%s failed: numerical error outside the sampler: %s", cfg.experiment, exc)
        return EXIT_NUMERICAL

    write_csv(out, result.rows)
    meta = dict(result.meta)
    meta["experiment"] = cfg.experiment
    meta["seed"] = cfg.seed
    meta["wall_clock_ms"] = round(elapsed_ms, 3)
    meta["config"] = serialize_config(cfg)
    write_metadata(out.with_name(out.name + ".meta.json"), meta)
    logger.info("%s finished in %.0f ms, results in %s", cfg.experiment, elapsed_ms, out)
    return EXIT_OK


def execute_experiment(cfg: ExperimentConfig, settings: Optional[Settings] = None) -> ExperimentResult:
    settings = settings or Settings()
    drivers = {
        "VmfSphere": vmf_sphere,
        "SpdQuartic": spd_quartic_experiment,
        "CircleKl": circle_kl,
        "KernelTable": kernel_table_experiment,
    }
    return drivers[cfg.experiment](cfg, settings)


# =============================
# Result files
# =============================

def write_csv(path: Path, rows: List[MetricRow]) -> None:
    """Write the long-format CSV atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in rows:
                writer.writerow([row.iter, row.metric, _fmt_value(row.value),
                                 _fmt_value(row.stderr), row.flag])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_metadata(path: Path, meta: Dict) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)
    os.replace(tmp, path)


def read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _fmt_value(value) -> str:
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else str(obj)
    return obj


# =============================
# Shared helpers
# =============================

def _chain_rows(trace: ChainTrace, ref: Point, prefix: str = "") -> List[MetricRow]:
    """Frechet variance and mean rejection counts per iteration."""
    rows = []
    flag = f"failed={int(np.sum(trace.failed))}" if np.any(trace.failed) else ""
    for k in range(trace.n_iters + 1):
        mean, stderr = frechet_stats(trace.states[k], ref)
        rows.append(MetricRow(k, prefix + "frechet_variance", mean, stderr, flag))
    for name, counts in (("mbi_rej_mean", trace.mbi_rejections), ("rhk_rej_mean", trace.rhk_rejections)):
        rows.append(MetricRow(0, prefix + name, 0.0))
        for k in range(trace.n_iters):
            c = counts[k]
            rows.append(MetricRow(k + 1, prefix + name, float(np.mean(c)),
                                  float(np.std(c, ddof=1) / math.sqrt(c.size)) if c.size > 1 else None))
    return rows


def _trace_meta(trace: ChainTrace) -> Dict:
    return {
        "failed_chains": int(np.sum(trace.failed)),
        "fallbacks": trace.fallbacks,
        "clamp_events": trace.clamp_events,
        "excursions": trace.excursions,
        "sampler_elapsed_ms": round(trace.elapsed_ms, 3),
    }


def _inits(cfg: ExperimentConfig, manifold: Manifold, target: TargetSpec, rng) -> np.ndarray:
    how = cfg.init
    if how == "mode":
        if target.mode is None:
            raise ConfigError("init", "target has no known mode")
        return initial_points(manifold, cfg.chains, "point", rng, point=target.mode)
    if how == "point":
        point = np.asarray(cfg.init_point, dtype=float)
        try:
            point = point.reshape(manifold.point_shape)
        except ValueError:
            raise ConfigError("init_point", f"{point.size} coordinates do not fit {manifold}") from None
        if isinstance(manifold, Circle):
            point = np.mod(point, TWO_PI)
        return initial_points(manifold, cfg.chains, "point", rng, point=point)
    if how == "radius":
        return initial_points(manifold, cfg.chains, "radius", rng, radius=cfg.init_radius)
    if how == "uniform":
        try:
            return initial_points(manifold, cfg.chains, "uniform", rng)
        except UnsupportedManifoldError:
            raise ConfigError("init", f"no uniform law on {manifold}") from None
    raise ConfigError("init", f"init = {how} is not available for {cfg.experiment}")


# =============================
# Drivers
# =============================

def vmf_sphere(cfg: ExperimentConfig, settings: Settings) -> ExperimentResult:
    """Proximal chains on S^d against vMF(kappa, mu), compared with exact draws."""
    target = von_mises_fisher(cfg.kappa, cfg.mu)
    manifold = target.manifold
    kappa_eff = target.L1
    sampler = cfg.sampler
    meta: Dict = {}
    if cfg.epsilon is not None:
        params = varadhan_parameters(target.L1, manifold.dim, cfg.epsilon)
        sampler = replace(sampler, eta=params.eta)
        meta["varadhan_parameters"] = asdict(params)
        if manifold.dim >= 2:
            meta["expected_rejection_bound"] = expected_rejection_bound(manifold.dim, params.c_eps)
    meta["eta"] = sampler.eta
    meta["theory"] = asdict(TheoryParams.for_manifold(manifold))

    init_rng = auxiliary_stream(cfg.seed, INIT_STREAM)
    if cfg.init == "oracle":
        inits = vmf_oracle_batch(manifold.d, target.mode, kappa_eff, cfg.chains, init_rng)
    else:
        inits = _inits(cfg, manifold, target, init_rng)

    trace = run_chains(inits, cfg.iters, target, sampler, seed=cfg.seed,
                       block_size=settings.block_size, workers=settings.workers)
    ref = Point(manifold, target.mode)
    rows = _chain_rows(trace, ref)
    meta.update(_trace_meta(trace))

    truth = expected_distsq_quadrature(manifold, vmf_radial_log_density(kappa_eff), nodes=4096)
    rows.append(MetricRow(cfg.iters, "quadrature_frechet_variance", truth))
    reference = vmf_oracle_batch(manifold.d, target.mode, kappa_eff, cfg.chains,
                                 auxiliary_stream(cfg.seed, REFERENCE_STREAM))
    mean, stderr = frechet_stats(reference, ref)
    rows.append(MetricRow(cfg.iters, "oracle_frechet_variance", mean, stderr))

    if cfg.lmc is not None:
        lmc = rlmc_run(inits, cfg.iters, target, cfg.lmc, seed=cfg.seed,
                       block_size=settings.block_size)
        rows.extend(_lmc_rows(lmc, ref, "lmc_"))
        meta["lmc_diverged_chains"] = int(np.sum(lmc.failed))
    return ExperimentResult(rows, meta)


def spd_quartic_experiment(cfg: ExperimentConfig, settings: Settings) -> ExperimentResult:
    """Proximal chains on SPD(m) against exp(-d(X, I)^4 / (2 sigma^2)), with Langevin comparisons."""
    target = spd_quartic(cfg.m, cfg.sigma)
    manifold = target.manifold
    ref = Point(manifold, target.mode)
    meta: Dict = {"eta": cfg.sampler.eta, "theory": asdict(TheoryParams.for_manifold(manifold))}

    inits = _inits(cfg, manifold, target, auxiliary_stream(cfg.seed, INIT_STREAM))
    trace = run_chains(inits, cfg.iters, target, cfg.sampler, seed=cfg.seed,
                       block_size=settings.block_size, workers=settings.workers)
    rows = _chain_rows(trace, ref)
    for k in range(trace.n_iters + 1):
        rows.append(MetricRow(k, "max_distance", float(np.max(manifold.dist(trace.states[k], ref.coords)))))
    meta.update(_trace_meta(trace))

    if cfg.lmc is not None:
        reference = rlmc_run(inits, cfg.lmc_iters, target, cfg.lmc, seed=cfg.seed,
                             block_size=settings.block_size)
        rows.extend(_lmc_rows(reference, ref, "lmc_reference_"))
        meta["lmc_reference_diverged_chains"] = int(np.sum(reference.failed))

    # constant-step Langevin from a point away from the mode
    start = initial_points(manifold, cfg.divergence_chains, "radius", None, radius=cfg.init_radius)
    demo = rlmc_run(start, cfg.divergence_iters, target, LmcConfig(step=cfg.divergence_step),
                    seed=cfg.seed, block_size=settings.block_size)
    peak = demo.peak_distance
    exceeded = int(np.sum(peak > DIVERGENCE_REPORT_DISTANCE))
    rows.append(MetricRow(cfg.divergence_iters, "divergence_exceeding_chains", float(exceeded),
                          flag="diverged" if exceeded else ""))
    rows.append(MetricRow(cfg.divergence_iters, "divergence_peak_distance", float(np.max(peak)),
                          flag="halted" if np.any(peak > DIVERGENCE_DISTANCE) else ""))
    meta["divergence_halted_chains"] = int(np.sum(demo.failed))
    return ExperimentResult(rows, meta)


def circle_kl(cfg: ExperimentConfig, settings: Settings) -> ExperimentResult:
    """Grid KL to exp(beta cos theta) per iteration, for the sampler and for brute-force conditionals."""
    target = circle_cosine(cfg.beta)
    manifold = target.manifold
    resolved = resolve_sampler(manifold, cfg.sampler)
    kernel = resolved.kernel or HeatKernelSpec.for_accuracy(manifold, cfg.sampler.eta, cfg.sampler.zeta)
    meta: Dict = {"eta": cfg.sampler.eta, "wraps": kernel.level,
                  "theory": asdict(TheoryParams.for_manifold(manifold))}

    inits = _inits(cfg, manifold, target, auxiliary_stream(cfg.seed, INIT_STREAM))
    trace = run_chains(inits, cfg.iters, target, cfg.sampler, seed=cfg.seed, kernel=resolved.kernel,
                       block_size=settings.block_size, workers=settings.workers)
    meta.update(_trace_meta(trace))

    q = target_grid_density(lambda theta: np.exp(-target.value(theta)), cfg.bins)
    grid = GridConditionalSampler(target, cfg.sampler.eta, kernel)
    grid_states = grid_reference_chain(inits, cfg.iters, grid, auxiliary_stream(cfg.seed, GRID_STREAM))

    # two exact samplers differ on the grid by about tv_noise_floor
    n = trace.n_chains
    rows = []
    for k in range(cfg.iters + 1):
        p_chain = circle_histogram(trace.states[k], cfg.bins)
        p_grid = circle_histogram(grid_states[k], cfg.bins)
        for name, p in (("kl", p_chain), ("grid_kl", p_grid)):
            value = kl_grid(p, q)
            rows.append(MetricRow(k, name, value, flag="infinite" if math.isinf(value) else ""))
        rows.append(MetricRow(k, "tv_chain_grid", tv_grid(p_chain, p_grid)))
        rows.append(MetricRow(k, "tv_noise_floor", tv_noise_floor(p_grid, n, n)))
        coarse_chain = circle_histogram(trace.states[k], cfg.tv_bins)
        coarse_grid = circle_histogram(grid_states[k], cfg.tv_bins)
        rows.append(MetricRow(k, "tv_chain_grid_coarse", tv_grid(coarse_chain, coarse_grid)))
        rows.append(MetricRow(k, "tv_noise_floor_coarse", tv_noise_floor(coarse_grid, n, n)))
    ref = Point(manifold, target.mode)
    rows.extend(_chain_rows(trace, ref))
    return ExperimentResult(rows, meta)


def kernel_table_experiment(cfg: ExperimentConfig, settings: Settings) -> ExperimentResult:
    """Truncated heat-kernel values nu_l(t, c) and tail bounds; iter holds the level."""
    rows = []
    tails = {}
    for entry in kernel_table(cfg.d, cfg.t, cfg.levels, cfg.cs):
        rows.append(MetricRow(entry["l"], f"nu[c={entry['c']!r}]", entry["value"]))
        tails[entry["l"]] = entry["tail_bound"]
    rows.extend(MetricRow(level, "tail_bound", tail) for level, tail in tails.items())
    return ExperimentResult(rows, {"d": cfg.d, "t": cfg.t})


def _lmc_rows(trace: ChainTrace, ref: Point, prefix: str) -> List[MetricRow]:
    rows = []
    failed = trace.failed
    flag = f"diverged={int(np.sum(failed))}" if np.any(failed) else ""
    live = ~failed
    for k in range(trace.n_iters + 1):
        states = trace.states[k][live] if np.any(live) else trace.states[k]
        mean, stderr = frechet_stats(states, ref)
        rows.append(MetricRow(k, prefix + "frechet_variance", mean, stderr, flag))
    return rows
