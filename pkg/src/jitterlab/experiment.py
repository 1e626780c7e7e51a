"""Monte Carlo ensembles and tau x eps sweeps over a landscape.

Trial ``k`` of an ensemble owns the random stream ``RngStream(base_seed, k)``:
it draws its uniform start from that stream and then its noise, in that
order.  Trials are simulated in fixed-size chunks; the chunking is the same
for any worker count, so results never depend on ``workers``.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .descent import BatchResult, DescentParams, RngStream, Trajectory, descend, finite_point
from .landscape import BuiltinField, CellGrid, CellKind, Point2, Region, grid_for

CHUNK = 1000
NEAR_CRITICAL_FRACTION = 0.05
Z95 = 1.959963984540054

FLOW_DEFAULTS = dict(tau=0.001, eps=0.0, max_steps=20_000, grad_tol=1e-6)
JITTER_DEFAULTS = dict(tau=0.01, max_steps=500)
SWEEP_TAUS = (0.001, 0.01, 0.02, 0.04, 0.06)


class Bin(enum.Enum):
    DEEP_WELL = "DeepWell"
    SHALLOW_WELL = "ShallowWell"
    HILL = "Hill"
    NEAR_CRITICAL = "NearCritical"
    OUT_OF_REGION = "OutOfRegion"


BINS = tuple(Bin)
_KIND_TO_BIN = {CellKind.DEEP_WELL: 0, CellKind.SHALLOW_WELL: 1, CellKind.HILL: 2}
_NEAR, _OUT = 3, 4


class UndefinedRatioError(ZeroDivisionError):
    """r = n_shallow / n_deep has no deep-well endpoints to divide by."""


@dataclass(frozen=True)
class EnsembleConfig:
    params: DescentParams
    trials: int = 10_000
    base_seed: int = 0
    region: Region = dc_field(default_factory=Region)
    field: object = dc_field(default_factory=BuiltinField)

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials}")


@dataclass(frozen=True)
class TrialOutcome:
    trial_index: int
    start: Point2
    end: Point2
    cell: tuple[int, int] | None
    bin: Bin
    steps_taken: int
    final_grad_norm: float
    final_value: float


@dataclass(frozen=True)
class EnsembleStats:
    tau: float
    eps: float
    trials: int
    steps: int
    counts: np.ndarray  # (nx, ny) endpoints per cell
    n_deep: int
    n_shallow: int
    n_hill: int
    n_near_critical: int
    n_out: int
    r: float  # nan when n_deep == 0
    r_ci: tuple[float, float]
    phi: float

    @property
    def r_defined(self) -> bool:
        return self.n_deep > 0

    def summary_line(self) -> str:
        return (
            f"tau={self.tau:g} eps={self.eps:g} trials={self.trials} r={self.r:.4f} phi={self.phi:.4f} "
            f"deep={self.n_deep} shallow={self.n_shallow} hill={self.n_hill} "
            f"near_critical={self.n_near_critical} out={self.n_out}"
        )


@dataclass(frozen=True)
class SweepConfig:
    tau_list: tuple[float, ...] = SWEEP_TAUS
    eps_grid: tuple[float, float, int] = (0.0, 0.3, 31)
    trials_per_point: int = 500
    steps_per_trial: int = 500
    base_seed: int = 0
    region: Region = dc_field(default_factory=Region)
    field: object = dc_field(default_factory=BuiltinField)
    grad_tol: float = 1e-6

    def __post_init__(self):
        if not self.tau_list:
            raise ValueError("tau_list is empty")
        lo, hi, n = self.eps_grid
        if n < 1 or lo < 0 or hi < lo:
            raise ValueError(f"bad eps grid {self.eps_grid}")
        if self.trials_per_point < 1 or self.steps_per_trial < 1:
            raise ValueError("trials_per_point and steps_per_trial must be positive")

    @property
    def eps_values(self) -> np.ndarray:
        lo, hi, n = self.eps_grid
        return np.linspace(lo, hi, int(n))


# --- statistics ------------------------------------------------------------


def confidence_interval(n_shallow: int, n_deep: int, trials: int | None = None) -> tuple[float, float]:
    """95% interval for r = n_shallow / n_deep.

    Shallow and deep proportions are treated as independent binomials (Poisson
    counts when ``trials`` is not given) and the relative variances are added,
    the usual delta-method propagation for a ratio.  With no shallow endpoints
    the interval is one-sided: [0, 95% upper bound on the shallow rate / deep rate].
    """
    if n_deep <= 0:
        raise UndefinedRatioError("no deep-well endpoints")
    if n_shallow == 0:
        if trials:
            upper_rate = 1.0 - 0.05 ** (1.0 / trials)
            return 0.0, upper_rate * trials / n_deep
        return 0.0, -math.log(0.05) / n_deep
    r = n_shallow / n_deep
    if trials:
        rel_var = (1.0 - n_shallow / trials) / n_shallow + (1.0 - n_deep / trials) / n_deep
    else:
        rel_var = 1.0 / n_shallow + 1.0 / n_deep
    half = Z95 * r * math.sqrt(rel_var)
    return max(0.0, r - half), r + half


def near_critical_threshold(grid: CellGrid) -> float:
    return NEAR_CRITICAL_FRACTION * grid.shallow_depth


def _bin_codes(grid: CellGrid, x, y, fvals):
    i, j, inside = grid.locate(x, y)
    kinds = np.array([[_KIND_TO_BIN[c.kind] for c in col] for col in grid.cells], dtype=np.int8)
    codes = np.full(np.shape(x), _OUT, dtype=np.int8)
    codes[inside] = kinds[i[inside], j[inside]]
    is_well = (codes == 0) | (codes == 1)
    codes[is_well & (np.abs(fvals) < near_critical_threshold(grid))] = _NEAR
    return codes, i, j


def classify_endpoint(grid: CellGrid, t: Trajectory) -> Bin:
    """Bin a trajectory by where it stopped."""
    codes, _, _ = _bin_codes(grid, np.array([t.end.x]), np.array([t.end.y]), np.array([t.final_value]))
    return BINS[int(codes[0])]


def _stats(grid, params, trials, codes, i, j) -> EnsembleStats:
    nx, ny = grid.shape
    counts = np.zeros((nx, ny), dtype=np.int64)
    inside = codes != _OUT
    np.add.at(counts, (i[inside], j[inside]), 1)
    n = np.bincount(codes, minlength=5)
    n_deep, n_shallow = int(n[0]), int(n[1])
    try:
        r_ci = confidence_interval(n_shallow, n_deep, trials)
        r = n_shallow / n_deep
    except UndefinedRatioError:
        r, r_ci = math.nan, (math.nan, math.nan)
    return EnsembleStats(
        tau=params.tau,
        eps=params.eps,
        trials=trials,
        steps=params.max_steps,
        counts=counts,
        n_deep=n_deep,
        n_shallow=n_shallow,
        n_hill=int(n[2]),
        n_near_critical=int(n[_NEAR]),
        n_out=int(n[_OUT]),
        r=r,
        r_ci=r_ci,
        phi=1.0 - int(n[_OUT]) / trials,
    )


# --- simulation ------------------------------------------------------------


@dataclass
class _Chunk:
    first: int
    x0: np.ndarray
    y0: np.ndarray
    result: BatchResult


def _run_chunk(job) -> _Chunk:
    field, region, params, base_seed, first, stop = job
    n = stop - first
    x0 = np.empty(n)
    y0 = np.empty(n)
    noise = np.empty((n, params.max_steps, 2)) if params.noisy else None
    for m in range(n):
        rng = RngStream(base_seed, first + m)
        x0[m] = rng.uniform(region.x_min, region.x_max)
        y0[m] = rng.uniform(region.y_min, region.y_max)
        if noise is not None:
            noise[m] = rng.normals(params.max_steps)
    return _Chunk(first, x0, y0, descend(field, x0, y0, params, noise))


def _jobs(field, region, params, base_seed, trials):
    return [(field, region, params, base_seed, a, min(a + CHUNK, trials)) for a in range(0, trials, CHUNK)]


def _execute(jobs, workers: int) -> list[_Chunk]:
    if workers <= 1 or len(jobs) <= 1:
        return [_run_chunk(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_chunk, jobs))


def _concat(chunks: list[_Chunk]):
    def cat(name):
        return np.concatenate([getattr(c.result, name) for c in chunks])

    x0 = np.concatenate([c.x0 for c in chunks])
    y0 = np.concatenate([c.y0 for c in chunks])
    return x0, y0, BatchResult(cat("x"), cat("y"), cat("steps"), cat("reason"), cat("grad_norm"), cat("value"))


def _summarise(config: EnsembleConfig, grid: CellGrid, chunks: list[_Chunk]):
    x0, y0, res = _concat(chunks)
    codes, i, j = _bin_codes(grid, res.x, res.y, res.value)
    return x0, y0, res, codes, i, j, _stats(grid, config.params, config.trials, codes, i, j)


def run_ensemble(config: EnsembleConfig, workers: int = 1, grid: CellGrid | None = None):
    """Simulate ``config.trials`` uniformly started trials.

    Returns ``(outcomes, stats)`` with outcomes in trial-index order.
    """
    grid = grid or grid_for(config.field, config.region)
    chunks = _execute(_jobs(config.field, config.region, config.params, config.base_seed, config.trials), workers)
    x0, y0, res, codes, i, j, stats = _summarise(config, grid, chunks)
    outcomes = []
    for k in range(config.trials):
        inside = codes[k] != _OUT
        outcomes.append(
            TrialOutcome(
                trial_index=k,
                start=Point2(float(x0[k]), float(y0[k])),
                end=finite_point(res.x[k], res.y[k]),
                cell=(int(i[k]), int(j[k])) if inside else None,
                bin=BINS[int(codes[k])],
                steps_taken=int(res.steps[k]),
                final_grad_norm=float(res.grad_norm[k]),
                final_value=float(res.value[k]),
            )
        )
    return outcomes, stats


def ensemble_stats(config: EnsembleConfig, workers: int = 1, grid: CellGrid | None = None) -> EnsembleStats:
    """Like :func:`run_ensemble` but skips building per-trial records."""
    grid = grid or grid_for(config.field, config.region)
    chunks = _execute(_jobs(config.field, config.region, config.params, config.base_seed, config.trials), workers)
    return _summarise(config, grid, chunks)[-1]


def sweep_seed(base_seed: int, tau_index: int, eps_index: int) -> int:
    """Per-grid-point base seed; a pure function of its three arguments."""
    ss = np.random.SeedSequence(int(base_seed) & ((1 << 64) - 1), spawn_key=(tau_index, eps_index))
    return int(ss.generate_state(1, np.uint64)[0])


def sweep_configs(config: SweepConfig) -> list[EnsembleConfig]:
    out = []
    for ti, tau in enumerate(config.tau_list):
        for ei, eps in enumerate(config.eps_values):
            params = DescentParams(tau=float(tau), eps=float(eps), max_steps=config.steps_per_trial,
                                   grad_tol=config.grad_tol)
            out.append(EnsembleConfig(params, config.trials_per_point, sweep_seed(config.base_seed, ti, ei),
                                      config.region, config.field))
    return out


def run_sweep(config: SweepConfig, workers: int = 1, grid: CellGrid | None = None) -> list[EnsembleStats]:
    """One :class:`EnsembleStats` row per (tau, eps), tau-major."""
    grid = grid or grid_for(config.field, config.region)
    configs = sweep_configs(config)
    jobs, owners = [], []
    for n, c in enumerate(configs):
        js = _jobs(c.field, c.region, c.params, c.base_seed, c.trials)
        jobs.extend(js)
        owners.extend([n] * len(js))
    chunks = _execute(jobs, workers)
    rows = []
    for n, c in enumerate(configs):
        mine = [ch for ch, o in zip(chunks, owners) if o == n]
        rows.append(_summarise(c, grid, mine)[-1])
    return rows
