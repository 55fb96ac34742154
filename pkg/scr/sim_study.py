"""
sim_study.py - Simulation model with integrated Wiener signals and bivariate
normal errors, and the rejection-rate experiments built on it:
power curves, bandwidth robustness, estimation effect and uniformity checks.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats
from scipy.integrate import cumulative_trapezoid
from tqdm import tqdm

from assoc_stats import compute_statistic, get_statistic
from kernel_cdf import check_bandwidth, make_estimator_config, sim_bandwidth
from perm_test import permutation_pvalue
from transform import PseudoSample, Sample, partial_copula_transform, true_partial_copula_transform

logger = logging.getLogger(__name__)


DEFAULT_GRID_M = 1000
DEFAULT_SIM_RESAMPLES = 500
ALPHA = 0.05

STUDY_N_VALUES = (20, 100)
STUDY_NOISE_RATIOS = (0.1, 0.3, 0.5, 0.7)

REJECTION_COLUMNS = [
    'rho', 'n', 'lambda', 'statistic_kind',
    'conditional_rejection_rate', 'unconditional_rejection_rate',
    'replications', 'B', 'bandwidth', 'alpha',
]


# ============= Configuration =============

@dataclass
class SimConfig:
    """
    One setting of the simulation model
        Y = g(x) + e_Y,  Z = h(x) + e_Z,  x ~ U[0, 1],
    g, h independent integrated Wiener paths scaled by sigma0,
    (e_Y, e_Z) bivariate normal with sd noise_ratio * sigma0 and correlation rho.
    """
    n: int = 100
    noise_ratio: float = 0.5
    rho: float = 0.0
    sigma0: float = 1.0
    grid_m: int = DEFAULT_GRID_M
    seed: int = 0
    fixed_functions: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n должно быть целым >= 2: {self.n}")
        self.n = int(self.n)
        self.noise_ratio = check_bandwidth(self.noise_ratio, 'lambda')
        if not (math.isfinite(self.rho) and abs(self.rho) <= 1):
            raise ValueError(f"rho должно лежать в [-1, 1]: {self.rho}")
        if not (math.isfinite(self.sigma0) and self.sigma0 >= 0):
            raise ValueError(f"sigma0 должно быть неотрицательным: {self.sigma0}")
        if int(self.grid_m) != self.grid_m or self.grid_m < 2:
            raise ValueError(f"grid_m должно быть целым >= 2: {self.grid_m}")
        self.grid_m = int(self.grid_m)
        self.seed = int(self.seed)

    @property
    def sigma_eps(self) -> float:
        return self.noise_ratio * self.sigma0

    def replace(self, **changes) -> 'SimConfig':
        return replace(self, **changes)

    def to_dict(self) -> Dict:
        return asdict(self)


# ============= Signal paths =============

@dataclass(frozen=True)
class SignalPath:
    """Piecewise-linear function through (grid_k, values_k)"""
    grid: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.grid.shape != self.values.shape or self.grid.size < 2:
            raise ValueError("grid и values должны совпадать по длине (минимум 2 точки)")

    def __call__(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.grid, self.values)


def integrated_wiener(
    sigma0: float = 1.0,
    grid_m: int = DEFAULT_GRID_M,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> SignalPath:
    """
    Sample g(x) = sigma0 * int_0^x W_t dt on m equally spaced points of [0, 1].

    Args:
        sigma0: Signal scale, >= 0
        grid_m: Number of grid points, >= 2
        seed: Seed (ignored when rng is given)
        rng: Generator to draw the Wiener increments from

    Returns:
        SignalPath with g(0) = 0
    """
    if not (math.isfinite(sigma0) and sigma0 >= 0):
        raise ValueError(f"sigma0 должно быть неотрицательным: {sigma0}")
    if int(grid_m) != grid_m or grid_m < 2:
        raise ValueError(f"grid_m должно быть целым >= 2: {grid_m}")
    grid_m = int(grid_m)
    rng = rng if rng is not None else np.random.default_rng(seed)

    grid = np.linspace(0.0, 1.0, grid_m)
    increments = rng.normal(0.0, math.sqrt(1.0 / (grid_m - 1)), grid_m - 1)
    wiener = np.concatenate(([0.0], np.cumsum(increments)))
    values = sigma0 * cumulative_trapezoid(wiener, grid, initial=0.0)
    return SignalPath(grid=grid, values=values)


# ============= Data generation =============

@dataclass
class SimulatedData:
    """Generated sample together with the truth it was generated from"""
    sample: Sample
    g: SignalPath
    h: SignalPath
    errors_y: np.ndarray
    errors_z: np.ndarray
    sigma_eps: float


def _streams(seed: int) -> List[np.random.SeedSequence]:
    # g, h and the data get independent children of the same root
    return np.random.SeedSequence(seed).spawn(3)


def draw_functions(cfg: SimConfig) -> Tuple[SignalPath, SignalPath]:
    """The pair (g, h) that gen_dataset would draw for cfg"""
    g_stream, h_stream, _ = _streams(cfg.seed)
    g = integrated_wiener(cfg.sigma0, cfg.grid_m, rng=np.random.default_rng(g_stream))
    h = integrated_wiener(cfg.sigma0, cfg.grid_m, rng=np.random.default_rng(h_stream))
    return g, h


def simulate_dataset(
    cfg: SimConfig,
    functions: Optional[Tuple[SignalPath, SignalPath]] = None,
) -> SimulatedData:
    """
    Draw one dataset from the model.

    Args:
        cfg: Model setting and seed
        functions: Use this (g, h) instead of drawing fresh paths

    Returns:
        SimulatedData
    """
    g, h = functions if functions is not None else draw_functions(cfg)
    rng = np.random.default_rng(_streams(cfg.seed)[2])

    x = rng.uniform(0.0, 1.0, cfg.n)
    first = rng.standard_normal(cfg.n)
    second = rng.standard_normal(cfg.n)
    sigma = cfg.sigma_eps
    errors_y = sigma * first
    errors_z = sigma * (cfg.rho * first + math.sqrt(1.0 - cfg.rho ** 2) * second)

    sample = Sample(x=x, y=g(x) + errors_y, z=h(x) + errors_z)
    return SimulatedData(sample=sample, g=g, h=h, errors_y=errors_y,
                         errors_z=errors_z, sigma_eps=sigma)


def gen_dataset(cfg: SimConfig) -> Sample:
    """Fresh (g, h) and a sample of size cfg.n; deterministic in cfg.seed"""
    return simulate_dataset(cfg).sample


# ============= Replications =============

def replication_seeds(seed: int, index: int) -> Tuple[int, int]:
    """(data seed, permutation seed) of replication `index`"""
    state = np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def _check_count(value: int, name: str) -> int:
    if int(value) != value or value < 1:
        raise ValueError(f"{name} должно быть натуральным числом: {value}")
    return int(value)


def _estimator_config(sample: Sample, cfg: SimConfig, bandwidth: Optional[float]):
    if bandwidth is None:
        return make_estimator_config(sample.x, rule='simulation', noise_ratio=cfg.noise_ratio)
    return make_estimator_config(sample.x, rule='explicit', bandwidth=bandwidth)


def _rank_pseudo(sample: Sample) -> PseudoSample:
    return PseudoSample(u=stats.rankdata(sample.y) / sample.n, v=stats.rankdata(sample.z) / sample.n)


def _one_replication(cfg, spec, resamples, perm_seed, bandwidth, functions) -> Tuple[float, float]:
    data = simulate_dataset(cfg, functions)
    config = _estimator_config(data.sample, cfg, bandwidth)
    pseudo = partial_copula_transform(data.sample, config)
    conditional = permutation_pvalue(pseudo, spec, resamples, seed=perm_seed).p_value
    unconditional = permutation_pvalue(_rank_pseudo(data.sample), spec, resamples,
                                       seed=perm_seed).p_value
    return conditional, unconditional


def _run_replications(jobs: List[Callable], n_jobs: int, progress: bool, desc: str) -> list:
    if n_jobs == 1:
        return [job() for job in tqdm(jobs, desc=desc, disable=not progress, leave=False)]
    # joblib keeps the input order, so the reduction is order-independent
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(job)() for job in jobs)


def _rejection_row(cfg, spec, pvalues, replications, resamples, bandwidth, alpha) -> Dict:
    conditional = np.array([p[0] for p in pvalues])
    unconditional = np.array([p[1] for p in pvalues])
    return {
        'rho': cfg.rho,
        'n': cfg.n,
        'lambda': cfg.noise_ratio,
        'statistic_kind': spec.kind,
        'conditional_rejection_rate': float(np.mean(conditional <= alpha)),
        'unconditional_rejection_rate': float(np.mean(unconditional <= alpha)),
        'replications': replications,
        'B': resamples,
        'bandwidth': bandwidth,
        'alpha': alpha,
    }


def _rejection_rates(cfg, spec, replications, resamples, bandwidth, alpha, n_jobs, progress, desc):
    fixed = draw_functions(cfg) if cfg.fixed_functions else None
    jobs = []
    for i in range(replications):
        data_seed, perm_seed = replication_seeds(cfg.seed, i)
        rep_cfg = cfg.replace(seed=data_seed)

        def job(rep_cfg=rep_cfg, perm_seed=perm_seed):
            return _one_replication(rep_cfg, spec, resamples, perm_seed, bandwidth, fixed)
        jobs.append(job)

    pvalues = _run_replications(jobs, n_jobs, progress, desc)
    used_bandwidth = bandwidth if bandwidth is not None else sim_bandwidth(cfg.noise_ratio, cfg.n)
    row = _rejection_row(cfg, spec, pvalues, replications, resamples, used_bandwidth, alpha)
    logger.info(
        f"rho={cfg.rho}, n={cfg.n}, lambda={cfg.noise_ratio}, h={used_bandwidth:.4g}: "
        f"conditional {row['conditional_rejection_rate']:.3f}, "
        f"unconditional {row['unconditional_rejection_rate']:.3f}")
    return row


# ============= Experiments =============

def run_power_study(
    base_cfg: SimConfig,
    rho_grid: Sequence[float],
    replications: int,
    resamples: int = DEFAULT_SIM_RESAMPLES,
    statistic: str = 'pearson',
    alpha: float = ALPHA,
    n_jobs: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """
    Rejection rates of the conditional and the unconditional test over a grid of rho.

    Replication i uses the same data seed at every rho, so the curves are
    computed with common random numbers.

    Args:
        base_cfg: Model setting; its rho is replaced by each grid value
        rho_grid: Partial correlations, nonempty
        replications: Datasets per grid point
        resamples: Permutations per test
        statistic: Statistic name
        alpha: Rejection level
        n_jobs: joblib threads for the replications
        progress: Show tqdm progress bars

    Returns:
        RejectionTable (DataFrame with REJECTION_COLUMNS), one row per rho in grid order
    """
    replications = _check_count(replications, 'replications')
    resamples = _check_count(resamples, 'B')
    rho_grid = list(rho_grid)
    if not rho_grid:
        raise ValueError("Сетка значений rho пуста")
    configs = [base_cfg.replace(rho=float(rho)) for rho in rho_grid]
    spec = get_statistic(statistic)

    rows = [
        _rejection_rates(cfg, spec, replications, resamples, None, alpha, n_jobs, progress,
                         desc=f"rho={cfg.rho}")
        for cfg in configs
    ]
    return pd.DataFrame(rows, columns=REJECTION_COLUMNS)


def run_bandwidth_robustness(
    cfg: SimConfig,
    bandwidth_grid: Sequence[float],
    replications: int,
    resamples: int = DEFAULT_SIM_RESAMPLES,
    statistic: str = 'pearson',
    alpha: float = ALPHA,
    n_jobs: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """Type I error (rho = 0) for each explicit bandwidth, one row per bandwidth in grid order"""
    replications = _check_count(replications, 'replications')
    resamples = _check_count(resamples, 'B')
    bandwidth_grid = [check_bandwidth(h) for h in bandwidth_grid]
    if not bandwidth_grid:
        raise ValueError("Сетка ширин окна пуста")
    null_cfg = cfg.replace(rho=0.0)
    spec = get_statistic(statistic)

    rows = [
        _rejection_rates(null_cfg, spec, replications, resamples, h, alpha, n_jobs, progress,
                         desc=f"h={h:.4g}")
        for h in bandwidth_grid
    ]
    return pd.DataFrame(rows, columns=REJECTION_COLUMNS)


def run_study_grid(
    base_cfg: SimConfig,
    rho_grid: Sequence[float],
    replications: int,
    n_values: Sequence[int] = STUDY_N_VALUES,
    noise_ratios: Sequence[float] = STUDY_NOISE_RATIOS,
    resamples: int = DEFAULT_SIM_RESAMPLES,
    statistic: str = 'pearson',
    alpha: float = ALPHA,
    n_jobs: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """Power studies for every (n, lambda) combination in one RejectionTable"""
    tables = []
    for n in n_values:
        for lam in noise_ratios:
            tables.append(run_power_study(
                base_cfg.replace(n=int(n), noise_ratio=float(lam)), rho_grid, replications,
                resamples=resamples, statistic=statistic, alpha=alpha, n_jobs=n_jobs,
                progress=progress))
    if not tables:
        raise ValueError("Пустая сетка n или lambda")
    return pd.concat(tables, ignore_index=True)


def run_estimation_effect(
    cfg: SimConfig,
    replications: int = 200,
    n_values: Sequence[int] = (50, 400),
    statistic: str = 'pearson',
    n_jobs: int = 1,
) -> pd.DataFrame:
    """
    Median |theta(U_hat, V_hat) - theta(U, V)| per sample size, where (U, V)
    is the transform with the true conditional CDFs.

    Returns:
        DataFrame with columns n, median_abs_difference, replications
    """
    replications = _check_count(replications, 'replications')
    if cfg.sigma0 <= 0:
        raise ValueError("Для сравнения с истинным преобразованием нужно sigma0 > 0")
    spec = get_statistic(statistic)

    def difference(rep_cfg: SimConfig) -> float:
        data = simulate_dataset(rep_cfg)
        config = _estimator_config(data.sample, rep_cfg, None)
        estimated = partial_copula_transform(data.sample, config)
        exact = true_partial_copula_transform(data.sample, data.g, data.h, data.sigma_eps)
        return abs(compute_statistic(spec, estimated.u, estimated.v).value
                   - compute_statistic(spec, exact.u, exact.v).value)

    rows = []
    for n in n_values:
        jobs = []
        for i in range(replications):
            data_seed, _ = replication_seeds(cfg.seed, i)
            rep_cfg = cfg.replace(n=int(n), seed=data_seed)
            jobs.append(lambda rep_cfg=rep_cfg: difference(rep_cfg))
        diffs = _run_replications(jobs, n_jobs, progress=False, desc=f"n={n}")
        rows.append({
            'n': int(n),
            'median_abs_difference': float(np.median(diffs)),
            'replications': replications,
        })
        logger.info(f"Estimation effect n={n}: median |diff| = {rows[-1]['median_abs_difference']:.4g}")
    return pd.DataFrame(rows, columns=['n', 'median_abs_difference', 'replications'])


def run_uniformity_check(cfg: SimConfig, replications: int = 100) -> Dict[str, float]:
    """Pooled mean and variance of U_hat over independent datasets (uniform: 1/2 and 1/12)"""
    replications = _check_count(replications, 'replications')
    pooled = []
    for i in range(replications):
        data_seed, _ = replication_seeds(cfg.seed, i)
        rep_cfg = cfg.replace(seed=data_seed)
        sample = gen_dataset(rep_cfg)
        config = _estimator_config(sample, rep_cfg, None)
        pooled.append(partial_copula_transform(sample, config).u)
    values = np.concatenate(pooled)
    return {
        'mean': float(values.mean()),
        'variance': float(values.var()),
        'replications': replications,
        'n': cfg.n,
    }
