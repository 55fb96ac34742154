"""
kernel_cdf.py - Nadaraya-Watson estimates of conditional distribution functions
F_{Y|X}(y|x) and F_{Z|X}(z|x) with pluggable kernels and bandwidth rules.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from exceptions import DegenerateSpreadError, DegenerateWeightsError

logger = logging.getLogger(__name__)


# Denominators below this count as underflow
WEIGHT_UNDERFLOW = 1e-300

SILVERMAN_FACTOR = 1.06
SIM_BANDWIDTH_FACTOR = 1.75

BANDWIDTH_RULES = ('explicit', 'silverman', 'simulation')

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ============= Kernels =============

def _gaussian_weights(u: np.ndarray) -> np.ndarray:
    return _INV_SQRT_2PI * np.exp(-0.5 * u * u)


@dataclass(frozen=True)
class KernelFn:
    """
    Symmetric nonnegative smoothing kernel.

    Args:
        shape: Kernel name (used in reports)
        evaluate: Vectorised map from scaled distances to weights
    """
    shape: str
    evaluate: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __call__(self, u) -> np.ndarray:
        return self.evaluate(np.asarray(u, dtype=float))


GAUSSIAN = KernelFn('gaussian', _gaussian_weights)

KERNELS: Dict[str, KernelFn] = {
    'gaussian': GAUSSIAN,
}


def get_kernel(kernel: Union[str, KernelFn]) -> KernelFn:
    """Вернуть ядро по имени (или само ядро, если передан объект KernelFn)"""
    if isinstance(kernel, KernelFn):
        return kernel
    try:
        return KERNELS[kernel]
    except KeyError:
        raise ValueError(f"Неизвестное ядро: {kernel}; доступны: {', '.join(KERNELS)}") from None


def gaussian_kernel(u):
    """
    Standard normal density.

    Args:
        u: Scaled distance (scalar or array), must be finite

    Returns:
        Kernel weight(s), same shape as the input
    """
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"Аргумент ядра должен быть конечным: {u}")
    weights = _gaussian_weights(arr)
    return float(weights) if weights.ndim == 0 else weights


# ============= Bandwidths =============

def check_bandwidth(h: float, name: str = 'bandwidth') -> float:
    """Проверка, что ширина окна положительна и конечна"""
    try:
        value = float(h)
    except (TypeError, ValueError):
        raise ValueError(f"{name} должен быть числом: {h!r}") from None
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} должен быть положительным и конечным: {h}")
    return value


def silverman_bandwidth(xs: Sequence[float]) -> float:
    """
    Silverman's rule of thumb, 1.06 * sd * n^(-1/5), sd with the n-1 divisor.

    Args:
        xs: Conditioning values, at least two of them and not all equal

    Returns:
        Bandwidth in the units of xs
    """
    xs = np.asarray(xs, dtype=float).ravel()
    n = xs.size
    if n < 2:
        raise ValueError(f"Для правила Сильвермана нужно минимум 2 значения, получено {n}")
    if not np.all(np.isfinite(xs)):
        raise ValueError("Значения X должны быть конечными")
    sd = float(np.std(xs, ddof=1))
    if sd == 0.0:
        raise DegenerateSpreadError("Все значения X совпадают, правило Сильвермана неприменимо")
    return SILVERMAN_FACTOR * sd * n ** (-0.2)


def sim_bandwidth(noise_ratio: float, n: int) -> float:
    """Bandwidth 1.75 * sqrt(lambda / n) used for the integrated Wiener model"""
    lam = check_bandwidth(noise_ratio, 'lambda')
    if int(n) != n or n < 1:
        raise ValueError(f"Размер выборки должен быть натуральным числом: {n}")
    return SIM_BANDWIDTH_FACTOR * math.sqrt(lam / n)


# ============= Estimator configuration =============

@dataclass
class EstimatorConfig:
    """
    How F_{Y|X} and F_{Z|X} are estimated.

    When rule is 'silverman' or 'simulation' the bandwidths are derived by
    make_estimator_config and should not be set by hand.
    """
    bandwidth_y: float
    bandwidth_z: float
    kernel: Union[str, KernelFn] = 'gaussian'
    rule: str = 'explicit'
    noise_ratio: Optional[float] = None
    leave_one_out: bool = False

    def __post_init__(self):
        if self.rule not in BANDWIDTH_RULES:
            raise ValueError(f"Неизвестное правило выбора окна: {self.rule}")
        self.bandwidth_y = check_bandwidth(self.bandwidth_y, 'bandwidth_y')
        self.bandwidth_z = check_bandwidth(self.bandwidth_z, 'bandwidth_z')
        get_kernel(self.kernel)

    @property
    def kernel_fn(self) -> KernelFn:
        return get_kernel(self.kernel)

    def to_dict(self) -> Dict:
        return {
            'kernel': self.kernel_fn.shape,
            'bandwidth_y': self.bandwidth_y,
            'bandwidth_z': self.bandwidth_z,
            'rule': self.rule,
            'noise_ratio': self.noise_ratio,
            'leave_one_out': self.leave_one_out,
        }


def make_estimator_config(
    xs: Sequence[float],
    rule: str = 'silverman',
    bandwidth: Optional[float] = None,
    bandwidth_z: Optional[float] = None,
    noise_ratio: Optional[float] = None,
    kernel: Union[str, KernelFn] = 'gaussian',
    leave_one_out: bool = False,
) -> EstimatorConfig:
    """
    Build an EstimatorConfig, deriving bandwidths from the rule.

    Args:
        xs: Conditioning values of the sample
        rule: 'explicit', 'silverman' or 'simulation'
        bandwidth: Explicit bandwidth (h_y, and h_z unless bandwidth_z is given)
        bandwidth_z: Separate explicit bandwidth for Z
        noise_ratio: lambda for the simulation rule
        kernel: Kernel name or KernelFn
        leave_one_out: Drop the self term from both sums

    Returns:
        Validated EstimatorConfig
    """
    xs = np.asarray(xs, dtype=float)

    if rule == 'explicit':
        if bandwidth is None:
            raise ValueError("Для правила 'explicit' нужно задать ширину окна")
        h_y = check_bandwidth(bandwidth)
        h_z = check_bandwidth(bandwidth_z) if bandwidth_z is not None else h_y
    elif rule == 'silverman':
        if bandwidth is not None or bandwidth_z is not None:
            raise ValueError("Ширина окна выводится правилом Сильвермана и не задается вручную")
        h_y = h_z = silverman_bandwidth(xs)
    elif rule == 'simulation':
        if bandwidth is not None or bandwidth_z is not None:
            raise ValueError("Ширина окна выводится из lambda и не задается вручную")
        if noise_ratio is None:
            raise ValueError("Для правила 'simulation' нужно задать lambda")
        h_y = h_z = sim_bandwidth(noise_ratio, xs.size)
    else:
        raise ValueError(f"Неизвестное правило выбора окна: {rule}")

    logger.debug(f"Bandwidth rule '{rule}': h_y={h_y:.6g}, h_z={h_z:.6g}")
    return EstimatorConfig(
        bandwidth_y=h_y,
        bandwidth_z=h_z,
        kernel=kernel,
        rule=rule,
        noise_ratio=noise_ratio if rule == 'simulation' else None,
        leave_one_out=leave_one_out,
    )


# ============= Nadaraya-Watson estimators =============

def nw_conditional_cdf(
    pairs,
    kernel: Union[str, KernelFn],
    h: float,
    query: Tuple[float, float],
) -> float:
    """
    Nadaraya-Watson estimate of F(y|x) from (x_i, y_i) pairs.

    Args:
        pairs: Array-like of shape (n, 2) with columns x, y
        kernel: Kernel name or KernelFn
        h: Bandwidth
        query: Point (x, y)

    Returns:
        sum_i K(|x - x_i|/h) I(y_i <= y) / sum_i K(|x - x_i|/h)
    """
    data = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if data.shape[0] == 0:
        raise ValueError("Нужна хотя бы одна пара (x, y)")
    h = check_bandwidth(h)
    x, y = float(query[0]), float(query[1])
    if not (np.all(np.isfinite(data)) and math.isfinite(x) and math.isfinite(y)):
        raise ValueError("Все значения должны быть конечными")

    weights = get_kernel(kernel)(np.abs(x - data[:, 0]) / h)
    denominator = float(weights.sum())
    if denominator < WEIGHT_UNDERFLOW:
        raise DegenerateWeightsError(
            f"Сумма весов ядра {denominator:.3g} в точке x={x} при h={h}")
    return float(weights[data[:, 1] <= y].sum() / denominator)


def kernel_weight_matrix(
    xs: np.ndarray,
    kernel: Union[str, KernelFn],
    h: float,
    query_xs: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Matrix W[i, j] = K(|q_i - x_j| / h); q defaults to xs"""
    xs = np.asarray(xs, dtype=float)
    query_xs = xs if query_xs is None else np.asarray(query_xs, dtype=float)
    return get_kernel(kernel)(np.abs(query_xs[:, None] - xs[None, :]) / h)


def _check_denominators(denominators: np.ndarray, h: float) -> None:
    bad = np.flatnonzero(denominators < WEIGHT_UNDERFLOW)
    if bad.size:
        raise DegenerateWeightsError(
            f"Сумма весов ядра обнулилась при h={h}", row=int(bad[0]))


def nw_cdf_in_sample(
    xs: Sequence[float],
    ys: Sequence[float],
    kernel: Union[str, KernelFn],
    h: float,
    leave_one_out: bool = False,
) -> np.ndarray:
    """
    Evaluate the estimated F(y|x) at every data point (x_i, y_i).

    Args:
        xs, ys: Sample columns of equal length
        kernel: Kernel name or KernelFn
        h: Bandwidth
        leave_one_out: Exclude observation i from its own sums

    Returns:
        Array of estimates in input order
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs и ys должны быть одномерными и одной длины")
    h = check_bandwidth(h)

    weights = kernel_weight_matrix(xs, kernel, h)
    if leave_one_out:
        np.fill_diagonal(weights, 0.0)
    denominators = weights.sum(axis=1)
    _check_denominators(denominators, h)

    indicators = ys[None, :] <= ys[:, None]
    return (weights * indicators).sum(axis=1) / denominators


def nw_regression(
    xs: Sequence[float],
    ys: Sequence[float],
    kernel: Union[str, KernelFn],
    h: float,
    query_xs: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Local-constant (Nadaraya-Watson) estimate of E[Y | X = q]"""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    h = check_bandwidth(h)
    query = xs if query_xs is None else np.asarray(query_xs, dtype=float)

    weights = kernel_weight_matrix(xs, kernel, h, query)
    denominators = weights.sum(axis=1)
    _check_denominators(denominators, h)
    return weights @ ys / denominators
