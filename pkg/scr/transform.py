"""
transform.py - Partial copula transform.
Maps each observation (X_i, Y_i, Z_i) to (U_i, V_i) = (F(Y_i|X_i), F(Z_i|X_i))
using Nadaraya-Watson estimates, plus uniformity diagnostics for the result.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from kernel_cdf import EstimatorConfig, nw_cdf_in_sample

logger = logging.getLogger(__name__)

# KS distances above this are reported as a warning only
KS_WARNING_LEVEL = 0.3


def _as_column(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"Столбец {name} должен быть одномерным")
    return arr


@dataclass
class Sample:
    """Raw data: n triples (x_i, y_i, z_i) of finite reals"""
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.x = _as_column(self.x, 'x')
        self.y = _as_column(self.y, 'y')
        self.z = _as_column(self.z, 'z')
        if not (self.x.size == self.y.size == self.z.size):
            raise ValueError(
                f"Столбцы разной длины: x={self.x.size}, y={self.y.size}, z={self.z.size}")
        if self.x.size < 1:
            raise ValueError("Выборка пуста")
        for name in ('x', 'y', 'z'):
            bad = np.flatnonzero(~np.isfinite(getattr(self, name)))
            if bad.size:
                raise ValueError(f"Неконечное значение в столбце {name}, строка {int(bad[0])}")

    @property
    def n(self) -> int:
        return int(self.x.size)

    @property
    def rows(self) -> list:
        return list(zip(self.x.tolist(), self.y.tolist(), self.z.tolist()))

    @classmethod
    def from_rows(cls, rows: Iterable[Tuple[float, float, float]]) -> 'Sample':
        data = np.asarray(list(rows), dtype=float).reshape(-1, 3)
        return cls(data[:, 0], data[:, 1], data[:, 2])

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> 'Sample':
        return cls(df['x'].to_numpy(), df['y'].to_numpy(), df['z'].to_numpy())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'x': self.x, 'y': self.y, 'z': self.z})

    def __eq__(self, other) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return (np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)
                and np.array_equal(self.z, other.z))


@dataclass(eq=False)
class PseudoSample:
    """
    Pseudo-observations (u_i, v_i) produced by the partial copula transform.

    x keeps the conditioning values of the source sample for export
    (scatter plots of (x_i, u_i) and (x_i, v_i)).
    """
    u: np.ndarray
    v: np.ndarray
    config_echo: Optional[EstimatorConfig] = None
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        self.u = _as_column(self.u, 'u')
        self.v = _as_column(self.v, 'v')
        if self.u.size != self.v.size:
            raise ValueError(f"Столбцы разной длины: u={self.u.size}, v={self.v.size}")
        if self.x is not None:
            self.x = _as_column(self.x, 'x')

    @property
    def n(self) -> int:
        return int(self.u.size)

    @property
    def rows(self) -> list:
        return list(zip(self.u.tolist(), self.v.tolist()))

    def to_frame(self, sample: Optional[Sample] = None) -> pd.DataFrame:
        """Columns x, u, v; with the source sample: x, y, z, u, v"""
        if sample is not None:
            df = sample.to_frame()
        else:
            df = pd.DataFrame({'x': self.x if self.x is not None else np.arange(self.n, dtype=float)})
        df['u'] = self.u
        df['v'] = self.v
        return df


# ============= Transform =============

def partial_copula_transform(sample: Sample, config: EstimatorConfig) -> PseudoSample:
    """
    Apply the estimated partial copula transform in-sample.

    Args:
        sample: Raw (x, y, z) data
        config: Kernel, bandwidths and the leave-one-out switch

    Returns:
        PseudoSample in input order, u_i = F(y_i|x_i), v_i = F(z_i|x_i)
    """
    kernel = config.kernel_fn
    u = nw_cdf_in_sample(sample.x, sample.y, kernel, config.bandwidth_y,
                         leave_one_out=config.leave_one_out)
    v = nw_cdf_in_sample(sample.x, sample.z, kernel, config.bandwidth_z,
                         leave_one_out=config.leave_one_out)
    pseudo = PseudoSample(u=u, v=v, config_echo=config, x=sample.x.copy())

    diagnostics = transform_diagnostics(pseudo)
    logger.debug(
        f"Partial copula transform: n={sample.n}, "
        f"KS(u)={diagnostics['ks_u']:.4f}, KS(v)={diagnostics['ks_v']:.4f}")
    if max(diagnostics['ks_u'], diagnostics['ks_v']) > KS_WARNING_LEVEL:
        logger.warning("Pseudo-observations look far from uniform; check the bandwidth")
    return pseudo


def true_partial_copula_transform(
    sample: Sample,
    g: Callable[[np.ndarray], np.ndarray],
    h: Callable[[np.ndarray], np.ndarray],
    sigma_eps: float,
) -> PseudoSample:
    """Exact transform for Y = g(x) + e_Y, Z = h(x) + e_Z with N(0, sigma_eps^2) errors"""
    if sigma_eps <= 0:
        raise ValueError(f"sigma_eps должна быть положительной: {sigma_eps}")
    u = stats.norm.cdf((sample.y - g(sample.x)) / sigma_eps)
    v = stats.norm.cdf((sample.z - h(sample.x)) / sigma_eps)
    return PseudoSample(u=u, v=v, x=sample.x.copy())


# ============= Diagnostics =============

def uniformity_diagnostic(values: Sequence[float]) -> float:
    """
    Kolmogorov-Smirnov distance between the empirical CDF of values and Uniform(0, 1).

    Args:
        values: Nonempty collection of numbers in [0, 1]

    Returns:
        Sup-distance in [0, 1]
    """
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("Пустой набор значений")
    if np.any((arr < 0) | (arr > 1)) or not np.all(np.isfinite(arr)):
        raise ValueError("Значения должны лежать в [0, 1]")
    return float(stats.kstest(arr, 'uniform').statistic)


def transform_diagnostics(pseudo: PseudoSample) -> Dict[str, float]:
    """KS distances for both pseudo-observation columns"""
    return {
        'ks_u': uniformity_diagnostic(pseudo.u),
        'ks_v': uniformity_diagnostic(pseudo.v),
    }
