"""
assoc_stats.py - Association measures of the form theta = E s(Y_1..Y_r) t(Z_1..Z_r)
computed as V-statistics over pseudo-observations.

Includes a brute-force enumeration oracle and O(n^2) rank-table equivalents
that also evaluate a whole batch of permutations of the second margin at once.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy import stats

from exceptions import BudgetExceededError, DegenerateVarianceError
from kernel_cdf import EstimatorConfig, nw_regression

logger = logging.getLogger(__name__)


DEFAULT_ENUMERATION_BUDGET = 10 ** 8
_ENUMERATION_CHUNK = 1 << 18

# Elements per scratch array when evaluating permutation batches
BATCH_ELEMENTS = 2_000_000

SIDEDNESS = ('two_sided', 'upper')
ESTIMATORS = ('v', 'u')


# ============= Kernels s, t =============

def difference_kernel(z1, z2):
    """s(z1, z2) = z1 - z2 (covariance up to a factor 2)"""
    return z1 - z2


def sign_kernel(z1, z2):
    """s(z1, z2) = sign(z1 - z2) (Kendall's tau)"""
    return np.sign(z1 - z2)


def phi(z1, z2, z3):
    """phi(z1, z2, z3) = I(z1 >= z2) - I(z1 >= z3)"""
    return (z1 >= z2).astype(float) - (z1 >= z3).astype(float)


def hoeffding_kernel(z1, z2, z3, z4, z5):
    return phi(z1, z2, z3) * phi(z1, z4, z5)


def a_kernel(z1, z2, z3, z4):
    """a(z1..z4) = |z1-z2| + |z3-z4| - |z1-z3| - |z2-z4|"""
    return np.abs(z1 - z2) + np.abs(z3 - z4) - np.abs(z1 - z3) - np.abs(z2 - z4)


def _separated(z1, z2, z3, z4):
    """I({z1, z2} lies strictly below or strictly above {z3, z4})"""
    low, high = np.minimum(z1, z2), np.maximum(z1, z2)
    return ((high < np.minimum(z3, z4)) | (low > np.maximum(z3, z4))).astype(float)


def sign_a_kernel(z1, z2, z3, z4):
    """sign a(z1..z4) = c(13|24) - c(12|34), exact from the order pattern"""
    return _separated(z1, z3, z2, z4) - _separated(z1, z2, z3, z4)


# ============= Types =============

@dataclass(frozen=True)
class StatisticSpec:
    """
    One association measure.

    Args:
        kind: pearson, kendall, hoeffding_delta, kappa, tau_star or custom
        degree_r: Kernel degree r
        sidedness: 'two_sided' (compare |T|) or 'upper' (compare T)
        s_kernel, t_kernel: Vectorised degree-r kernels (brute-force path)
        scale: Constant factor applied to the kernel average
        estimator: 'v' (all n^r tuples) or 'u' (distinct index tuples only)
    """
    kind: str
    degree_r: int
    sidedness: str
    s_kernel: Optional[Callable] = None
    t_kernel: Optional[Callable] = None
    scale: float = 1.0
    estimator: str = 'v'

    def __post_init__(self):
        if self.sidedness not in SIDEDNESS:
            raise ValueError(f"Неизвестная сторона критерия: {self.sidedness}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"Неизвестный тип оценки: {self.estimator}")
        if self.kind == 'custom':
            if self.s_kernel is None or self.t_kernel is None:
                raise ValueError("Для custom нужно задать оба ядра s и t")
            if int(self.degree_r) != self.degree_r or self.degree_r < 1:
                raise ValueError(f"Степень ядра должна быть натуральной: {self.degree_r}")
            return
        if self.kind not in _BUILTIN_SHAPE:
            raise ValueError(f"Неизвестная статистика: {self.kind}")
        degree, sidedness = _BUILTIN_SHAPE[self.kind]
        if self.degree_r != degree:
            raise ValueError(f"Для {self.kind} степень ядра равна {degree}, а не {self.degree_r}")
        if self.sidedness != sidedness:
            raise ValueError(f"Для {self.kind} критерий {sidedness}, а не {self.sidedness}")

    @property
    def is_builtin(self) -> bool:
        return self.kind != 'custom'

    def with_estimator(self, estimator: str) -> 'StatisticSpec':
        return StatisticSpec(self.kind, self.degree_r, self.sidedness, self.s_kernel,
                             self.t_kernel, self.scale, estimator)

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind,
            'degree_r': self.degree_r,
            'sidedness': self.sidedness,
            'estimator': self.estimator,
        }


@dataclass(frozen=True)
class StatisticValue:
    value: float
    kind: str
    n: int

    def __float__(self) -> float:
        return self.value


_BUILTIN_SHAPE = {
    'pearson': (2, 'two_sided'),
    'kendall': (2, 'two_sided'),
    'hoeffding_delta': (5, 'upper'),
    'kappa': (4, 'upper'),
    'tau_star': (4, 'upper'),
}

STATISTICS: Dict[str, StatisticSpec] = {
    'pearson': StatisticSpec('pearson', 2, 'two_sided', difference_kernel, difference_kernel, 0.5),
    'kendall': StatisticSpec('kendall', 2, 'two_sided', sign_kernel, sign_kernel),
    'hoeffding_delta': StatisticSpec('hoeffding_delta', 5, 'upper', hoeffding_kernel, hoeffding_kernel, 0.25),
    'kappa': StatisticSpec('kappa', 4, 'upper', a_kernel, a_kernel, 0.25),
    'tau_star': StatisticSpec('tau_star', 4, 'upper', sign_a_kernel, sign_a_kernel),
}

# CLI spellings
ALIASES = {
    'hoeffding': 'hoeffding_delta',
    'taustar': 'tau_star',
    'tau*': 'tau_star',
}


def statistic_names() -> list:
    """Имена, принимаемые get_statistic (канонические и сокращенные)"""
    return sorted(set(STATISTICS) | set(ALIASES))


def get_statistic(name: str, estimator: str = 'v') -> StatisticSpec:
    key = ALIASES.get(name.strip().lower(), name.strip().lower())
    if key not in STATISTICS:
        raise ValueError(
            f"Неизвестная статистика '{name}'; допустимые: {', '.join(statistic_names())}")
    spec = STATISTICS[key]
    return spec if estimator == 'v' else spec.with_estimator(estimator)


def make_custom_statistic(
    s_kernel: Callable,
    t_kernel: Callable,
    degree_r: int,
    sidedness: str = 'upper',
    scale: float = 1.0,
    estimator: str = 'v',
) -> StatisticSpec:
    """User-defined theta = scale * E s(...) t(...), evaluated by enumeration only"""
    return StatisticSpec('custom', degree_r, sidedness, s_kernel, t_kernel, scale, estimator)


# ============= Input checks =============

def _pair(us, vs, min_n: int = 1):
    us = np.asarray(us, dtype=float).ravel()
    vs = np.asarray(vs, dtype=float).ravel()
    if us.size != vs.size:
        raise ValueError(f"Векторы разной длины: {us.size} и {vs.size}")
    if us.size < min_n:
        raise ValueError(f"Нужно минимум {min_n} наблюдений, получено {us.size}")
    if not (np.all(np.isfinite(us)) and np.all(np.isfinite(vs))):
        raise ValueError("Значения должны быть конечными")
    return us, vs


def _identity(n: int) -> np.ndarray:
    return np.arange(n)[None, :]


def _chunk_size(per_item: int) -> int:
    return max(1, BATCH_ELEMENTS // max(1, per_item))


# ============= Brute-force oracle =============

def v_statistic_bruteforce(
    s_kernel: Callable,
    t_kernel: Callable,
    r: int,
    us: Sequence[float],
    vs: Sequence[float],
    budget: int = DEFAULT_ENUMERATION_BUDGET,
    distinct: bool = False,
) -> float:
    """
    Exact enumeration of n^-r sum s(u_i1..u_ir) t(v_i1..v_ir).

    Args:
        s_kernel, t_kernel: Kernels taking r arrays and returning an array
        r: Kernel degree
        us, vs: Equal-length samples
        budget: Maximum number of index tuples to enumerate
        distinct: Only tuples of distinct indices (U-statistic)

    Returns:
        Kernel average (no scale factor applied)
    """
    us, vs = _pair(us, vs)
    n = us.size
    r = int(r)
    if r < 1:
        raise ValueError(f"Степень ядра должна быть натуральной: {r}")
    total = n ** r
    if total > budget:
        raise BudgetExceededError(
            f"Перебор {n}^{r} = {total} кортежей превышает бюджет {budget}")
    if distinct and n < r:
        raise ValueError(f"Для U-статистики степени {r} нужно минимум {r} наблюдений")

    acc = 0.0
    shape = (n,) * r
    for start in range(0, total, _ENUMERATION_CHUNK):
        flat = np.arange(start, min(start + _ENUMERATION_CHUNK, total))
        idx = np.unravel_index(flat, shape)
        if distinct:
            sorted_idx = np.sort(np.vstack(idx), axis=0)
            keep = np.all(np.diff(sorted_idx, axis=0) != 0, axis=0) if r > 1 else np.ones(flat.size, bool)
            idx = tuple(i[keep] for i in idx)
            if idx[0].size == 0:
                continue
        s_vals = s_kernel(*(us[i] for i in idx))
        t_vals = t_kernel(*(vs[i] for i in idx))
        acc += float(np.sum(s_vals * t_vals))

    count = math.perm(n, r) if distinct else total
    return acc / count


def statistic_bruteforce(spec: StatisticSpec, us, vs, budget: int = DEFAULT_ENUMERATION_BUDGET) -> float:
    """Statistic scale times its kernel average, by enumeration"""
    return spec.scale * v_statistic_bruteforce(
        spec.s_kernel, spec.t_kernel, spec.degree_r, us, vs,
        budget=budget, distinct=spec.estimator == 'u')


# ============= Rank tables =============

def _dense_ranks(values: np.ndarray):
    ranks = stats.rankdata(values, method='dense').astype(np.intp)
    return ranks, int(ranks.max())


def _cumulative_counts(ru: np.ndarray, rv_perm: np.ndarray, du: int, dv: int) -> np.ndarray:
    """C[b, t, w] = #{k : ru_k <= t, rv_perm[b, k] <= w}; row/column 0 are empty"""
    m = rv_perm.shape[0]
    cells = (du + 1) * (dv + 1)
    flat = ru[None, :] * (dv + 1) + rv_perm + (np.arange(m) * cells)[:, None]
    hist = np.bincount(flat.ravel(), minlength=m * cells).reshape(m, du + 1, dv + 1)
    return hist.cumsum(axis=1).cumsum(axis=2).astype(float)


# ============= Batched statistics =============
# Each batch function returns T(us, vs[perm]) for every row of perms.

def _pearson_batch(us, vs, perms):
    a = us - us.mean()
    b = vs - vs.mean()
    norm = math.sqrt(float(a @ a) * float(b @ b))
    if norm == 0.0:
        raise DegenerateVarianceError("Один из векторов постоянен, корреляция не определена")
    out = np.empty(perms.shape[0])
    step = _chunk_size(perms.shape[1])
    for start in range(0, perms.shape[0], step):
        chunk = perms[start:start + step]
        out[start:start + step] = b[chunk] @ a / norm
    return np.clip(out, -1.0, 1.0)


def _kendall_batch(us, vs, perms):
    n = us.size
    su = np.sign(us[:, None] - us[None, :])
    sv = np.sign(vs[:, None] - vs[None, :])
    out = np.empty(perms.shape[0])
    step = _chunk_size(n * n)
    for start in range(0, perms.shape[0], step):
        chunk = perms[start:start + step]
        permuted = sv[chunk[:, :, None], chunk[:, None, :]]
        out[start:start + step] = np.einsum('ij,bij->b', su, permuted)
    return out / (n * (n - 1))


def _kappa_batch(us, vs, perms):
    # V-statistic kappa equals mean(A_centered * B) with A, B distance matrices
    n = us.size
    dist_u = np.abs(us[:, None] - us[None, :])
    dist_v = np.abs(vs[:, None] - vs[None, :])
    centered = (dist_u - dist_u.mean(axis=0)[None, :]
                - dist_u.mean(axis=1)[:, None] + dist_u.mean())
    out = np.empty(perms.shape[0])
    step = _chunk_size(n * n)
    for start in range(0, perms.shape[0], step):
        chunk = perms[start:start + step]
        permuted = dist_v[chunk[:, :, None], chunk[:, None, :]]
        out[start:start + step] = np.einsum('ij,bij->b', centered, permuted)
    return out / (n * n)


def _hoeffding_batch(us, vs, perms):
    # For fixed i1 the sum over (i2..i5) factorises into S_i^2 with
    # S_i = 2n N_i - 2 R_i Q_i, N_i = #{j: u_j <= u_i, v_j <= v_i}
    n = us.size
    ru, du = _dense_ranks(us)
    rv, dv = _dense_ranks(vs)
    below_u = np.searchsorted(np.sort(us), us, side='right').astype(float)
    below_v = np.searchsorted(np.sort(vs), vs, side='right').astype(float)

    out = np.empty(perms.shape[0])
    step = _chunk_size((du + 1) * (dv + 1) + n)
    rows = None
    for start in range(0, perms.shape[0], step):
        chunk = perms[start:start + step]
        rv_perm = rv[chunk]
        table = _cumulative_counts(ru, rv_perm, du, dv)
        if rows is None or rows.shape[0] != chunk.shape[0]:
            rows = np.arange(chunk.shape[0])[:, None]
        joint = table[rows, ru[None, :], rv_perm]
        s = 2.0 * n * joint - 2.0 * below_u[None, :] * below_v[chunk]
        out[start:start + step] = (s * s).sum(axis=1)
    return 0.25 * out / float(n) ** 5


def _hoeffding_u_batch(us, vs, perms):
    # For fixed i the kernel average over distinct (j, k, l, m), all != i,
    # depends only on the quadrant counts of the other points around (u_i, v_i):
    # W_jk = (a_j - a_k)(b_j - b_k) with a_j = I(u_j <= u_i), b_j = I(v_j <= v_i),
    # and the disjoint-pair sum is T^2 - 4 sum r_j^2 + 2 sum W_jk^2.
    n = us.size
    if n < 5:
        raise ValueError(f"Для U-статистики степени 5 нужно минимум 5 наблюдений, получено {n}")
    ru, du = _dense_ranks(us)
    rv, dv = _dense_ranks(vs)
    below_u = np.searchsorted(np.sort(us), us, side='right').astype(float) - 1.0
    below_v = np.searchsorted(np.sort(vs), vs, side='right').astype(float) - 1.0
    m = n - 1.0

    out = np.empty(perms.shape[0])
    step = _chunk_size((du + 1) * (dv + 1) + n)
    rows = None
    for start in range(0, perms.shape[0], step):
        chunk = perms[start:start + step]
        rv_perm = rv[chunk]
        table = _cumulative_counts(ru, rv_perm, du, dv)
        if rows is None or rows.shape[0] != chunk.shape[0]:
            rows = np.arange(chunk.shape[0])[:, None]
        both = table[rows, ru[None, :], rv_perm] - 1.0
        a_count = np.broadcast_to(below_u, both.shape)
        b_count = below_v[chunk]
        only_a = a_count - both
        only_b = b_count - both
        neither = m - a_count - b_count + both

        total = 2.0 * (m * both - a_count * b_count)
        r_both = m - a_count - b_count + both
        r_only_a = both - b_count
        r_only_b = both - a_count
        squares = (both * r_both ** 2 + only_a * r_only_a ** 2
                   + only_b * r_only_b ** 2 + neither * both ** 2)
        w_squares = 2.0 * (both * neither + only_a * only_b)
        out[start:start + step] = (total ** 2 - 4.0 * squares + 2.0 * w_squares).sum(axis=1)
    return 0.25 * out / math.perm(n, 5)


def _tau_star_batch(us, vs, perms):
    # sign a(z1..z4) = c(13|24) - c(12|34), where c(ij|kl) indicates that
    # {z_i, z_j} lies strictly below or strictly above {z_k, z_l}.
    # Each separation count is a sum over threshold levels (t, w) of
    # products of quadrant counts read off the cumulative rank table.
    n = us.size
    ru, du = _dense_ranks(us)
    rv, dv = _dense_ranks(vs)

    out = np.empty(perms.shape[0])
    step = _chunk_size(8 * (du + 1) * (dv + 1))
    for start in range(0, perms.shape[0], step):
        chunk = perms[start:start + step]
        table = _cumulative_counts(ru, rv[chunk], du, dv)

        le_le = table[:, 1:, 1:]
        lt_le = table[:, :-1, 1:]
        le_lt = table[:, 1:, :-1]
        lt_lt = table[:, :-1, :-1]
        u_le = table[:, 1:, dv][:, :, None]
        u_lt = table[:, :-1, dv][:, :, None]
        v_le = table[:, du, 1:][:, None, :]
        v_lt = table[:, du, :-1][:, None, :]

        above = n - u_le - v_le + le_le
        upper_le = u_le - le_le
        upper_lt = u_lt - lt_le
        right_le = v_le - le_le
        right_lt = v_lt - le_lt

        concordant = (above * above) * (le_le ** 2 - le_lt ** 2 - lt_le ** 2 + lt_lt ** 2)
        discordant = (upper_le ** 2 - upper_lt ** 2) * (right_le ** 2 - right_lt ** 2)
        crossed = above * (le_le * upper_le * right_le - le_lt * upper_le * right_lt
                           - lt_le * upper_lt * right_le + lt_lt * upper_lt * right_lt)

        total = 4.0 * concordant + 4.0 * discordant - 8.0 * crossed
        out[start:start + step] = total.sum(axis=(1, 2))
    return out / float(n) ** 4


_BATCH: Dict[str, Callable] = {
    'pearson': _pearson_batch,
    'kendall': _kendall_batch,
    'hoeffding_delta': _hoeffding_batch,
    'kappa': _kappa_batch,
    'tau_star': _tau_star_batch,
}

# kendall's tau_a already is the U-statistic; pearson has no U variant
_U_BATCH: Dict[str, Callable] = {
    'pearson': _pearson_batch,
    'kendall': _kendall_batch,
    'hoeffding_delta': _hoeffding_u_batch,
}

_MIN_N = {
    'pearson': 2,
    'kendall': 2,
}


def _fast_path(spec: StatisticSpec) -> Optional[Callable]:
    if not spec.is_builtin:
        return None
    return (_BATCH if spec.estimator == 'v' else _U_BATCH).get(spec.kind)


def batch_statistic(
    spec: StatisticSpec,
    us: Sequence[float],
    vs: Sequence[float],
    perms: np.ndarray,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> np.ndarray:
    """
    Evaluate the statistic on (us, vs[perm]) for every row of perms.

    Args:
        spec: Statistic to evaluate
        us, vs: Pseudo-observations
        perms: Integer array of shape (B, n), one permutation per row
        budget: Enumeration budget for the brute-force path

    Returns:
        Array of B statistic values
    """
    us, vs = _pair(us, vs, _MIN_N.get(spec.kind, 1))
    perms = np.asarray(perms, dtype=np.intp)
    if perms.ndim != 2 or perms.shape[1] != us.size:
        raise ValueError(f"Перестановки должны иметь форму (B, {us.size})")
    fast = _fast_path(spec)
    if fast is not None:
        return fast(us, vs, perms)
    return np.array([statistic_bruteforce(spec, us, vs[p], budget) for p in perms])


def compute_statistic(spec: StatisticSpec, us, vs, budget: int = DEFAULT_ENUMERATION_BUDGET) -> StatisticValue:
    """Value of any StatisticSpec on (us, vs)"""
    us, vs = _pair(us, vs, _MIN_N.get(spec.kind, 1))
    value = float(batch_statistic(spec, us, vs, _identity(us.size), budget)[0])
    return StatisticValue(value=value, kind=spec.kind, n=int(us.size))


# ============= Named statistics =============

def pearson_r(us, vs) -> StatisticValue:
    """Sample Pearson correlation; constant input raises DegenerateVarianceError"""
    return compute_statistic(STATISTICS['pearson'], us, vs)


def kendall_tau(us, vs) -> StatisticValue:
    """Kendall's tau_a, ties contributing 0"""
    return compute_statistic(STATISTICS['kendall'], us, vs)


def hoeffding_delta(us, vs) -> StatisticValue:
    """V-statistic of Hoeffding's Delta"""
    return compute_statistic(STATISTICS['hoeffding_delta'], us, vs)


def kappa_stat(us, vs) -> StatisticValue:
    """V-statistic of kappa = E a(Y..) a(Z..) / 4"""
    return compute_statistic(STATISTICS['kappa'], us, vs)


def tau_star(us, vs) -> StatisticValue:
    """V-statistic of tau* = E sign a(Y..) sign a(Z..)"""
    return compute_statistic(STATISTICS['tau_star'], us, vs)


# ============= Partial correlation baseline =============

def partial_correlation_baseline(sample, config: EstimatorConfig) -> StatisticValue:
    """
    Correlation of the Nadaraya-Watson regression residuals Y - g(X), Z - h(X).

    Args:
        sample: Raw data with x, y, z columns
        config: Kernel and bandwidths (h_y for g, h_z for h)

    Returns:
        StatisticValue of kind 'partial_correlation'
    """
    if sample.n < 3:
        raise ValueError(f"Для частной корреляции нужно минимум 3 наблюдения, получено {sample.n}")
    kernel = config.kernel_fn
    resid_y = sample.y - nw_regression(sample.x, sample.y, kernel, config.bandwidth_y)
    resid_z = sample.z - nw_regression(sample.x, sample.z, kernel, config.bandwidth_z)

    for name, resid, raw in (('Y', resid_y, sample.y), ('Z', resid_z, sample.z)):
        if np.max(np.abs(resid - resid.mean())) <= 1e-12 * max(1.0, float(np.max(np.abs(raw)))):
            raise DegenerateVarianceError(f"Остатки регрессии {name} на X имеют нулевую дисперсию")

    value = pearson_r(resid_y, resid_z).value
    return StatisticValue(value=value, kind='partial_correlation', n=sample.n)
