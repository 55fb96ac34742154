"""
CI Test Coordinator - единый интерфейс для всех статистик
Связывает оценку условных функций распределения, частичное копула-преобразование
и перестановочные тесты в один отчет (RunReport)
"""

import logging
import time
import traceback
from typing import Any, Dict, List, Optional, Sequence

from assoc_stats import (
    STATISTICS, get_statistic, hoeffding_delta, kappa_stat, kendall_tau,
    partial_correlation_baseline, pearson_r, tau_star,
)
from kernel_cdf import EstimatorConfig, make_estimator_config
from perm_test import DEFAULT_RESAMPLES, permutation_pvalue
from transform import PseudoSample, Sample, partial_copula_transform, transform_diagnostics

logger = logging.getLogger(__name__)


DEFAULT_STATISTICS = ('pearson', 'kendall', 'hoeffding_delta', 'kappa', 'tau_star')

# Published digoxin p-values and the accepted deviation from them
DIGOXIN_REFERENCE = {
    'pearson': (0.018, 0.03),
    'kendall': (0.022, 0.03),
    'kappa': (0.041, 0.03),
    'hoeffding_delta': (0.107, 0.04),
    'tau_star': (0.055, 0.04),
}

# Statistics whose sensitivity rows also include the U-statistic
SENSITIVITY_ESTIMATORS = {
    'hoeffding_delta': ('v', 'u'),
}


def canonical_statistics(names: Sequence[str]) -> List[str]:
    """Канонические имена статистик без повторов, в порядке запроса"""
    result = []
    for name in names:
        kind = get_statistic(name).kind
        if kind not in result:
            result.append(kind)
    if not result:
        raise ValueError("Не задано ни одной статистики")
    return result


def build_estimator_config(
    sample: Sample,
    rule: Optional[str] = None,
    bandwidth: Optional[float] = None,
    noise_ratio: Optional[float] = None,
    leave_one_out: bool = False,
    bandwidth_z: Optional[float] = None,
) -> EstimatorConfig:
    """Explicit bandwidth wins; otherwise the named rule (Silverman by default)"""
    if bandwidth is not None:
        if rule not in (None, 'explicit'):
            raise ValueError("Нельзя одновременно задать ширину окна и правило ее выбора")
        return make_estimator_config(sample.x, rule='explicit', bandwidth=bandwidth,
                                     bandwidth_z=bandwidth_z, leave_one_out=leave_one_out)
    if bandwidth_z is not None:
        raise ValueError("Отдельная ширина окна для Z задается только вместе с общей")
    return make_estimator_config(sample.x, rule=rule or 'silverman', noise_ratio=noise_ratio,
                                 leave_one_out=leave_one_out)


class CITestCoordinator:
    """Координатор тестов условной независимости"""

    def __init__(
        self,
        resamples: int = DEFAULT_RESAMPLES,
        seed: int = 0,
        mode: str = 'monte_carlo',
        sidedness: str = 'auto',
        progress: bool = False,
    ):
        self.resamples = resamples
        self.seed = seed
        self.mode = mode
        self.sidedness = sidedness
        self.progress = progress
        self.statistics = {
            'pearson': {
                'available': True,
                'function': pearson_r,
                'description': 'Pearson - выборочная корреляция',
            },
            'kendall': {
                'available': True,
                'function': kendall_tau,
                'description': 'Kendall tau - согласованность знаков пар',
            },
            'hoeffding_delta': {
                'available': True,
                'function': hoeffding_delta,
                'description': 'Hoeffding Delta - состоятельна против всех альтернатив',
            },
            'kappa': {
                'available': True,
                'function': kappa_stat,
                'description': 'kappa - ковариация расстояний',
            },
            'tau_star': {
                'available': True,
                'function': tau_star,
                'description': 'tau* - знаковая ковариация',
            },
        }

    def get_available_statistics(self) -> List[str]:
        """Получить список доступных статистик"""
        return [name for name, config in self.statistics.items() if config['available']]

    def get_statistic_info(self) -> Dict[str, Dict]:
        """Получить подробную информацию о статистиках"""
        return {
            name: {
                'available': config['available'],
                'description': config['description'],
                'degree_r': STATISTICS[name].degree_r,
                'sidedness': STATISTICS[name].sidedness,
            }
            for name, config in self.statistics.items()
        }

    def transform(self, sample: Sample, config: EstimatorConfig) -> PseudoSample:
        return partial_copula_transform(sample, config)

    def compute_values(self, pseudo: PseudoSample, statistics: Sequence[str] = DEFAULT_STATISTICS) -> Dict[str, float]:
        """Значения статистик на псевдонаблюдениях (без перестановок)"""
        values = {}
        for kind in canonical_statistics(statistics):
            values[kind] = self.statistics[kind]['function'](pseudo.u, pseudo.v).value
        return values

    def run_test(self, pseudo: PseudoSample, statistic: str, **kwargs) -> Dict[str, Any]:
        """
        Перестановочный тест одной статистикой

        Args:
            pseudo: Псевдонаблюдения
            statistic: Имя статистики
            **kwargs: Переопределение resamples, seed, mode, sidedness, estimator ('v' или 'u')

        Returns:
            TestResult.to_dict() с полями success и elapsed_seconds,
            либо {'success': False, 'error': ...}
        """
        started = time.perf_counter()
        try:
            spec = get_statistic(statistic, kwargs.get('estimator', 'v'))
            if not self.statistics[spec.kind]['available']:
                raise RuntimeError(f"Статистика {spec.kind} недоступна")
            result = permutation_pvalue(
                pseudo, spec,
                resamples=kwargs.get('resamples', self.resamples),
                seed=kwargs.get('seed', self.seed),
                mode=kwargs.get('mode', self.mode),
                sidedness=kwargs.get('sidedness', self.sidedness),
                progress=self.progress,
            )
            output = result.to_dict()
            output['success'] = True
        except Exception as e:
            logger.error(f"{statistic}: {e}")
            output = {
                'statistic_kind': statistic,
                'success': False,
                'error': str(e),
                'traceback': traceback.format_exc(),
            }
        output['elapsed_seconds'] = time.perf_counter() - started
        return output

    def compare_statistics(
        self,
        sample: Sample,
        config: EstimatorConfig,
        statistics: Sequence[str] = DEFAULT_STATISTICS,
        input_description: str = '',
        include_timings: bool = False,
        pseudo: Optional[PseudoSample] = None,
    ) -> Dict[str, Any]:
        """
        RunReport: преобразование и тест каждой запрошенной статистикой

        Args:
            sample: Исходные данные
            config: Параметры оценки условных функций распределения
            statistics: Имена статистик (каждая попадает в отчет ровно один раз)
            input_description: Описание источника данных
            include_timings: Добавить время выполнения в отчет
            pseudo: Готовые псевдонаблюдения (иначе вычисляются)

        Returns:
            Словарь отчета, сериализуемый в JSON
        """
        kinds = canonical_statistics(statistics)
        started = time.perf_counter()
        if pseudo is None:
            pseudo = self.transform(sample, config)
        transform_seconds = time.perf_counter() - started

        try:
            baseline = {'value': partial_correlation_baseline(sample, config).value, 'success': True}
        except ValueError as e:
            baseline = {'success': False, 'error': str(e)}

        timings = {'transform': transform_seconds}
        results = []
        for kind in kinds:
            logger.info(f"Running {kind} ({self.mode}, B={self.resamples})")
            result = self.run_test(pseudo, kind)
            timings[kind] = result.pop('elapsed_seconds')
            result.pop('traceback', None)
            if result['success']:
                logger.info(f"{kind}: T={result['observed']:.6g}, p={result['p_value']:.5g}")
            results.append(result)

        report = {
            'input': input_description,
            'n': sample.n,
            'estimator': config.to_dict(),
            'diagnostics': transform_diagnostics(pseudo),
            'partial_correlation': baseline,
            'results': results,
            'summary': {
                'statistics_tested': len(results),
                'successful': len([r for r in results if r['success']]),
                'failed': len([r for r in results if not r['success']]),
            },
        }
        logger.info("Timings: " + ", ".join(f"{k}={v:.2f}s" for k, v in timings.items()))
        if include_timings:
            report['timings'] = timings
        return report

    def sensitivity_report(
        self,
        sample: Sample,
        statistics: Sequence[str] = DEFAULT_STATISTICS,
        reference: Optional[Dict[str, tuple]] = None,
        rule: Optional[str] = None,
        bandwidth: Optional[float] = None,
        noise_ratio: Optional[float] = None,
    ) -> Dict[str, Any]:
        """
        p-значения при обоих вариантах сторон критерия и обоих вариантах оценки
        (по всей выборке и leave-one-out), со сравнением с эталонными значениями.
        Для статистик из SENSITIVITY_ESTIMATORS добавляется и U-статистика.
        """
        reference = DIGOXIN_REFERENCE if reference is None else reference
        kinds = canonical_statistics(statistics)
        rows = []
        for leave_one_out in (False, True):
            config = build_estimator_config(sample, rule, bandwidth, noise_ratio, leave_one_out)
            pseudo = self.transform(sample, config)
            for kind in kinds:
                for estimator in SENSITIVITY_ESTIMATORS.get(kind, ('v',)):
                    result = self.run_test(pseudo, kind, estimator=estimator)
                    base = {'statistic_kind': kind, 'leave_one_out': leave_one_out, 'estimator': estimator}
                    if not result['success']:
                        rows.append({**base, 'error': result['error']})
                        continue
                    for sidedness, p_value in result['p_values_by_sidedness'].items():
                        row = {**base, 'sidedness': sidedness, 'p_value': p_value}
                        if kind in reference:
                            target, tolerance = reference[kind]
                            row.update(reference_p_value=target, tolerance=tolerance,
                                       within_tolerance=abs(p_value - target) <= tolerance)
                        rows.append(row)

        covered = {
            kind: any(r.get('within_tolerance', False) for r in rows if r['statistic_kind'] == kind)
            for kind in kinds if kind in reference
        }
        return {'rows': rows, 'covered': covered}


def outside_reference(report: Dict[str, Any], reference: Optional[Dict[str, tuple]] = None) -> List[str]:
    """Статистики отчета, чьи p-значения вышли за допуск эталона"""
    reference = DIGOXIN_REFERENCE if reference is None else reference
    outside = []
    for result in report['results']:
        kind = result['statistic_kind']
        if kind not in reference:
            continue
        target, tolerance = reference[kind]
        if not result['success'] or abs(result['p_value'] - target) > tolerance:
            outside.append(kind)
    return outside
