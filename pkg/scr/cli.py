"""
cli.py - Командная строка: transform, test, simulate, bandwidth-sweep, reproduce-digoxin.

Все случайные величины выводятся из одного --seed; при одинаковых флагах
JSON-отчеты совпадают побайтно (время выполнения добавляется только с --timings).
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
import yaml

from assoc_stats import statistic_names
from coordinator import (
    DEFAULT_STATISTICS, CITestCoordinator, build_estimator_config, canonical_statistics,
    outside_reference,
)
from datasets import (
    CSV_FLOAT_FORMAT, digoxin_dataset, load_dataset, parse_column_map, save_frame_csv,
    save_json, save_pseudo_csv, save_sample_csv,
)
from exceptions import PartialCopulaError
from perm_test import DEFAULT_RESAMPLES
from sim_study import (
    DEFAULT_GRID_M, DEFAULT_SIM_RESAMPLES, SimConfig, run_bandwidth_robustness,
    run_estimation_effect, run_power_study, run_study_grid, run_uniformity_check,
)
from transform import transform_diagnostics

logger = logging.getLogger(__name__)


ENV_LOG_LEVEL = 'PCOPULA_LOG_LEVEL'
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')
MODES = {'mc': 'monte_carlo', 'exhaustive': 'exhaustive'}
SIDES = ('auto', 'two', 'upper')
EXPERIMENTS = ('power', 'grid', 'estimation', 'uniformity')
DIGOXIN_OUT = 'digoxin_results'

# Keys of the config file that differ from the argparse dest
CONFIG_ALIASES = {'lambda': 'noise_ratio'}


# ============= Parsing helpers =============

def parse_list(value) -> List[str]:
    """'a,b' или список из YAML -> ['a', 'b']"""
    if isinstance(value, (list, tuple)):
        items = [str(v) for v in value]
    else:
        items = str(value).split(',')
    return [item.strip() for item in items if item.strip()]


def parse_floats(value) -> List[float]:
    try:
        return [float(item) for item in parse_list(value)]
    except ValueError:
        raise ValueError(f"Ожидался список чисел через запятую: {value}") from None


def parse_bandwidth_rule(value: Optional[str]):
    """'silverman' -> ('silverman', None); 'sim:0.5' -> ('simulation', 0.5)"""
    if value is None:
        return None, None
    text = str(value).strip().lower()
    if text == 'silverman':
        return 'silverman', None
    if text.startswith('sim:'):
        try:
            return 'simulation', float(text[4:])
        except ValueError:
            pass
    raise ValueError(f"Неизвестное правило выбора окна: {value} (допустимо: silverman, sim:<lambda>)")


def load_config_file(path: str) -> Dict:
    """YAML-файл, ключи которого повторяют длинные имена флагов"""
    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"Файл конфигурации {path} должен содержать словарь")
    config = {}
    for key, value in data.items():
        dest = str(key).strip().lstrip('-').replace('-', '_')
        config[CONFIG_ALIASES.get(dest, dest)] = value
    return config


def apply_config(subparsers: Dict[str, argparse.ArgumentParser], config: Dict) -> None:
    """Значения из файла становятся значениями по умолчанию; флаги их перекрывают"""
    for dest, value in config.items():
        targets = [sp for sp in subparsers.values() if any(a.dest == dest for a in sp._actions)]
        if not targets or dest == 'config':
            raise ValueError(f"Неизвестный ключ конфигурации: {dest}")
        if isinstance(value, (list, tuple)):
            value = ','.join(str(v) for v in value)
        for sp in targets:
            sp.set_defaults(**{dest: value})


# ============= Parser =============

def build_parser():
    parser = argparse.ArgumentParser(
        prog='pcopula',
        description="Проверка условной независимости Y и Z при данном X "
                    "через частичное копула-преобразование и перестановочные тесты")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML-файл с параметрами (ключи = имена флагов)")
    common.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS,
                        default=os.getenv(ENV_LOG_LEVEL, 'INFO').upper(),
                        help=f"Уровень логирования (по умолчанию ${ENV_LOG_LEVEL} или INFO)")
    common.add_argument("--seed", type=int, default=0, help="Зерно генератора случайных чисел")
    common.add_argument("-o", "--out", default=None,
                        help=f"Директория для результатов (по умолчанию stdout, для reproduce-digoxin {DIGOXIN_OUT})")
    common.add_argument("-f", "--format", choices=["json", "csv"], default=None,
                        help="Формат результатов")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", default="digoxin", help="Путь к CSV (столбцы x, y, z) или 'digoxin'")
    data.add_argument("--columns", default=None, help="Переименование столбцов: x=...,y=...,z=...")
    data.add_argument("--bandwidth", type=float, default=None, help="Явная ширина окна (h_y и h_z)")
    data.add_argument("--bandwidth-z", type=float, default=None, help="Отдельная ширина окна для Z")
    data.add_argument("--bandwidth-rule", default=None, help="silverman (по умолчанию) или sim:<lambda>")
    data.add_argument("--leave-one-out", action="store_true", help="Оценка без собственного наблюдения")

    testing = argparse.ArgumentParser(add_help=False)
    testing.add_argument("--stats", default=",".join(DEFAULT_STATISTICS),
                         help=f"Статистики через запятую: {', '.join(statistic_names())}")
    testing.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES, help="Число перестановок B")
    testing.add_argument("--sided", default="auto", choices=SIDES, help="Сторона критерия")
    testing.add_argument("--mode", default="mc", choices=list(MODES), help="Монте-Карло или полный перебор")
    testing.add_argument("--timings", action="store_true", help="Добавить время выполнения в JSON")
    testing.add_argument("--progress", action="store_true", help="Показывать прогресс")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--n", type=int, default=100, help="Размер выборки")
    sim.add_argument("--lambda", dest="noise_ratio", type=float, default=0.5, help="Отношение шум/сигнал")
    sim.add_argument("--sigma0", type=float, default=1.0, help="Масштаб сигнала")
    sim.add_argument("--grid-m", type=int, default=DEFAULT_GRID_M, help="Число узлов сетки винеровского процесса")
    sim.add_argument("--replications", type=int, default=500, help="Число повторений")
    sim.add_argument("--resamples", type=int, default=DEFAULT_SIM_RESAMPLES, help="Число перестановок B")
    sim.add_argument("--stat", default="pearson", help="Статистика теста")
    sim.add_argument("--alpha", type=float, default=0.05, help="Уровень значимости")
    sim.add_argument("--fixed-functions", action="store_true", help="Одни и те же g, h во всех повторениях")
    sim.add_argument("--n-jobs", type=int, default=1, help="Число потоков")
    sim.add_argument("--progress", action="store_true", help="Показывать прогресс")

    commands = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    sp = commands.add_parser("transform", parents=[common, data], help="Частичное копула-преобразование")
    sp.set_defaults(handler=cmd_transform)
    subparsers['transform'] = sp

    sp = commands.add_parser("test", parents=[common, data, testing], help="Перестановочные тесты")
    sp.set_defaults(handler=cmd_test)
    subparsers['test'] = sp

    sp = commands.add_parser("simulate", parents=[common, sim], help="Моделирование мощности и ошибки I рода")
    sp.add_argument("--experiment", default="power", choices=EXPERIMENTS, help="Тип эксперимента")
    sp.add_argument("--rho-grid", default="0,0.3,0.6", help="Значения rho через запятую")
    sp.add_argument("--n-values", default="20,100", help="Размеры выборок (grid, estimation)")
    sp.add_argument("--lambdas", default="0.1,0.3,0.5,0.7", help="Значения lambda (grid)")
    sp.set_defaults(handler=cmd_simulate)
    subparsers['simulate'] = sp

    sp = commands.add_parser("bandwidth-sweep", parents=[common, sim], help="Ошибка I рода в зависимости от окна")
    sp.add_argument("--bandwidths", default=None, help="Ширины окна через запятую")
    sp.set_defaults(handler=cmd_bandwidth_sweep)
    subparsers['bandwidth-sweep'] = sp

    sp = commands.add_parser("reproduce-digoxin", parents=[common, testing],
                             help="Все статистики на данных digoxin с экспортом данных для графиков")
    sp.set_defaults(handler=cmd_reproduce_digoxin)
    subparsers['reproduce-digoxin'] = sp

    for name, sp in subparsers.items():
        sp.set_defaults(subparser=sp)
    return parser, subparsers


# ============= Shared steps =============

def _statistics(args) -> List[str]:
    try:
        return canonical_statistics(parse_list(args.stats))
    except ValueError as e:
        args.subparser.error(str(e))


def _mode(args) -> str:
    if args.mode not in MODES:
        raise ValueError(f"Неизвестный режим: {args.mode}; допустимые: {', '.join(MODES)}")
    return MODES[args.mode]


def _load(args):
    columns = parse_column_map(args.columns)
    sample = load_dataset(args.data, columns)
    rule, noise_ratio = parse_bandwidth_rule(args.bandwidth_rule)
    config = build_estimator_config(sample, rule, args.bandwidth, noise_ratio, args.leave_one_out,
                                    bandwidth_z=args.bandwidth_z)
    return sample, config


def _coordinator(args) -> CITestCoordinator:
    return CITestCoordinator(
        resamples=args.resamples,
        seed=args.seed,
        mode=_mode(args),
        sidedness=args.sided,
        progress=args.progress,
    )


def format_table(report: Dict) -> str:
    """Таблица результатов для человека"""
    lines = [f"{'statistic':<16} {'T':>12} {'p-value':>10}  sidedness"]
    for r in report['results']:
        if r['success']:
            lines.append(f"{r['statistic_kind']:<16} {r['observed']:>12.6g} {r['p_value']:>10.5g}  {r['sidedness']}")
        else:
            lines.append(f"{r['statistic_kind']:<16} {'-':>12} {'-':>10}  ERROR: {r['error']}")
    diagnostics = report['diagnostics']
    lines.append(f"KS(u)={diagnostics['ks_u']:.4f}  KS(v)={diagnostics['ks_v']:.4f}  "
                 f"h_y={report['estimator']['bandwidth_y']:.6g}  h_z={report['estimator']['bandwidth_z']:.6g}")
    return "\n".join(lines)


def _results_frame(report: Dict) -> pd.DataFrame:
    rows = []
    for r in report['results']:
        rows.append({
            'statistic_kind': r['statistic_kind'],
            'observed': r.get('observed'),
            'p_value': r.get('p_value'),
            'sidedness': r.get('sidedness'),
            'mode': r.get('mode'),
            'resamples': r.get('resamples'),
            'seed': r.get('seed'),
            'error': r.get('error', ''),
        })
    return pd.DataFrame(rows)


def _emit_json(data: Dict, out: Optional[str], filename: str) -> None:
    if out:
        save_json(data, Path(out) / filename)
    else:
        print(json.dumps(data, ensure_ascii=False, indent=2))


def _emit_frame(df: pd.DataFrame, out: Optional[str], filename: str, fmt: str) -> None:
    if fmt == 'json':
        _emit_json(json.loads(df.to_json(orient='records', double_precision=15)), out,
                   Path(filename).with_suffix('.json').name)
    elif out:
        save_frame_csv(df, Path(out) / filename)
    else:
        sys.stdout.write(df.to_csv(index=False, float_format=CSV_FLOAT_FORMAT))


# ============= Commands =============

def cmd_transform(args) -> int:
    sample, config = _load(args)
    coordinator = CITestCoordinator()
    pseudo = coordinator.transform(sample, config)
    diagnostics = transform_diagnostics(pseudo)
    print(f"KS(u)={diagnostics['ks_u']:.4f}  KS(v)={diagnostics['ks_v']:.4f}", file=sys.stderr)

    if (args.format or 'csv') == 'csv':
        if args.out:
            save_pseudo_csv(pseudo, Path(args.out) / 'pseudo.csv', sample)
        else:
            sys.stdout.write(pseudo.to_frame(sample).to_csv(index=False, float_format=CSV_FLOAT_FORMAT))
    else:
        _emit_json({
            'input': args.data,
            'estimator': config.to_dict(),
            'diagnostics': diagnostics,
            'statistics': coordinator.compute_values(pseudo),
            'u': pseudo.u.tolist(),
            'v': pseudo.v.tolist(),
        }, args.out, 'pseudo.json')
    return 0


def cmd_test(args) -> int:
    statistics = _statistics(args)
    sample, config = _load(args)
    coordinator = _coordinator(args)
    report = coordinator.compare_statistics(
        sample, config, statistics, input_description=args.data, include_timings=args.timings)
    print(format_table(report), file=sys.stderr)

    if (args.format or 'json') == 'json':
        _emit_json(report, args.out, 'report.json')
    else:
        _emit_frame(_results_frame(report), args.out, 'results.csv', 'csv')
    return 0 if report['summary']['failed'] == 0 else 1


def _sim_config(args, **changes) -> SimConfig:
    return SimConfig(
        n=args.n,
        noise_ratio=args.noise_ratio,
        sigma0=args.sigma0,
        grid_m=args.grid_m,
        seed=args.seed,
        fixed_functions=args.fixed_functions,
        **changes,
    )


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    common = dict(resamples=args.resamples, statistic=args.stat, alpha=args.alpha,
                  n_jobs=args.n_jobs, progress=args.progress)

    if args.experiment == 'power':
        table = run_power_study(cfg, parse_floats(args.rho_grid), args.replications, **common)
    elif args.experiment == 'grid':
        table = run_study_grid(cfg, parse_floats(args.rho_grid), args.replications,
                               n_values=[int(n) for n in parse_floats(args.n_values)],
                               noise_ratios=parse_floats(args.lambdas), **common)
    elif args.experiment == 'estimation':
        table = run_estimation_effect(cfg, args.replications,
                                      n_values=[int(n) for n in parse_floats(args.n_values)],
                                      statistic=args.stat, n_jobs=args.n_jobs)
    elif args.experiment == 'uniformity':
        table = pd.DataFrame([run_uniformity_check(cfg, args.replications)])
    else:
        raise ValueError(f"Неизвестный эксперимент: {args.experiment}")

    print(table.to_string(index=False), file=sys.stderr)
    _emit_frame(table, args.out, f"{args.experiment}.csv", args.format or 'csv')
    return 0


def cmd_bandwidth_sweep(args) -> int:
    if not args.bandwidths:
        args.subparser.error("нужно задать --bandwidths")
    table = run_bandwidth_robustness(
        _sim_config(args), parse_floats(args.bandwidths), args.replications,
        resamples=args.resamples, statistic=args.stat, alpha=args.alpha,
        n_jobs=args.n_jobs, progress=args.progress)
    print(table.to_string(index=False), file=sys.stderr)
    _emit_frame(table, args.out, 'bandwidth.csv', args.format or 'csv')
    return 0


def cmd_reproduce_digoxin(args) -> int:
    statistics = _statistics(args)
    out = Path(args.out or DIGOXIN_OUT)
    sample = digoxin_dataset()
    config = build_estimator_config(sample)
    coordinator = _coordinator(args)
    pseudo = coordinator.transform(sample, config)
    report = coordinator.compare_statistics(
        sample, config, statistics, input_description='digoxin',
        include_timings=args.timings, pseudo=pseudo)

    outside = outside_reference(report)
    report['outside_reference'] = outside
    save_json(report, out / 'report.json')
    save_pseudo_csv(pseudo, out / 'pseudo.csv', sample)
    save_sample_csv(sample, out / 'raw.csv')
    print(format_table(report), file=sys.stderr)

    if outside:
        logger.warning(f"p-values outside the reference tolerance: {', '.join(outside)}; "
                       f"writing sensitivity report")
        sensitivity = coordinator.sensitivity_report(sample, statistics)
        save_json(sensitivity, out / 'sensitivity.json')
        for row in sensitivity['rows']:
            if 'error' in row:
                continue
            print(f"  {row['statistic_kind']:<16} {row['estimator']}-stat loo={row['leave_one_out']!s:<5} "
                  f"{row['sidedness']:<9} p={row['p_value']:.5g}", file=sys.stderr)
    return 0 if report['summary']['failed'] == 0 else 1


# ============= Entry point =============

def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subparsers = build_parser()

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            apply_config(subparsers, load_config_file(known.config))
        except (OSError, ValueError, yaml.YAMLError) as e:
            parser.error(str(e))

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )

    try:
        return args.handler(args)
    except (PartialCopulaError, ValueError, OSError) as e:
        logger.error(str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
