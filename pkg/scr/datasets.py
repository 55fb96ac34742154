"""
datasets.py - Загрузка и сохранение данных.
Встроенный набор digoxin, чтение CSV с диагностикой строк/столбцов,
экспорт псевдонаблюдений, таблиц и JSON-отчетов.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from exceptions import DatasetFormatError, MissingColumnError
from transform import PseudoSample, Sample

logger = logging.getLogger(__name__)


REQUIRED_COLUMNS = ('x', 'y', 'z')
# 15 significant digits in every exported CSV
CSV_FLOAT_FORMAT = '%.15g'

PathLike = Union[str, Path]


# ============= Digoxin clearance data =============
# Halkin et al. (1975), 35 consecutive patients.
# x: creatinine clearance, y: digoxin clearance (ml/min/1.73 m^2), z: urine flow (ml/min).
# Rows in printed order, one column-group after another.

DIGOXIN_ROWS = (
    (19.5, 17.5, 0.74), (24.7, 34.8, 0.43), (26.5, 11.4, 0.11), (31.1, 29.3, 1.48),
    (31.3, 13.9, 0.97), (31.8, 31.6, 1.12), (34.1, 20.7, 1.77), (36.6, 34.1, 0.70),
    (42.4, 25.0, 0.93), (42.8, 47.4, 2.50), (44.2, 31.8, 0.89), (49.7, 36.1, 0.52),
    (51.3, 22.7, 0.33), (55.0, 30.7, 0.80), (55.9, 42.5, 1.02), (61.2, 42.4, 0.56),
    (63.1, 61.1, 0.93), (63.7, 38.2, 0.44), (66.8, 37.5, 0.50), (72.4, 50.1, 0.97),
    (80.9, 50.2, 1.02), (82.0, 50.0, 0.95), (82.7, 31.8, 0.76), (87.9, 55.4, 1.06),
    (101.5, 110.6, 1.38), (105.0, 114.4, 1.85), (110.5, 69.3, 2.25), (114.2, 84.8, 1.76),
    (117.8, 63.9, 1.60), (122.6, 76.1, 0.88), (127.9, 112.8, 1.70), (135.6, 82.2, 0.98),
    (136.0, 46.8, 0.94), (153.5, 137.7, 1.76), (201.1, 76.1, 0.87),
)


def digoxin_dataset() -> Sample:
    """Встроенный набор данных digoxin (35 строк)"""
    return Sample.from_rows(DIGOXIN_ROWS)


# ============= CSV ingestion =============

def parse_column_map(spec: Optional[str]) -> Dict[str, str]:
    """
    Разбор строки вида 'x=creat,y=digoxin,z=urine'.

    Returns:
        Словарь {роль: имя столбца в файле}
    """
    if not spec:
        return {}
    mapping = {}
    for item in spec.split(','):
        role, sep, name = item.partition('=')
        role, name = role.strip().lower(), name.strip()
        if not sep or role not in REQUIRED_COLUMNS or not name:
            raise ValueError(f"Неверное сопоставление столбцов: '{item}' (ожидается x=..., y=..., z=...)")
        mapping[role] = name
    return mapping


def _parse_cell(value: str, row: int, column: str) -> float:
    text = value.strip()
    if not text:
        raise DatasetFormatError("Пустая ячейка", row=row, column=column)
    try:
        number = float(text)
    except ValueError:
        raise DatasetFormatError(f"Нечисловое значение '{value}'", row=row, column=column) from None
    if not np.isfinite(number):
        raise DatasetFormatError(f"Неконечное значение '{value}'", row=row, column=column)
    return number


def load_csv(path: PathLike, columns: Optional[Dict[str, str]] = None) -> Sample:
    """
    Прочитать CSV с заголовком в Sample.

    Args:
        path: Путь к файлу
        columns: Переименование ролей, например {'x': 'creat'}

    Returns:
        Sample в порядке строк файла

    Raises:
        MissingColumnError: нет обязательного столбца
        DatasetFormatError: пустой файл, пустая или нечисловая ячейка
            (строки нумеруются с 1, не считая заголовка)
    """
    path = Path(path)
    columns = columns or {}
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DatasetFormatError(f"Файл пуст: {path}") from None
    except pd.errors.ParserError as e:
        raise DatasetFormatError(f"Не удалось разобрать CSV {path}: {e}") from None

    df.columns = [str(c).strip() for c in df.columns]
    if df.empty:
        raise DatasetFormatError(f"В файле нет строк данных: {path}")

    values = {}
    for role in REQUIRED_COLUMNS:
        name = columns.get(role, role)
        if name not in df.columns:
            raise MissingColumnError(name, available=list(df.columns))
        values[role] = [_parse_cell(cell, i + 1, name) for i, cell in enumerate(df[name])]

    sample = Sample(**values)
    logger.info(f"Loaded {sample.n} rows from {path}")
    return sample


def load_dataset(source: str, columns: Optional[Dict[str, str]] = None) -> Sample:
    """'digoxin' -> встроенный набор, иначе путь к CSV"""
    if source == 'digoxin':
        return digoxin_dataset()
    return load_csv(source, columns)


def load_pseudo_csv(path: PathLike) -> PseudoSample:
    """Прочитать псевдонаблюдения (столбцы u, v; x если есть)"""
    df = pd.read_csv(path, float_precision='round_trip')
    for name in ('u', 'v'):
        if name not in df.columns:
            raise MissingColumnError(name, available=list(df.columns))
    x = df['x'].to_numpy(dtype=float) if 'x' in df.columns else None
    return PseudoSample(u=df['u'].to_numpy(dtype=float), v=df['v'].to_numpy(dtype=float), x=x)


# ============= Export =============

def save_frame_csv(df: pd.DataFrame, path: PathLike) -> Path:
    """Сохранить таблицу в CSV (15 значащих цифр)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info(f"Saved {len(df)} rows to {path}")
    return path


def save_sample_csv(sample: Sample, path: PathLike) -> Path:
    return save_frame_csv(sample.to_frame(), path)


def save_pseudo_csv(pseudo: PseudoSample, path: PathLike, sample: Optional[Sample] = None) -> Path:
    """Columns x,u,v, or x,y,z,u,v when the source sample is given"""
    return save_frame_csv(pseudo.to_frame(sample), path)


def save_json(report: Dict, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(report, f, ensure_ascii=False, indent=2)
    logger.info(f"Report saved to {path}")
    return path
