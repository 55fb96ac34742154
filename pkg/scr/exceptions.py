"""
exceptions.py - Ошибки пакета проверки условной независимости.
Все доменные ошибки одновременно являются ValueError, чтобы вызывающий код
мог ловить их так же, как обычные ошибки аргументов.
"""

from typing import Optional


class PartialCopulaError(Exception):
    """Базовый класс для всех ошибок пакета"""


class DegenerateSpreadError(PartialCopulaError, ValueError):
    """Нулевой разброс данных (например, все X одинаковые)"""


class DegenerateWeightsError(PartialCopulaError, ValueError):
    """Сумма весов ядра обнулилась: все данные слишком далеко от точки запроса"""

    def __init__(self, message: str, row: Optional[int] = None):
        if row is not None:
            message = f"{message} (строка {row})"
        super().__init__(message)
        self.row = row


class DegenerateVarianceError(PartialCopulaError, ValueError):
    """Нулевая дисперсия одного из векторов"""


class BudgetExceededError(PartialCopulaError, ValueError):
    """Перебор превышает заданный бюджет"""


class DatasetFormatError(PartialCopulaError, ValueError):
    """Ошибка формата входного файла с указанием строки и столбца"""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        location = []
        if row is not None:
            location.append(f"строка {row}")
        if column is not None:
            location.append(f"столбец '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class MissingColumnError(DatasetFormatError):
    """В файле нет обязательного столбца"""

    def __init__(self, column: str, available: Optional[list] = None):
        message = f"Отсутствует обязательный столбец '{column}'"
        if available:
            message += f"; доступны: {', '.join(map(str, available))}"
        super().__init__(message)
        self.column = column
