"""
Общие настройки pytest: модули лежат в scr/ и импортируются напрямую
"""

import sys
from pathlib import Path

# Add src directory to path
src_path = Path(__file__).parent / "scr"
sys.path.insert(0, str(src_path))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: долгие проверки методом Монте-Карло (-m 'not slow')")
