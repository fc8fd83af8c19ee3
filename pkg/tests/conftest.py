import pytest
from hypothesis import HealthCheck, settings

from pqofh.kem import default_registry

settings.register_profile(
    "pqofh", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.load_profile("pqofh")


@pytest.fixture(scope="session")
def registry():
    return default_registry()


_CRITERIA = {}


class _Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None
        if not ok:
            self.detail = f"{self.detail} {exc_type.__name__}: {exc}".strip()
        line = f"criterion {self.number} {'PASS' if ok else 'FAIL'} {self.title}: {self.detail}"
        _CRITERIA[self.number] = line
        print("\n" + line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
