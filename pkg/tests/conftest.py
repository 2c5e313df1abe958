import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_VERDICTS: dict[str, list[tuple[bool, str]]] = {}


@pytest.fixture
def verdict():
    """Record (criterion, passed, detail); asserted by the caller."""

    def record(criterion: str, passed: bool, detail: str) -> bool:
        _VERDICTS.setdefault(criterion, []).append((bool(passed), detail))
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS):
        parts = _VERDICTS[key]
        ok = all(p for p, _ in parts)
        details = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} ({details})")
