import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_unit(rng, m, size=None):
    x = rng.standard_normal((size, m) if size else m)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def cap_points(rng, m, n, spread=0.4, center=None):
    """Points within a small cap, so that the Fréchet mean is unique."""
    c = center if center is not None else random_unit(rng, m)
    x = c + spread * rng.standard_normal((n, m)) / np.sqrt(m)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: dict[int, list[str]] = {}


def record_acceptance(criterion: int, ok: bool, detail: str, label: str = "criterion"):
    tag = "PASS" if ok else "FAIL"
    line = f"{label} {criterion}: {tag}  {detail}" if label == "criterion" else f"{label}: {detail}"
    ACCEPTANCE_LINES.setdefault(criterion, []).append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance")
    for c in sorted(ACCEPTANCE_LINES):
        for line in ACCEPTANCE_LINES[c]:
            terminalreporter.write_line(line)
