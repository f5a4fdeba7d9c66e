import numpy as np
import pytest

from ratiobound.core import InstanceVolume


def random_volume(rng, n=50, labeled=True, id="v"):
    g_a = rng.random(n)
    g_b = np.maximum(g_a, rng.random(n))
    y_a = y_b = None
    if labeled:
        y_b = rng.random(n) < 0.6
        y_b[0] = True
        y_a = y_b & (rng.random(n) < 0.5)
    return InstanceVolume(id, g_a, g_b, y_a, y_b)


def bernoulli_volume(rng, n, p_b, r, id="b"):
    """Binary predictions: x ~ Bern(p_b), y = x * Bern(r); labels equal predictions."""
    x = rng.random(n) < p_b
    y = x & (rng.random(n) < r)
    return InstanceVolume(id, y.astype(float), x.astype(float), y, x)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = lines[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
