import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from satsurv import SurvivalSample

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def samples(draw, min_size=1, max_size=30, max_time=10.0):
    """Random right-censored samples with strictly positive times."""
    n = draw(st.integers(min_size, max_size))
    times = draw(
        st.lists(
            st.floats(0.01, max_time, allow_nan=False, allow_infinity=False), min_size=n, max_size=n
        )
    )
    events = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    return SurvivalSample(np.array(times), np.array(events))


def random_sample(rng, n, rate=0.35, censor_rate=0.1):
    t = rng.exponential(1 / rate, n)
    c = rng.exponential(1 / censor_rate, n)
    return SurvivalSample(np.minimum(t, c), (t <= c).astype(int))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_ipd(path, sample):
    lines = ["time,status"] + [f"{float(t)!r},{int(d)}" for t, d in zip(sample.times, sample.events)]
    path.write_text("\n".join(lines) + "\n")
    return path


# (criterion, passed, detail) lines recorded by the acceptance suite
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
