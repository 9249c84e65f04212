import numpy as np
import pytest

from viewcast.dataset import DAY, Dataset, Series, VideoRecord


def make_record(vid, views, step=DAY, social=None, published_at=1_600_000_000):
    """Record with views sampled every `step` seconds starting at t=0."""
    t = np.arange(len(views)) * step
    series = {"views": Series(t, views)}
    for metric, vals in (social or {}).items():
        series[metric] = Series(np.arange(len(vals)) * step, vals)
    return VideoRecord(vid, published_at, series)


@pytest.fixture
def write_csv(tmp_path):
    def _write(text, name="data.csv"):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p
    return _write


@pytest.fixture
def small_dataset():
    recs = [make_record(f"v{i}", np.cumsum(np.arange(1, 32) * (i + 1)) * 1.0) for i in range(5)]
    return Dataset(tuple(recs), "day", "small")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
