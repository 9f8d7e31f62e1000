import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from amltriage.synth import SynthConfig, synthesize  # noqa: E402

SMALL = dict(n_accounts=1500, n_days=70, n_rings=8, ring_span_days=25, ring_activity_days=8, background_rate=0.08)


@pytest.fixture(scope="session")
def small_config():
    return SynthConfig(seed=3, **SMALL)


@pytest.fixture(scope="session")
def small_alerted(small_config):
    alerted, _ = synthesize(small_config)
    return alerted


@pytest.fixture(scope="session")
def small_dataset(small_alerted):
    from amltriage.pipeline import Dataset

    return Dataset.from_transactions(small_alerted)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.TITLES):
        if n in mod.VERDICTS:
            ok, detail = mod.VERDICTS[n]
            terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {mod.TITLES[n]}  [{detail}]")
        else:
            terminalreporter.write_line(f"criterion {n:2d} NOT RUN  {mod.TITLES[n]}")
