from pathlib import Path

import pytest

from joinmi.table import TwoColumnTable
from joinmi.types import ValueType

DATA_DIR = Path(__file__).parent / "data"
MINI_CORPUS = DATA_DIR / "mini_corpus"


def example_tables():
    """Training table keyed [a, a, b, c] and candidate table with repeated keys."""
    train = TwoColumnTable(["a", "a", "b", "c"], [10.0, 11.0, 20.0, 30.0], ValueType.NUMERIC,
                           name="train")
    cand = TwoColumnTable(["a", "b", "b", "b", "c", "c", "c"], [1, 2, 2, 5, 0, 3, 3],
                          ValueType.NUMERIC, name="cand")
    return train, cand


def skewed_table():
    """100 rows: keys a..e once each, then f 95 times."""
    keys = list("abcde") + ["f"] * 95
    return TwoColumnTable(keys, [float(i) for i in range(100)], ValueType.NUMERIC, name="skewed")


@pytest.fixture
def example():
    return example_tables()


@pytest.fixture
def skewed():
    return skewed_table()


@pytest.fixture(scope="session")
def mini_corpus():
    return MINI_CORPUS


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with the measured values."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], "PASS" if outcome == "passed" else "FAIL",
                              props.get("detail", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in sorted(lines, key=lambda x: (len(x[0].split()[0]) > 1, x[0])):
        terminalreporter.write_line(f"{status}  {label}: {detail}")
